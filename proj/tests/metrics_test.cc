#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "noisegate/errors.h"
#include "noisegate/metrics.h"
#include "test_util.h"

namespace noisegate {
namespace {

TEST(Similarity, Examples) {
  // One deletion over a 21-character reference.
  EXPECT_NEAR(similarity("she had her dark suit", "she had er dark suit"), 100.0 * 20.0 / 21.0,
              1e-9);
  EXPECT_NEAR(similarity("she had her dark suit", "she had er dark suit"), 95.24, 0.005);
  EXPECT_DOUBLE_EQ(similarity("abc", "abc"), 100.0);
  EXPECT_DOUBLE_EQ(similarity("abc", "xyz"), 0.0);
  EXPECT_DOUBLE_EQ(similarity("ab", "abcd"), 50.0);
  EXPECT_THROW(similarity("", "x"), EmptyInput);
  EXPECT_DOUBLE_EQ(similarity(Transcript{"yes", "t"}, Transcript{"yes", "t"}), 100.0);
}

TEST(Similarity, BoundedInPercentRange) {
  for (const char* a : {"a", "hello", "the quick brown fox"}) {
    for (const char* b : {"", "a", "hello world", "zzzzzzzzzzzzzzzzzzzzzzzzzzzzzzzz"}) {
      const double s = similarity(a, b);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 100.0);
    }
  }
}

TEST(EditDistanceRatio, DiagnosticForm) {
  EXPECT_DOUBLE_EQ(*edit_distance_ratio("abcd", "abxx", "abcx"), 2.0);
  EXPECT_FALSE(edit_distance_ratio("same", "other", "same").has_value());
}

std::vector<EvalRecord> records(const std::vector<std::pair<std::string, std::string>>& tt) {
  std::vector<EvalRecord> out;
  for (const auto& [truth, target] : tt) {
    out.push_back({"p", truth, target.empty() ? std::nullopt : std::optional(target), "", ""});
  }
  return out;
}

TEST(AsrAvg, CountsTargetHits) {
  const auto r = records({{"yes", "no"}, {"up", "down"}, {"go", "stop"}, {"on", "off"}});
  const std::vector<std::string> defended = {"no", "up", "stop", "left"};
  EXPECT_DOUBLE_EQ(asr_avg(r, defended), 50.0);
  EXPECT_THROW(asr_avg({}, {}), EmptyInput);
  EXPECT_THROW(asr_avg(r, std::vector<std::string>{"no"}), LengthMismatch);
  EXPECT_THROW(asr_avg(records({{"yes", ""}}), std::vector<std::string>{"yes"}), InvalidArgument);
}

TEST(Acc, CountsTruthHits) {
  const auto r = records({{"yes", ""}, {"up", ""}, {"go", ""}});
  EXPECT_NEAR(acc(r, std::vector<std::string>{"yes", "down", "go"}), 200.0 / 3.0, 1e-12);
  EXPECT_THROW(acc({}, {}), EmptyInput);
}

TEST(Report, FormattingAndCsv) {
  EXPECT_EQ(format_fixed2(95.238095), "95.24");
  EXPECT_EQ(format_fixed2(-0.001), "0.00");
  EXPECT_EQ(format_fixed2(2.125), "2.12");
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");

  MetricsReport r{{"kind", "intensity"}, {"asr_avg", "acc"}, {}};
  r.add({"gaussian", "200"}, {2.13, 90.8});
  r.add({"uniform", "10"}, {std::nullopt, 100.0});
  EXPECT_EQ(render_csv(r),
            "kind,intensity,asr_avg,acc\n"
            "gaussian,200,2.13,90.80\n"
            "uniform,10,,100.00\n");
  EXPECT_THROW(r.add({"x"}, {1.0, 2.0}), InvalidArgument);
  EXPECT_THROW(r.add({"x", "y"}, {1.0}), InvalidArgument);
  ASSERT_NE(r.find({"uniform", "10"}), nullptr);
  EXPECT_EQ(r.find({"uniform", "11"}), nullptr);
  EXPECT_EQ(r.column("acc"), 1u);
  EXPECT_THROW(r.column("nope"), InvalidArgument);
}

TEST(Report, EmptyReportIsHeaderOnly) {
  EXPECT_EQ(render_csv(MetricsReport{{"method"}, {"asr_avg", "acc"}, {}}), "method,asr_avg,acc\n");
}

TEST(Report, EmitIsDeterministic) {
  testing::TempDir dir("report");
  MetricsReport r{{"method"}, {"asr_avg", "acc"}, {}};
  r.add({"none"}, {83.8095, 95.0});
  r.add({"lowpass:4000:101"}, {10.0 / 3.0, 88.0});
  emit_report(r, dir / "a.csv");
  emit_report(r, dir / "b.csv");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "a.csv"), "method,asr_avg,acc\nnone,83.81,95.00\nlowpass:4000:101,3.33,88.00\n");
  EXPECT_THROW(emit_report(r, dir / "missing" / "x.csv"), IoError);
}

}  // namespace
}  // namespace noisegate
