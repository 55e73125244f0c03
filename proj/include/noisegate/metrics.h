#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisegate/recognition.h"

namespace noisegate {

// Matching ratio between transcripts before and after a transform, in percent:
// max(0, 1 - D(after, before) / max(|before|, |after|)) * 100.
double similarity(const Transcript& before, const Transcript& after);
double similarity(const std::string& before, const std::string& after);

// D(transformed, reference) / D(plain, reference): the ratio form of the
// similarity measure, kept as a diagnostic. nullopt when D(plain, ref) = 0.
std::optional<double> edit_distance_ratio(const std::string& reference,
                                          const std::string& transformed,
                                          const std::string& plain);

struct EvalRecord {
  std::string path;
  std::string truth;                  // y: true label or reference text
  std::optional<std::string> target;  // y*: present only for adversarial records
  std::string transcript_plain;       // g(x)
  std::string transcript_transformed; // g(T(x))
};

// Percentage of adversarial records whose defended prediction still equals
// their attack target.
double asr_avg(std::span<const EvalRecord> records, std::span<const std::string> defended);

// Percentage of clean records whose defended prediction equals the truth.
double acc(std::span<const EvalRecord> records, std::span<const std::string> defended);

struct ReportRow {
  std::vector<std::string> keys;
  std::vector<std::optional<double>> values;  // nullopt renders as an empty cell
};

// Table keyed by string columns carrying numeric value columns. Values are
// written with two decimals.
struct MetricsReport {
  std::vector<std::string> key_columns;
  std::vector<std::string> value_columns;
  std::vector<ReportRow> rows;

  void add(std::vector<std::string> keys, std::vector<std::optional<double>> values);
  const ReportRow* find(const std::vector<std::string>& keys) const;
  // Index of a value column; throws InvalidArgument when absent.
  size_t column(const std::string& name) const;
};

std::string format_fixed2(double v);
std::string csv_escape(const std::string& field);
std::string render_csv(const MetricsReport& report);
void emit_report(const MetricsReport& report, const std::filesystem::path& path);

// Writes `text` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace noisegate
