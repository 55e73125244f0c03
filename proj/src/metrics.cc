#include "noisegate/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "noisegate/errors.h"

namespace noisegate {

double similarity(const std::string& before, const std::string& after) {
  if (before.empty()) throw EmptyInput("similarity needs a non-empty reference transcript");
  const double d = static_cast<double>(levenshtein(after, before));
  const double longest = static_cast<double>(std::max(before.size(), after.size()));
  return std::max(0.0, 1.0 - d / longest) * 100.0;
}

double similarity(const Transcript& before, const Transcript& after) {
  return similarity(before.text, after.text);
}

std::optional<double> edit_distance_ratio(const std::string& reference,
                                          const std::string& transformed,
                                          const std::string& plain) {
  const size_t denom = levenshtein(plain, reference);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(levenshtein(transformed, reference)) / static_cast<double>(denom);
}

double asr_avg(std::span<const EvalRecord> records, std::span<const std::string> defended) {
  if (records.empty()) throw EmptyInput("ASR_avg needs at least one adversarial example");
  if (records.size() != defended.size()) {
    throw LengthMismatch("one defended prediction per record is required");
  }
  size_t hits = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (!records[i].target) {
      throw InvalidArgument("record " + records[i].path + " has no attack target");
    }
    hits += defended[i] == *records[i].target;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

double acc(std::span<const EvalRecord> records, std::span<const std::string> defended) {
  if (records.empty()) throw EmptyInput("ACC needs at least one example");
  if (records.size() != defended.size()) {
    throw LengthMismatch("one defended prediction per record is required");
  }
  size_t hits = 0;
  for (size_t i = 0; i < records.size(); ++i) hits += defended[i] == records[i].truth;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

void MetricsReport::add(std::vector<std::string> keys, std::vector<std::optional<double>> values) {
  if (keys.size() != key_columns.size() || values.size() != value_columns.size()) {
    throw InvalidArgument("report row does not match the report columns");
  }
  rows.push_back({std::move(keys), std::move(values)});
}

const ReportRow* MetricsReport::find(const std::vector<std::string>& keys) const {
  for (const auto& row : rows) {
    if (row.keys == keys) return &row;
  }
  return nullptr;
}

size_t MetricsReport::column(const std::string& name) const {
  const auto it = std::find(value_columns.begin(), value_columns.end(), name);
  if (it == value_columns.end()) throw InvalidArgument("no report column '" + name + "'");
  return static_cast<size_t>(it - value_columns.begin());
}

std::string format_fixed2(double v) {
  // Avoid "-0.00".
  if (std::fabs(v) < 0.005) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_csv(const MetricsReport& report) {
  std::string out;
  bool first = true;
  for (const auto& c : report.key_columns) {
    if (!first) out += ',';
    out += csv_escape(c);
    first = false;
  }
  for (const auto& c : report.value_columns) {
    if (!first) out += ',';
    out += csv_escape(c);
    first = false;
  }
  out += '\n';
  for (const auto& row : report.rows) {
    first = true;
    for (const auto& k : row.keys) {
      if (!first) out += ',';
      out += csv_escape(k);
      first = false;
    }
    for (const auto& v : row.values) {
      if (!first) out += ',';
      if (v && std::isfinite(*v)) out += format_fixed2(*v);
      first = false;
    }
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path) {
  write_text_file(path, render_csv(report));
}

}  // namespace noisegate
