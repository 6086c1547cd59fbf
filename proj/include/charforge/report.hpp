#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "charforge/error.hpp"
#include "charforge/training.hpp"

namespace charforge {

/// One line of the comparison table: model, accuracy, loss, iterations.
struct ReportRow {
  std::string dataset;
  std::string model;
  std::optional<double> accuracy;
  std::optional<double> loss;
  std::optional<std::size_t> iterations;
};

/// Summarizes a run by its last epoch's validation metrics and its epoch count.
inline ReportRow row_from_metrics(const std::filesystem::path& csv, const std::string& dataset,
                                  const std::string& model = "this run") {
  const auto rows = read_metrics_csv(csv);
  if (rows.empty()) throw SchemaError("metrics CSV '" + csv.string() + "' has no data rows");
  const EpochMetrics& last = rows.back();
  return {dataset, model, last.val_acc, last.val_loss, rows.size()};
}

/// Reference rows from a JSON sidecar:
///   [{"dataset": "...", "model": "...", "accuracy": 0.758, "loss": null, "iterations": 160}]
inline std::vector<ReportRow> read_literature_rows(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("literature sidecar '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw SchemaError("literature sidecar must be a JSON array");
  std::vector<ReportRow> rows;
  try {
    for (const auto& item : j) {
      ReportRow r;
      r.dataset = item.value("dataset", "");
      r.model = item.at("model").get<std::string>();
      if (item.contains("accuracy") && !item["accuracy"].is_null()) r.accuracy = item["accuracy"].get<double>();
      if (item.contains("loss") && !item["loss"].is_null()) r.loss = item["loss"].get<double>();
      if (item.contains("iterations") && !item["iterations"].is_null()) {
        r.iterations = item["iterations"].get<std::size_t>();
      }
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed literature row: ") + e.what());
  }
  return rows;
}

namespace detail {

inline std::string fmt4(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string fmt_count(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

/// Groups rows by dataset in order of first appearance, keeping input order within a group.
inline std::vector<ReportRow> grouped(const std::vector<ReportRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.dataset) == order.end()) order.push_back(r.dataset);
  }
  std::vector<ReportRow> out;
  for (const auto& d : order) {
    for (const auto& r : rows) {
      if (r.dataset == d) out.push_back(r);
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_markdown(const std::vector<ReportRow>& rows) {
  std::string out = "| Dataset | Model | Accuracy | Loss | Iterations |\n";
  out += "|---|---|---:|---:|---:|\n";
  for (const auto& r : detail::grouped(rows)) {
    out += "| " + r.dataset + " | " + r.model + " | " + detail::fmt4(r.accuracy) + " | " +
           detail::fmt4(r.loss) + " | " + detail::fmt_count(r.iterations) + " |\n";
  }
  return out;
}

inline std::string render_csv(const std::vector<ReportRow>& rows) {
  std::string out = "dataset,model,accuracy,loss,iterations\n";
  for (const auto& r : detail::grouped(rows)) {
    out += detail::csv_field(r.dataset) + "," + detail::csv_field(r.model) + "," +
           detail::fmt4(r.accuracy) + "," + detail::fmt4(r.loss) + "," +
           detail::fmt_count(r.iterations) + "\n";
  }
  return out;
}

}  // namespace charforge
