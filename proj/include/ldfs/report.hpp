#pragma once

// Serialization of evaluation reports. All writers are deterministic: fixed
// key order, fixed float formatting, no timestamps.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ldfs/metrics.hpp"

namespace ldfs {

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

void save_report(const std::filesystem::path& file, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& file);

/// report.json, accuracy.csv, scores.csv, gap_curve.csv, nn_table.csv,
/// accuracy.svg and gap_curve.svg under `dir`.
void write_report_bundle(const std::filesystem::path& dir, const EvalReport& report);

/// One row per labelled report for aggregate tables (ablations, seeds).
struct ReportRow {
  std::string label;
  EvalReport report;
};
/// label, DA, DA without source, CC, DS, sphere deviation, average accuracy.
void write_summary_csv(const std::filesystem::path& file, const std::vector<ReportRow>& rows);

/// Fixed "%.6f" rendering used by every CSV and SVG.
std::string format_number(double v);

std::string gap_curve_svg(const std::vector<GapPoint>& curve);
std::string accuracy_svg(const EvalReport& report);

}  // namespace ldfs
