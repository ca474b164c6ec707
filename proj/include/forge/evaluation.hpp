#pragma once

#include "forge/grid.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace forge {

/// Dice overlap of region k. 1.0 when k is absent from both maps, 0.0 when
/// absent from exactly one.
double dice(const LabelMap& pred, const LabelMap& truth, int64_t region);

/// Maps source region id -> reported region id; unmapped regions keep their id.
/// Regions mapped to the same id are scored on the union of their masks.
using RegionMerge = std::map<int64_t, int64_t>;

struct SubjectDice {
  std::map<int64_t, double> per_region;
  double mean = 0.0;  // over foreground regions
};

struct DiceStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

struct DiceReport {
  std::vector<SubjectDice> subjects;
  std::map<int64_t, DiceStats> per_region;  // across subjects
  DiceStats aggregate;                      // over per-subject means
};

void to_json(nlohmann::json& j, const DiceReport& r);
void from_json(const nlohmann::json& j, DiceReport& r);

DiceStats summarize(const std::vector<double>& values);

/// Scores each prediction against its truth over `regions` (background 0 is
/// never part of the subject mean). An empty `regions` list means 1..K-1.
DiceReport evaluate(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                    std::vector<int64_t> regions = {}, const RegionMerge& merge = {});

/// "mean(std) & min & max" with one decimal each.
std::string format_table_row(double mean, double std, double min, double max);
/// The same for a report, with values scaled to percent.
std::string format_table_row(const DiceReport& report);

/// One row per (subject, region) plus a per-subject mean row.
void write_report_csv(const DiceReport& report, const std::filesystem::path& path);
/// Per-region mean and std across subjects, for bar charts.
void write_region_bars(const DiceReport& report, const std::filesystem::path& path);

struct TableRow {
  std::string method;
  DiceReport report;
};

/// Plain-text table with Mean(std), Min and Max columns in percent.
std::string format_table(const std::vector<TableRow>& rows);

}  // namespace forge
