#include "forge/evaluation.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace forge {
namespace {

double dice_masks(const torch::Tensor& a, const torch::Tensor& b) {
  const auto na = a.sum().item<int64_t>();
  const auto nb = b.sum().item<int64_t>();
  if (na == 0 && nb == 0) return 1.0;
  const auto inter = (a & b).sum().item<int64_t>();
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

void json_stats(nlohmann::json& j, const DiceStats& s) {
  j = {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

DiceStats stats_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("min").get<double>(),
          j.at("max").get<double>()};
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "cannot open for writing");
  out.precision(17);
  return out;
}

}  // namespace

double dice(const LabelMap& pred, const LabelMap& truth, int64_t region) {
  require_same_shape(pred.shape(), truth.shape(), "dice");
  require(region >= 0 && region < std::max(pred.num_classes(), truth.num_classes()),
          "dice: region id out of range");
  return dice_masks(pred.tensor() == region, truth.tensor() == region);
}

DiceStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("summarize: no values");
  DiceStats s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

DiceReport evaluate(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                    std::vector<int64_t> regions, const RegionMerge& merge) {
  if (predictions.empty() || truths.empty()) throw ConfigError("evaluate: no subjects");
  if (predictions.size() != truths.size())
    throw ConfigError("evaluate: prediction and truth counts differ");
  if (regions.empty())
    for (int64_t k = 1; k < truths.front().num_classes(); ++k) regions.push_back(k);

  // reported id -> source ids
  std::map<int64_t, std::vector<int64_t>> groups;
  for (auto k : regions) {
    require(k > 0, "evaluate: background cannot be scored");
    auto it = merge.find(k);
    groups[it == merge.end() ? k : it->second].push_back(k);
  }

  DiceReport report;
  std::map<int64_t, std::vector<double>> by_region;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const auto& p = predictions[s].tensor();
    const auto& t = truths[s].tensor();
    require_same_shape(predictions[s].shape(), truths[s].shape(), "evaluate");
    SubjectDice subject;
    double total = 0.0;
    for (const auto& [id, members] : groups) {
      auto pm = torch::zeros_like(p, torch::kBool);
      auto tm = torch::zeros_like(t, torch::kBool);
      for (auto k : members) {
        pm |= p == k;
        tm |= t == k;
      }
      const double d = dice_masks(pm, tm);
      subject.per_region[id] = d;
      by_region[id].push_back(d);
      total += d;
    }
    subject.mean = total / static_cast<double>(groups.size());
    report.subjects.push_back(std::move(subject));
  }
  for (const auto& [id, values] : by_region) report.per_region[id] = summarize(values);
  std::vector<double> means;
  for (const auto& s : report.subjects) means.push_back(s.mean);
  report.aggregate = summarize(means);
  return report;
}

void to_json(nlohmann::json& j, const DiceReport& r) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : r.subjects) {
    nlohmann::json regions = nlohmann::json::object();
    for (const auto& [k, d] : s.per_region) regions[std::to_string(k)] = d;
    subjects.push_back({{"per_region", regions}, {"mean", s.mean}});
  }
  nlohmann::json per_region = nlohmann::json::object();
  for (const auto& [k, st] : r.per_region) json_stats(per_region[std::to_string(k)], st);
  nlohmann::json aggregate;
  json_stats(aggregate, r.aggregate);
  j = {{"subjects", subjects}, {"per_region", per_region}, {"aggregate", aggregate}};
}

void from_json(const nlohmann::json& j, DiceReport& r) {
  r = {};
  for (const auto& s : j.at("subjects")) {
    SubjectDice sd;
    for (const auto& [k, d] : s.at("per_region").items()) sd.per_region[std::stoll(k)] = d.get<double>();
    sd.mean = s.at("mean").get<double>();
    r.subjects.push_back(std::move(sd));
  }
  for (const auto& [k, st] : j.at("per_region").items()) r.per_region[std::stoll(k)] = stats_from(st);
  r.aggregate = stats_from(j.at("aggregate"));
}

std::string format_table_row(double mean, double std, double min, double max) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.1f(%.1f) & %.1f & %.1f", mean, std, min, max);
  return buf;
}

std::string format_table_row(const DiceReport& report) {
  const auto& a = report.aggregate;
  return format_table_row(100.0 * a.mean, 100.0 * a.std, 100.0 * a.min, 100.0 * a.max);
}

void write_report_csv(const DiceReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "subject,region,dice\n";
  for (std::size_t s = 0; s < report.subjects.size(); ++s) {
    for (const auto& [k, d] : report.subjects[s].per_region) out << s << ',' << k << ',' << d << '\n';
    out << s << ",mean," << report.subjects[s].mean << '\n';
  }
}

void write_region_bars(const DiceReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "region,mean,std,min,max\n";
  for (const auto& [k, st] : report.per_region)
    out << k << ',' << st.mean << ',' << st.std << ',' << st.min << ',' << st.max << '\n';
}

std::string format_table(const std::vector<TableRow>& rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::ostringstream out;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  out << pad("Method") << "Mean(std) & Min & Max\n";
  for (const auto& r : rows) out << pad(r.method) << format_table_row(r.report) << '\n';
  return out.str();
}

}  // namespace forge
