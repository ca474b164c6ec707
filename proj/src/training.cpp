#include "forge/training.hpp"

#include "forge/error.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>

namespace forge {

LossTrace::LossTrace(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void LossTrace::append(std::vector<double> row) {
  require(row.size() == columns_.size(), "LossTrace: row width does not match columns");
  rows_.push_back(std::move(row));
}

std::size_t LossTrace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i] == name) return i;
  throw ContractError("LossTrace: no column named " + std::string(name));
}

std::vector<double> LossTrace::column(std::string_view name) const {
  const auto idx = index_of(name);
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r[idx]);
  return out;
}

double LossTrace::head_mean(std::string_view name, std::size_t count) const {
  const auto values = column(name);
  require(!values.empty(), "LossTrace: empty trace");
  count = std::min(std::max<std::size_t>(count, 1), values.size());
  return std::accumulate(values.begin(), values.begin() + count, 0.0) / count;
}

double LossTrace::tail_mean(std::string_view name, std::size_t count) const {
  const auto values = column(name);
  require(!values.empty(), "LossTrace: empty trace");
  count = std::min(std::max<std::size_t>(count, 1), values.size());
  return std::accumulate(values.end() - count, values.end(), 0.0) / count;
}

void LossTrace::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "cannot open for writing");
  for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

void check_finite(const torch::Tensor& loss, std::string_view trainer, int64_t step) {
  if (!std::isfinite(loss.item<double>())) throw TrainingDivergedError(std::string(trainer), step);
}

void seed_parameter_init(uint64_t seed) { torch::manual_seed(seed); }

}  // namespace forge
