#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Table of per-step (or per-epoch) loss values, written as CSV.
class LossTrace {
 public:
  LossTrace() = default;
  explicit LossTrace(std::vector<std::string> columns);

  void append(std::vector<double> row);
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t size() const noexcept { return rows_.size(); }

  /// All values of a named column.
  std::vector<double> column(std::string_view name) const;
  /// Mean of the first / last `count` values of a column.
  double head_mean(std::string_view name, std::size_t count) const;
  double tail_mean(std::string_view name, std::size_t count) const;

  void write_csv(const std::filesystem::path& path) const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

/// Throws TrainingDivergedError unless `loss` is finite.
void check_finite(const torch::Tensor& loss, std::string_view trainer, int64_t step);

/// Seeds torch's global generator, used for parameter initialisation.
void seed_parameter_init(uint64_t seed);

}  // namespace forge
