#include "forge/error.hpp"
#include "forge/evaluation.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <fstream>

using namespace forge;

namespace {

LabelMap labels_from(std::initializer_list<int64_t> values, int64_t k = 3) {
  return LabelMap(torch::tensor(std::vector<int64_t>(values)).view({2, 2, 4}), k);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("dice hand counts") {
  const auto a = labels_from({1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(dice(a, a, 1) == 1.0);
  const auto b = labels_from({0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(dice(a, b, 1) == 0.0);
  const auto c = labels_from({1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0});
  CHECK(dice(a, c, 1) == 0.5);  // 8 and 8 voxels, 4 shared
  CHECK(dice(c, a, 1) == dice(a, c, 1));
  CHECK(dice(a, c, 2) == 1.0);  // absent from both
  const auto d = labels_from({2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(dice(a, d, 2) == 0.0);  // absent from one
  CHECK_THROWS_AS(dice(a, LabelMap(torch::zeros({2, 2, 3}, torch::kInt64), 3), 1), ContractError);
}

TEST_CASE("dice is symmetric and equals one only for identical masks") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  for (int s = 0; s < 20; ++s) {
    const LabelMap p(torch::randint(0, 3, {4, 4, 4}, gen, torch::kInt64), 3);
    const LabelMap t(torch::randint(0, 3, {4, 4, 4}, gen, torch::kInt64), 3);
    for (int64_t k = 0; k < 3; ++k) {
      CHECK(dice(p, t, k) == dice(t, p, k));
      const bool same = torch::equal(p.tensor() == k, t.tensor() == k);
      CHECK((dice(p, t, k) == 1.0) == same);
    }
  }
}

TEST_CASE("aggregate statistics") {
  const auto a = labels_from({1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0}, 2);
  const auto perfect = evaluate({a}, {a});
  CHECK(perfect.aggregate.mean == 1.0);
  CHECK(perfect.aggregate.std == 0.0);
  CHECK(perfect.aggregate.min == 1.0);
  CHECK(perfect.aggregate.max == 1.0);

  const auto s = summarize({0.8, 0.9});
  CHECK(s.mean == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(s.min == 0.8);
  CHECK(s.max == 0.9);
  CHECK(s.std == doctest::Approx(0.05).epsilon(1e-12));

  const auto c = labels_from({1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0}, 2);
  const auto r = evaluate({a, c}, {a, a});
  CHECK(r.subjects[0].mean == 1.0);
  CHECK(r.subjects[1].mean == 0.5);
  CHECK(r.aggregate.mean == 0.75);
  CHECK(r.aggregate.min <= r.aggregate.mean);
  CHECK(r.aggregate.mean <= r.aggregate.max);
  CHECK(r.per_region.at(1).mean == 0.75);
  CHECK(r.subjects[0].per_region.count(0) == 0);

  CHECK_THROWS_AS(evaluate({}, {}), ConfigError);
  CHECK_THROWS_AS(evaluate({a}, {a, a}), ConfigError);
}

TEST_CASE("merged regions are scored on the union of their masks") {
  const auto truth = labels_from({1, 1, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto pred = labels_from({2, 2, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(evaluate({pred}, {truth}).aggregate.mean == 0.0);
  const auto merged = evaluate({pred}, {truth}, {}, {{2, 1}});
  CHECK(merged.aggregate.mean == 1.0);
  CHECK(merged.subjects[0].per_region.size() == 1);
}

TEST_CASE("table formatting and report files") {
  CHECK(format_table_row(85.1, 1.9, 80.2, 87.8) == "85.1(1.9) & 80.2 & 87.8");
  const auto a = labels_from({1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0}, 2);
  const auto r = evaluate({a}, {a});
  CHECK(format_table_row(r) == "100.0(0.0) & 100.0 & 100.0");
  const auto table = format_table({{"baseline", r}, {"ours", r}});
  CHECK(table.find("baseline") != std::string::npos);
  CHECK(table.find("Mean(std) & Min & Max") != std::string::npos);

  TempDir dir("eval");
  write_report_csv(r, dir / "r.csv");
  write_region_bars(r, dir / "bars.csv");
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "subject,region,dice");

  nlohmann::json j = r;
  const auto back = j.get<DiceReport>();
  CHECK(back.aggregate.mean == r.aggregate.mean);
  CHECK(back.subjects.size() == 1);
}

}
