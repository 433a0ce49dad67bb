#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "khid/io.hpp"

namespace khid {

// Binary classification scores with class 1 (key hacker) as the positive
// class. F1 is 0 when precision + recall is 0.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Metrics evaluate(std::span<const int> predictions, std::span<const int> labels);

io::json metrics_to_json(const Metrics& m);

struct Split {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Seeded per-class shuffle, then each class is cut by `fractions`
// (train, val, remainder to test). Indices with label < 0 are left out.
Split stratified_split(std::span<const int> labels, std::array<double, 2> fractions, std::uint64_t seed);

}  // namespace khid
