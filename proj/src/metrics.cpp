#include "khid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "khid/error.hpp"
#include "khid/rng.hpp"

namespace khid {

Metrics evaluate(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
      throw ContractError("evaluate: labels and predictions must be binary");
    }
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    if (p && y) ++m.tp;
    else if (p) ++m.fp;
    else if (y) ++m.fn;
    else ++m.tn;
  }
  const auto total = static_cast<double>(labels.size());
  m.accuracy = total > 0 ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

io::json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},             {"fp", m.fp},               {"fn", m.fn},         {"tn", m.tn}};
}

Split stratified_split(std::span<const int> labels, std::array<double, 2> fractions, std::uint64_t seed) {
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[0] + fractions[1] > 1.0 + 1e-12) {
    throw ContractError("split fractions must be non-negative and sum to at most 1");
  }
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) by_class[labels[i]].push_back(static_cast<int>(i));
  }
  Split s;
  for (auto& [cls, members] : by_class) {
    Rng rng(seed, 0x5b11u + static_cast<std::uint64_t>(cls));
    rng.shuffle(members);
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<long>(n_train));
    s.val.insert(s.val.end(), members.begin() + static_cast<long>(n_train),
                 members.begin() + static_cast<long>(n_train + n_val));
    s.test.insert(s.test.end(), members.begin() + static_cast<long>(n_train + n_val), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace khid
