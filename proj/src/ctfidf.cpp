#include <cmath>

#include "khid/error.hpp"
#include "khid/text.hpp"
#include "khid/topics.hpp"

namespace khid::topics {

TopicModel ctfidf_weights(const DocumentSet& docs, const ClusterAssignment& assignment) {
  if (assignment.labels.size() != docs.size()) {
    throw ShapeError("ctfidf_weights: " + std::to_string(assignment.labels.size()) + " labels for " +
                     std::to_string(docs.size()) + " documents");
  }
  std::map<int, ClusterTopic> clusters;
  TopicModel model;
  std::int64_t total_words = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const int label = assignment.labels[i];
    if (label < 0) continue;
    if (label >= assignment.cluster_count) {
      throw ContractError("ctfidf_weights: label " + std::to_string(label) + " >= cluster count");
    }
    auto& c = clusters[label];
    c.cluster_id = label;
    ++c.size;
    for (auto& w : text::count_tokens(docs.texts[i])) {
      ++c.word_count;
      ++total_words;
      ++model.term_frequency[w];
      ++c.term_counts[std::move(w)];
    }
  }
  if (clusters.empty()) throw ModelError("ctfidf_weights: no non-noise cluster to describe");

  model.average_words = static_cast<double>(total_words) / static_cast<double>(clusters.size());
  for (const auto& [term, _] : model.term_frequency) model.vocabulary.push_back(term);
  for (auto& [id, c] : clusters) {
    for (const auto& [term, tf] : c.term_counts) {
      const double fx = static_cast<double>(model.term_frequency.at(term));
      c.weights[term] = static_cast<double>(tf) * std::log(1.0 + model.average_words / fx);
    }
    model.clusters.push_back(std::move(c));
  }
  return model;
}

}  // namespace khid::topics
