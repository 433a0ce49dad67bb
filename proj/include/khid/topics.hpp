#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "khid/corpus.hpp"
#include "khid/io.hpp"
#include "khid/tensor.hpp"

namespace khid::embed {
class EmbeddingProvider;
}

namespace khid::topics {

using nn::Mat;

enum class DocKind { Thread, Reply };
std::string to_string(DocKind k);
DocKind doc_kind_from_string(const std::string& s);

// Parallel lists; texts are already preprocessed.
struct DocumentSet {
  std::vector<std::string> doc_ids;
  std::vector<std::string> texts;
  std::vector<std::string> owners;
  DocKind kind = DocKind::Thread;

  std::size_t size() const { return texts.size(); }
};

DocumentSet collect_documents(const corpus::ForumCorpus& c, DocKind kind);

// ---- dimensionality reduction --------------------------------------------

class Reducer {
 public:
  virtual ~Reducer() = default;
  virtual std::string name() const = 0;
  virtual Mat reduce(const Mat& data, Eigen::Index target_dim) const = 0;
};

struct PcaFit {
  Eigen::RowVectorXd mean;
  Mat components;  // d x k, orthonormal columns by decreasing variance
  Eigen::VectorXd variance;
  Mat projected;   // n x k
};

// Principal components of the centered data. Each component's sign is fixed
// so its largest-magnitude entry is positive.
PcaFit fit_pca(const Mat& data, Eigen::Index target_dim);

class PcaReducer final : public Reducer {
 public:
  std::string name() const override { return "pca"; }
  Mat reduce(const Mat& data, Eigen::Index target_dim) const override;
};

// Throws ShapeError when target_dim exceeds the input width.
Mat reduce_dimensions(const Mat& data, Eigen::Index target_dim, const Reducer& reducer = PcaReducer{});

// ---- density clustering ----------------------------------------------------

struct ClusterAssignment {
  std::vector<int> labels;  // -1 is noise
  int cluster_count = 0;
};

// Hierarchical density clustering: core distance to the min_cluster_size-th
// nearest point (the point itself included), mutual-reachability minimum
// spanning tree, condensed single-linkage hierarchy and excess-of-mass
// selection. Edges of equal weight merge in one step, so the result does not
// depend on input order. Cluster ids are numbered by each cluster's smallest
// member index.
ClusterAssignment cluster_density(const Mat& points, int min_cluster_size);

// ---- class-based TF-IDF ----------------------------------------------------

struct ClusterTopic {
  int cluster_id = 0;
  std::int64_t size = 0;        // documents
  std::int64_t word_count = 0;  // words after count tokenization
  std::map<std::string, std::int64_t> term_counts;
  std::map<std::string, double> weights;  // only terms with tf > 0
};

struct TopicParams {
  std::string reducer = "pca";
  int target_dim = 5;
  int min_cluster_size = 10;
  int top_k = 10;
  std::uint64_t seed = 0;
};

struct TopicModel {
  std::vector<ClusterTopic> clusters;  // ordered by cluster id
  std::vector<std::string> vocabulary; // sorted
  std::map<std::string, std::int64_t> term_frequency;  // f_x over all clusters
  double average_words = 0.0;                            // A
  TopicParams params;

  const ClusterTopic& cluster(int id) const;
  double weight(const std::string& term, int cluster_id) const;
};

// W[x,c] = tf[x,c] * ln(1 + A / f[x]), single pass over the documents.
// Noise documents are ignored. Throws ModelError when no cluster remains.
TopicModel ctfidf_weights(const DocumentSet& docs, const ClusterAssignment& assignment);

// Largest-weight terms, ties broken lexicographically.
std::vector<std::string> top_terms(const TopicModel& model, int cluster_id, int k);

struct UserTopics {
  DocumentSet documents;
  ClusterAssignment assignment;
  TopicModel model;
  bool has_model = false;  // false when every document was noise
  std::map<std::string, std::vector<std::string>> per_user;
};

UserTopics user_topics(const corpus::ForumCorpus& c, const embed::EmbeddingProvider& provider, DocKind kind,
                       const TopicParams& params, const Reducer& reducer = PcaReducer{});

io::json topic_model_to_json(const TopicModel& model, int top_k);

}  // namespace khid::topics
