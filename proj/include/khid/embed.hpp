#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "khid/io.hpp"
#include "khid/metrics.hpp"
#include "khid/sequence.hpp"
#include "khid/tensor.hpp"

namespace khid::embed {

using nn::Mat;
using Eigen::VectorXd;

inline constexpr std::size_t kDimension = 768;
inline constexpr std::uint64_t kDefaultHashSeed = 0x6b68696455ULL;

// Feature extractor contract. Implementations must be safe for concurrent
// const calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // Reserved markers ([M], [T], [R], [SEP], [CLS]) come back as single tokens.
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  // One row per encoder output token. The row count may differ from the
  // input length for sub-word encoders.
  virtual Mat encode_tokens(const std::vector<std::string>& tokens) const = 0;
  // Representation of one classifier-framed segment, used by hierarchical
  // pooling. Contextual encoders return the classifier state.
  virtual VectorXd segment_vector(const std::vector<std::string>& framed_segment) const;
  // True when the encoding of a token depends on its neighbours.
  virtual bool contextual() const { return true; }
};

// Context-free stand-in: every token maps to a fixed vector derived from a
// seeded hash, entries in [-1, 1].
VectorXd hash_embed_token(std::string_view token, std::uint64_t seed = kDefaultHashSeed,
                          std::size_t dimension = kDimension);

class HashProvider final : public EmbeddingProvider {
 public:
  explicit HashProvider(std::uint64_t seed = kDefaultHashSeed, std::size_t dimension = kDimension)
      : seed_(seed), dimension_(dimension) {}

  std::string name() const override { return "hash"; }
  std::size_t dimension() const override { return dimension_; }
  // Whitespace split, lowercased except for reserved markers.
  std::vector<std::string> tokenize(std::string_view text) const override;
  Mat encode_tokens(const std::vector<std::string>& tokens) const override;
  // A context-free classifier state would be constant, so the segment is
  // represented by the mean of its content tokens instead.
  VectorXd segment_vector(const std::vector<std::string>& framed_segment) const override;
  bool contextual() const override { return false; }

 private:
  std::uint64_t seed_;
  std::size_t dimension_;
};

struct RemoteOptions {
  std::string base_url = "http://127.0.0.1:8765";
  std::string model = "default";
  std::size_t max_batch = 64;
  double timeout_seconds = 60.0;
};

struct HealthInfo {
  std::string model;
  std::size_t dimension = 0;
  std::size_t max_sequence_length = 0;
};

struct PooledResult {
  VectorXd vector;
  bool truncated = false;
};

// Client for the embedding service (JSON over HTTP, see README for the wire
// format). Responses are checked for id bijection, dimension and finiteness.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteOptions options);

  std::string name() const override { return "remote:" + options_.model; }
  std::size_t dimension() const override { return kDimension; }
  std::vector<std::string> tokenize(std::string_view text) const override;
  Mat encode_tokens(const std::vector<std::string>& tokens) const override;
  VectorXd segment_vector(const std::vector<std::string>& framed_segment) const override;

  HealthInfo health() const;
  // Server-side pooled vectors for (id, text) items, batched by max_batch.
  std::map<std::string, PooledResult> encode_pooled(const std::vector<std::pair<std::string, std::string>>& items) const;

  static io::json make_request(const std::vector<std::pair<std::string, std::string>>& items, const std::string& model,
                               bool pooled);

 private:
  io::json post_embed(const io::json& request) const;
  RemoteOptions options_;
};

// Mean over rows; throws ContractError for an empty matrix.
VectorXd mean_pool(const Mat& token_vectors);

// z = (1/N) sum_j encoder(tokens)_j. Throws ContractError for N = 0.
VectorXd encode_user(const std::vector<std::string>& tokens, const EmbeddingProvider& provider);

// Tokenizes a rendered sequence and reduces it to one vector with the chosen
// long-sequence handling.
VectorXd embed_sequence(const sequence::UserSequence& seq, const EmbeddingProvider& provider,
                        sequence::Handling handling, const sequence::TokenBudget& budget = {},
                        const sequence::AttentionPool* attention = nullptr);

// Per-segment vectors of a rendered sequence, one row per segment.
Mat segment_vectors(const sequence::UserSequence& seq, const EmbeddingProvider& provider);

struct UserEmbedding {
  std::string user_id;
  VectorXd z;
  std::string provider;
  std::string format;
};

// ---- classification head ----------------------------------------------------

// Hidden layers apply affine + leaky-ReLU (dropout on their input during
// training); the last layer is affine into two logits. Row-vector
// convention: a layer maps z to z W + b with W of shape in x out.
struct MlpHead {
  std::vector<nn::Tensor> weights;
  std::vector<nn::Tensor> biases;
  double dropout = 0.1;
  double slope = 0.01;

  static MlpHead create(std::size_t input_dim, const std::vector<int>& hidden, std::uint64_t seed,
                        double dropout = 0.1, double slope = 0.01);

  std::size_t input_dim() const;
  std::vector<nn::Tensor> parameters() const;
  MlpHead clone() const;
  // n x input_dim -> n x 2 logits.
  nn::Tensor logits(const nn::Tensor& inputs, bool training, std::uint64_t seed = 0, std::uint64_t stream = 0) const;
};

// Softmax probabilities for one embedding. Throws ShapeError on mismatch.
VectorXd head_forward(const VectorXd& z, const MlpHead& head);

struct FinetuneConfig {
  int batch_size = 16;
  double learning_rate = 5e-5;
  int epochs = 5;
  double weight_decay = 0.01;
  double warmup_fraction = 0.6;
  double final_lr_factor = 0.1;
  std::array<double, 2> split{0.6, 0.2};  // train, val; test gets the rest
  std::vector<int> hidden{256, 64};
  double dropout = 0.1;
  bool class_weighted = true;

  void validate() const;
  io::json to_json() const;
};

struct FinetuneResult {
  MlpHead head;
  int best_epoch = 0;
  Metrics train, val, test;
  std::vector<double> epoch_train_loss;  // eval-mode loss after each epoch
  std::vector<double> step_train_loss;   // filled when record_steps is set
  std::vector<int> test_predictions;
};

// Trains a fresh head on `split.train`, keeps the epoch with the best
// validation F1 (epoch 0 is the initialization) and scores it on every split.
// Throws DegenerateLabelError when the training labels hold a single class.
FinetuneResult finetune_head(const Mat& features, std::span<const int> labels, const Split& split,
                             const FinetuneConfig& config, std::uint64_t seed, bool record_steps = false);

struct GridEntry {
  FinetuneConfig config;
  double mean_val_f1 = 0, std_val_f1 = 0;
  double mean_accuracy = 0, std_accuracy = 0;  // test
  double mean_f1 = 0, std_f1 = 0;              // test
};

struct GridResult {
  std::vector<GridEntry> entries;  // in grid order
  std::size_t best = 0;
  int runs = 0;

  io::json to_json() const;
};

// Batch size {16, 24} x learning rate {1e-5, 5e-5} x epochs {1, 5}.
std::vector<FinetuneConfig> default_grid();

// Every grid point is trained `runs` times, each on a fresh stratified shuffle.
// Ranked by mean validation F1, then mean test accuracy, then the smaller
// learning rate, then grid order.
GridResult grid_search(const Mat& features, std::span<const int> labels, const std::vector<FinetuneConfig>& grid,
                       int runs, std::uint64_t seed);

}  // namespace khid::embed
