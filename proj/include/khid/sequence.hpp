#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "khid/corpus.hpp"
#include "khid/tensor.hpp"

namespace khid::sequence {

inline constexpr std::string_view kMetaToken = "[M]";
inline constexpr std::string_view kThreadToken = "[T]";
inline constexpr std::string_view kReplyToken = "[R]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kClsToken = "[CLS]";

bool is_reserved(std::string_view token);

// R1 full threads + full replies, R2 thread topics + full replies,
// R3 full threads + reply topics, R4 both topic lists.
enum class Format { R1, R2, R3, R4 };
std::string to_string(Format f);
Format format_from_string(std::string_view s);
bool uses_thread_topics(Format f);
bool uses_reply_topics(Format f);

struct UserSequence {
  std::string user_id;
  Format format = Format::R3;
  std::string metadata;  // "username [SEP] threads [SEP] posts [SEP] reputation"
  std::string thread;    // contents of the [T] slot
  std::string reply;     // contents of the [R] slot
  std::vector<std::string> rendered;

  std::string text() const;
};

// Throws FormatError when `format` needs a topic text that is absent.
UserSequence build_sequence(const corpus::UserRecord& user, std::string_view threads,
                            const std::optional<std::string>& thread_topics, std::string_view replies,
                            const std::optional<std::string>& reply_topics, Format format);

// A rendered token list split at its markers. Each section starts with its
// marker token.
struct Sections {
  std::vector<std::string> metadata;
  std::vector<std::string> thread;
  std::vector<std::string> reply;
};

// Throws FormatError unless the tokens read [M] ... [T] ... [R] ... with
// exactly one of each marker and [SEP] only in the metadata section.
Sections split_sections(std::span<const std::string> tokens);

// Per-section limits, each counting the section's marker token.
struct TokenBudget {
  int metadata = 34;
  int thread = 239;
  int reply = 239;

  int total() const { return metadata + thread + reply; }
  void validate() const;
};

// Keeps the head of every section within its budget.
std::vector<std::string> truncate_sequence(std::span<const std::string> tokens, const TokenBudget& budget = {});

// Consecutive chunks of at most max_len - 1 tokens, each framed by a leading
// classifier token. An empty input yields one framed, empty segment.
std::vector<std::vector<std::string>> segment_sequence(std::span<const std::string> tokens, int max_len = 512,
                                                       std::string_view classifier = kClsToken);

enum class Handling { Truncation, HierMean, HierMax, HierSelfAttention };
std::string to_string(Handling h);
Handling handling_from_string(std::string_view s);

// Attention pooling with one query vector; key and value are the segment
// embeddings themselves.
struct AttentionPool {
  Eigen::VectorXd query;

  // softmax(K q / sqrt(d)) weights for the rows of `segments`.
  Eigen::VectorXd weights(const nn::Mat& segments) const;
  Eigen::VectorXd pool(const nn::Mat& segments) const;
};

// Rows of `segment_vectors` are per-segment embeddings. Throws ContractError
// on an empty list. `attention` is required for HierSelfAttention.
Eigen::VectorXd pool_segments(const nn::Mat& segment_vectors, Handling method,
                              const AttentionPool* attention = nullptr);

struct AttentionFitOptions {
  int epochs = 30;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

// Learns the query jointly with a linear probe on the labelled users in
// `train`. `segments[i]` holds user i's segment embeddings.
AttentionPool fit_attention_pool(const std::vector<nn::Mat>& segments, std::span<const int> labels,
                                 std::span<const int> train, const AttentionFitOptions& options);

}  // namespace khid::sequence
