#include "khid/sequence.hpp"

#include <cmath>

#include "khid/error.hpp"
#include "khid/text.hpp"

namespace khid::sequence {

bool is_reserved(std::string_view token) {
  return token == kMetaToken || token == kThreadToken || token == kReplyToken || token == kSepToken ||
         token == kClsToken;
}

std::string to_string(Format f) {
  switch (f) {
    case Format::R1: return "R1";
    case Format::R2: return "R2";
    case Format::R3: return "R3";
    case Format::R4: return "R4";
  }
  return "R3";
}

Format format_from_string(std::string_view s) {
  if (s == "R1" || s == "r1") return Format::R1;
  if (s == "R2" || s == "r2") return Format::R2;
  if (s == "R3" || s == "r3") return Format::R3;
  if (s == "R4" || s == "r4") return Format::R4;
  throw FormatError("unknown sequence format \"" + std::string(s) + "\" (expected R1..R4)");
}

bool uses_thread_topics(Format f) { return f == Format::R2 || f == Format::R4; }
bool uses_reply_topics(Format f) { return f == Format::R3 || f == Format::R4; }

std::string UserSequence::text() const { return text::join(rendered); }

namespace {

// Content tokens with reserved markers removed, so the rendered sequence
// always splits back into its three sections.
std::vector<std::string> content_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : text::split_whitespace(s)) {
    if (!is_reserved(t)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

UserSequence build_sequence(const corpus::UserRecord& user, std::string_view threads,
                            const std::optional<std::string>& thread_topics, std::string_view replies,
                            const std::optional<std::string>& reply_topics, Format format) {
  if (uses_thread_topics(format) && !thread_topics) {
    throw FormatError(to_string(format) + " requires thread topics for user " + user.user_id);
  }
  if (uses_reply_topics(format) && !reply_topics) {
    throw FormatError(to_string(format) + " requires reply topics for user " + user.user_id);
  }
  UserSequence seq;
  seq.user_id = user.user_id;
  seq.format = format;

  std::vector<std::string> meta = content_tokens(text::preprocess_text(user.username));
  for (auto count : {user.thread_count, user.post_count, user.reputation}) {
    meta.emplace_back(kSepToken);
    meta.push_back(std::to_string(count));
  }
  auto thread = content_tokens(uses_thread_topics(format) ? std::string_view(*thread_topics) : threads);
  auto reply = content_tokens(uses_reply_topics(format) ? std::string_view(*reply_topics) : replies);
  seq.metadata = text::join(meta);
  seq.thread = text::join(thread);
  seq.reply = text::join(reply);

  seq.rendered.reserve(meta.size() + thread.size() + reply.size() + 3);
  seq.rendered.emplace_back(kMetaToken);
  seq.rendered.insert(seq.rendered.end(), meta.begin(), meta.end());
  seq.rendered.emplace_back(kThreadToken);
  seq.rendered.insert(seq.rendered.end(), thread.begin(), thread.end());
  seq.rendered.emplace_back(kReplyToken);
  seq.rendered.insert(seq.rendered.end(), reply.begin(), reply.end());
  return seq;
}

Sections split_sections(std::span<const std::string> tokens) {
  if (tokens.empty() || tokens.front() != kMetaToken) throw FormatError("sequence must begin with [M]");
  Sections s;
  s.metadata.push_back(tokens.front());
  std::vector<std::string>* current = &s.metadata;
  int seen_t = 0, seen_r = 0;
  for (const auto& tok : tokens.subspan(1)) {
    if (tok == kMetaToken) {
      throw FormatError("sequence has more than one [M] marker");
    } else if (tok == kThreadToken) {
      if (++seen_t > 1 || seen_r) throw FormatError("sequence has a misplaced [T] marker");
      current = &s.thread;
    } else if (tok == kReplyToken) {
      if (++seen_r > 1 || !seen_t) throw FormatError("sequence has a misplaced [R] marker");
      current = &s.reply;
    } else if (tok == kSepToken && current != &s.metadata) {
      throw FormatError("[SEP] outside the metadata section");
    }
    current->push_back(tok);
  }
  if (seen_t != 1 || seen_r != 1) throw FormatError("sequence must contain exactly one [T] and one [R]");
  return s;
}

void TokenBudget::validate() const {
  if (metadata < 1 || thread < 1 || reply < 1) throw ContractError("token budgets must be positive");
  if (total() > 512) throw ContractError("token budgets exceed 512 in total");
}

std::vector<std::string> truncate_sequence(std::span<const std::string> tokens, const TokenBudget& budget) {
  budget.validate();
  auto s = split_sections(tokens);
  std::vector<std::string> out;
  auto keep = [&out](const std::vector<std::string>& section, int limit) {
    const auto n = std::min<std::size_t>(section.size(), static_cast<std::size_t>(limit));
    out.insert(out.end(), section.begin(), section.begin() + static_cast<long>(n));
  };
  keep(s.metadata, budget.metadata);
  keep(s.thread, budget.thread);
  keep(s.reply, budget.reply);
  return out;
}

std::vector<std::vector<std::string>> segment_sequence(std::span<const std::string> tokens, int max_len,
                                                       std::string_view classifier) {
  if (max_len < 2 || max_len > 512) throw ContractError("segment length must be in [2, 512]");
  const std::size_t chunk = static_cast<std::size_t>(max_len - 1);
  std::vector<std::vector<std::string>> out;
  std::size_t pos = 0;
  do {
    std::vector<std::string> seg;
    seg.emplace_back(classifier);
    const std::size_t end = std::min(tokens.size(), pos + chunk);
    seg.insert(seg.end(), tokens.begin() + static_cast<long>(pos), tokens.begin() + static_cast<long>(end));
    out.push_back(std::move(seg));
    pos = end;
  } while (pos < tokens.size());
  return out;
}

std::string to_string(Handling h) {
  switch (h) {
    case Handling::Truncation: return "truncation";
    case Handling::HierMean: return "hier_mean";
    case Handling::HierMax: return "hier_max";
    case Handling::HierSelfAttention: return "hier_self_attention";
  }
  return "truncation";
}

Handling handling_from_string(std::string_view s) {
  if (s == "truncation") return Handling::Truncation;
  if (s == "hier_mean") return Handling::HierMean;
  if (s == "hier_max") return Handling::HierMax;
  if (s == "hier_self_attention") return Handling::HierSelfAttention;
  throw FormatError("unknown handling method \"" + std::string(s) +
                    "\" (expected truncation, hier_mean, hier_max or hier_self_attention)");
}

Eigen::VectorXd AttentionPool::weights(const nn::Mat& segments) const {
  if (query.size() != segments.cols()) {
    throw ShapeError("attention query has dimension " + std::to_string(query.size()) + ", segments have " +
                     std::to_string(segments.cols()));
  }
  Eigen::VectorXd scores = segments * query / std::sqrt(static_cast<double>(segments.cols()));
  scores.array() -= scores.maxCoeff();
  Eigen::VectorXd w = scores.array().exp();
  return w / w.sum();
}

Eigen::VectorXd AttentionPool::pool(const nn::Mat& segments) const {
  return segments.transpose() * weights(segments);
}

Eigen::VectorXd pool_segments(const nn::Mat& segment_vectors, Handling method, const AttentionPool* attention) {
  if (segment_vectors.rows() == 0) throw ContractError("pool_segments: no segment vectors");
  switch (method) {
    case Handling::Truncation:
    case Handling::HierMean:
      return segment_vectors.colwise().mean().transpose();
    case Handling::HierMax:
      return segment_vectors.colwise().maxCoeff().transpose();
    case Handling::HierSelfAttention:
      if (!attention) throw ContractError("pool_segments: self-attention pooling needs a query");
      return attention->pool(segment_vectors);
  }
  return {};
}

AttentionPool fit_attention_pool(const std::vector<nn::Mat>& segments, std::span<const int> labels,
                                 std::span<const int> train, const AttentionFitOptions& options) {
  if (segments.empty()) throw ContractError("fit_attention_pool: no users");
  const auto dim = segments.front().cols();
  auto query = nn::Tensor::parameter(nn::Mat::Zero(dim, 1));
  auto probe = nn::Tensor::parameter(nn::glorot_uniform(dim, 2, options.seed, 0xa77e));
  auto bias = nn::Tensor::parameter(nn::Mat::Zero(1, 2));
  nn::AdamW opt({query, probe, bias}, {.weight_decay = 0.0});

  std::vector<int> targets;
  std::array<double, 2> counts{0, 0};
  for (int i : train) {
    targets.push_back(labels[i]);
    counts[static_cast<std::size_t>(labels[i])] += 1;
  }
  if (counts[0] == 0 || counts[1] == 0) return AttentionPool{Eigen::VectorXd::Zero(dim)};
  const double n = static_cast<double>(train.size());
  std::vector<double> class_weight{n / (2 * counts[0]), n / (2 * counts[1])};
  std::vector<int> rows(train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<nn::Tensor> pooled;
    pooled.reserve(train.size());
    for (int i : train) {
      auto keys = nn::Tensor::constant(segments[static_cast<std::size_t>(i)]);
      auto alpha = nn::softmax(nn::scale(nn::matmul(keys, query), inv_sqrt_d), 0);
      pooled.push_back(nn::matmul(nn::transpose(alpha), keys));
    }
    auto logits = nn::add(nn::matmul(nn::concat(pooled, 0), probe), bias);
    auto loss = nn::cross_entropy(logits, rows, targets, class_weight);
    opt.zero_grad();
    nn::backward(loss);
    opt.step(options.learning_rate);
  }
  return AttentionPool{Eigen::Map<const Eigen::VectorXd>(query.value().data(), dim)};
}

}  // namespace khid::sequence
