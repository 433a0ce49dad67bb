#include "khid/embed.hpp"

#include "khid/error.hpp"
#include "khid/rng.hpp"
#include "khid/text.hpp"

namespace khid::embed {

VectorXd EmbeddingProvider::segment_vector(const std::vector<std::string>& framed_segment) const {
  Mat states = encode_tokens(framed_segment);
  if (states.rows() == 0) throw ContractError("segment_vector: encoder returned no states");
  return states.row(0).transpose();
}

VectorXd hash_embed_token(std::string_view token, std::uint64_t seed, std::size_t dimension) {
  const std::uint64_t stream = hash_string(token, seed);
  VectorXd v(static_cast<Eigen::Index>(dimension));
  for (std::size_t i = 0; i < dimension; ++i) {
    v(static_cast<Eigen::Index>(i)) = 2.0 * uniform_at(seed, stream, i) - 1.0;
  }
  return v;
}

std::vector<std::string> HashProvider::tokenize(std::string_view text) const {
  auto tokens = text::split_whitespace(text);
  for (auto& t : tokens) {
    if (!sequence::is_reserved(t)) t = text::to_lower(t);
  }
  return tokens;
}

Mat HashProvider::encode_tokens(const std::vector<std::string>& tokens) const {
  Mat out(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(dimension_));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = hash_embed_token(tokens[i], seed_, dimension_).transpose();
  }
  return out;
}

VectorXd HashProvider::segment_vector(const std::vector<std::string>& framed_segment) const {
  std::vector<std::string> content;
  for (const auto& t : framed_segment) {
    if (t != sequence::kClsToken) content.push_back(t);
  }
  if (content.empty()) return VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
  return mean_pool(encode_tokens(content));
}

VectorXd mean_pool(const Mat& token_vectors) {
  if (token_vectors.rows() == 0) throw ContractError("encode error: no token vectors to pool");
  VectorXd sum = VectorXd::Zero(token_vectors.cols());
  for (Eigen::Index i = 0; i < token_vectors.rows(); ++i) sum += token_vectors.row(i).transpose();
  return sum / static_cast<double>(token_vectors.rows());
}

VectorXd encode_user(const std::vector<std::string>& tokens, const EmbeddingProvider& provider) {
  if (tokens.empty()) throw ContractError("encode error: empty token list");
  return mean_pool(provider.encode_tokens(tokens));
}

Mat segment_vectors(const sequence::UserSequence& seq, const EmbeddingProvider& provider) {
  auto tokens = provider.tokenize(seq.text());
  auto segments = sequence::segment_sequence(tokens);
  Mat out(static_cast<Eigen::Index>(segments.size()), static_cast<Eigen::Index>(provider.dimension()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = provider.segment_vector(segments[i]).transpose();
  }
  return out;
}

VectorXd embed_sequence(const sequence::UserSequence& seq, const EmbeddingProvider& provider,
                        sequence::Handling handling, const sequence::TokenBudget& budget,
                        const sequence::AttentionPool* attention) {
  if (handling == sequence::Handling::Truncation) {
    auto tokens = provider.tokenize(seq.text());
    return encode_user(sequence::truncate_sequence(tokens, budget), provider);
  }
  return sequence::pool_segments(segment_vectors(seq, provider), handling, attention);
}

}  // namespace khid::embed
