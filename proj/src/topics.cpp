#include "khid/topics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

#include "khid/embed.hpp"
#include "khid/error.hpp"

namespace khid::topics {

std::string to_string(DocKind k) { return k == DocKind::Thread ? "thread" : "reply"; }

DocKind doc_kind_from_string(const std::string& s) {
  if (s == "thread") return DocKind::Thread;
  if (s == "reply") return DocKind::Reply;
  throw FormatError("unknown document kind \"" + s + "\" (expected thread or reply)");
}

DocumentSet collect_documents(const corpus::ForumCorpus& c, DocKind kind) {
  corpus::CorpusIndex index(c);
  DocumentSet docs;
  docs.kind = kind;
  if (kind == DocKind::Thread) {
    for (const auto& t : c.threads) {
      std::string text = t.title;
      if (const auto* op = index.opening_post(t.thread_id); op && !op->body.empty()) {
        if (!text.empty()) text += ' ';
        text += op->body;
      }
      docs.doc_ids.push_back(t.thread_id);
      docs.texts.push_back(std::move(text));
      docs.owners.push_back(t.author_id);
    }
  } else {
    for (const auto& p : c.posts) {
      if (index.is_opening_post(p)) continue;
      docs.doc_ids.push_back(p.post_id);
      docs.texts.push_back(p.body);
      docs.owners.push_back(p.author_id);
    }
  }
  return docs;
}

PcaFit fit_pca(const Mat& data, Eigen::Index target_dim) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n < 1) throw ShapeError("reduce_dimensions: need at least one row");
  if (target_dim < 0 || target_dim > d) {
    throw ShapeError("reduce_dimensions: target_dim " + std::to_string(target_dim) + " exceeds input dimension " +
                     std::to_string(d));
  }
  PcaFit fit;
  fit.mean = data.colwise().mean();
  Mat centered = data.rowwise() - fit.mean;

  Mat components(d, target_dim);
  Eigen::VectorXd variance(target_dim);
  const double denom = static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  bool done = false;
  if (n < d && target_dim < n) {
    // Small sample: eigen-decompose the n x n Gram matrix instead. Falls
    // through to the covariance route when a requested component has no
    // variance, since the Gram route cannot complete the basis.
    Mat gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(gram);
    const double top = std::max(es.eigenvalues()(n - 1), 0.0);
    done = true;
    for (Eigen::Index k = 0; k < target_dim && done; ++k) {
      const Eigen::Index src = n - 1 - k;
      const double ev = es.eigenvalues()(src);
      if (!(ev > 1e-12 * top) || top == 0.0) {
        done = false;
        break;
      }
      variance(k) = ev / denom;
      Eigen::VectorXd v = centered.transpose() * es.eigenvectors().col(src);
      components.col(k) = v / v.norm();
    }
  }
  if (!done) {
    Mat cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    for (Eigen::Index k = 0; k < target_dim; ++k) {
      const Eigen::Index src = d - 1 - k;
      variance(k) = std::max(es.eigenvalues()(src), 0.0) / denom;
      components.col(k) = es.eigenvectors().col(src);
    }
  }
  for (Eigen::Index k = 0; k < target_dim; ++k) {
    Eigen::Index arg;
    components.col(k).cwiseAbs().maxCoeff(&arg);
    if (components(arg, k) < 0) components.col(k) *= -1.0;
  }
  fit.projected = centered * components;
  fit.components = std::move(components);
  fit.variance = std::move(variance);
  return fit;
}

Mat PcaReducer::reduce(const Mat& data, Eigen::Index target_dim) const { return fit_pca(data, target_dim).projected; }

Mat reduce_dimensions(const Mat& data, Eigen::Index target_dim, const Reducer& reducer) {
  if (target_dim > data.cols()) {
    throw ShapeError("reduce_dimensions: target_dim " + std::to_string(target_dim) + " exceeds input dimension " +
                     std::to_string(data.cols()));
  }
  if (data.rows() < 1) throw ShapeError("reduce_dimensions: need at least one row");
  return reducer.reduce(data, target_dim);
}

const ClusterTopic& TopicModel::cluster(int id) const {
  for (const auto& c : clusters) {
    if (c.cluster_id == id) return c;
  }
  throw LookupError("unknown cluster " + std::to_string(id));
}

double TopicModel::weight(const std::string& term, int cluster_id) const {
  const auto& c = cluster(cluster_id);
  auto it = c.weights.find(term);
  return it == c.weights.end() ? 0.0 : it->second;
}

std::vector<std::string> top_terms(const TopicModel& model, int cluster_id, int k) {
  const auto& c = model.cluster(cluster_id);
  if (k <= 0) return {};
  std::vector<std::pair<std::string, double>> ranked(c.weights.begin(), c.weights.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < k; ++i) out.push_back(ranked[i].first);
  return out;
}

UserTopics user_topics(const corpus::ForumCorpus& c, const embed::EmbeddingProvider& provider, DocKind kind,
                       const TopicParams& params, const Reducer& reducer) {
  UserTopics result;
  result.documents = collect_documents(c, kind);
  for (const auto& u : c.users) result.per_user[u.user_id];
  const auto& docs = result.documents;
  if (docs.size() == 0) return result;

  const auto dim = static_cast<Eigen::Index>(provider.dimension());
  Mat embeddings(static_cast<Eigen::Index>(docs.size()), dim);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto tokens = provider.tokenize(docs.texts[i]);
    auto row = static_cast<Eigen::Index>(i);
    if (tokens.empty()) {
      embeddings.row(row).setZero();
    } else {
      embeddings.row(row) = embed::mean_pool(provider.encode_tokens(tokens)).transpose();
    }
  }
  const Eigen::Index target = std::min<Eigen::Index>(params.target_dim, dim);
  Mat reduced = reduce_dimensions(embeddings, target, reducer);
  result.assignment = cluster_density(reduced, params.min_cluster_size);
  try {
    result.model = ctfidf_weights(docs, result.assignment);
  } catch (const ModelError&) {
    return result;
  }
  result.model.params = params;
  result.model.params.reducer = reducer.name();
  result.has_model = true;

  std::map<int, std::vector<std::string>> cluster_terms;
  for (const auto& cl : result.model.clusters) {
    cluster_terms[cl.cluster_id] = top_terms(result.model, cl.cluster_id, params.top_k);
  }
  std::map<std::string, std::map<std::string, double>> gathered;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const int label = result.assignment.labels[i];
    if (label < 0) continue;
    auto& terms = gathered[docs.owners[i]];
    for (const auto& t : cluster_terms[label]) {
      double w = result.model.weight(t, label);
      auto [it, inserted] = terms.emplace(t, w);
      if (!inserted) it->second = std::max(it->second, w);
    }
  }
  for (auto& [user, terms] : gathered) {
    std::vector<std::pair<std::string, double>> ranked(terms.begin(), terms.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    auto& out = result.per_user[user];
    for (auto& [t, _] : ranked) out.push_back(t);
  }
  return result;
}

io::json topic_model_to_json(const TopicModel& model, int top_k) {
  io::json doc = io::document("khid.topics");
  doc["parameters"] = {{"reducer", model.params.reducer},
                       {"target_dim", model.params.target_dim},
                       {"min_cluster_size", model.params.min_cluster_size},
                       {"top_k", model.params.top_k},
                       {"seed", model.params.seed}};
  doc["average_words"] = model.average_words;
  doc["clusters"] = io::json::array();
  for (const auto& c : model.clusters) {
    io::json terms = io::json::array();
    for (const auto& t : top_terms(model, c.cluster_id, top_k)) {
      terms.push_back({{"term", t}, {"weight", model.weight(t, c.cluster_id)}});
    }
    doc["clusters"].push_back({{"cluster_id", c.cluster_id}, {"size", c.size}, {"terms", std::move(terms)}});
  }
  return doc;
}

}  // namespace khid::topics
