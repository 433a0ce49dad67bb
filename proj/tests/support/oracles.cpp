#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "khid/embed.hpp"
#include "khid/gnn.hpp"

namespace khid::testing {

// ---- c-TF-IDF ---------------------------------------------------------------

RandomDocs random_documents(std::uint64_t seed, int max_words, int max_clusters) {
  Rng rng(seed, 0xC7F1DF);
  const int vocab_size = 5 + static_cast<int>(rng.below(60));
  std::vector<std::string> vocab;
  for (int i = 0; i < vocab_size; ++i) {
    std::string w;
    const int len = 1 + static_cast<int>(rng.below(6));
    for (int j = 0; j < len; ++j) w += static_cast<char>('a' + rng.below(26));
    w += std::to_string(i);  // distinct by construction
    vocab.push_back(w);
  }
  const int clusters = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_clusters)));
  const int total_words = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_words)));
  RandomDocs out;
  out.assignment.cluster_count = clusters;
  int used = 0;
  int doc = 0;
  while (used < total_words) {
    const int len = std::min(total_words - used, 1 + static_cast<int>(rng.below(40)));
    std::vector<std::string> words;
    // Skewed draw so some terms dominate.
    for (int j = 0; j < len; ++j) {
      const double u = rng.uniform();
      words.push_back(vocab[static_cast<std::size_t>(u * u * vocab_size)]);
    }
    std::string text;
    for (std::size_t j = 0; j < words.size(); ++j) text += (j ? " " : "") + words[j];
    const int label = rng.bernoulli(0.1) ? -1 : static_cast<int>(rng.below(static_cast<std::size_t>(clusters)));
    out.docs.doc_ids.push_back("d" + std::to_string(doc));
    out.docs.owners.push_back("u" + std::to_string(doc % 7));
    out.docs.texts.push_back(text);
    out.assignment.labels.push_back(label);
    used += len;
    ++doc;
  }
  // At least one document must sit in a cluster.
  out.assignment.labels[0] = 0;
  return out;
}

std::map<std::pair<std::string, int>, double> ctfidf_oracle(const topics::DocumentSet& docs,
                                                            const topics::ClusterAssignment& assignment) {
  // Pass 1: concatenated word list of each cluster.
  std::map<int, std::vector<std::string>> words;
  for (std::size_t i = 0; i < docs.texts.size(); ++i) {
    if (assignment.labels[i] < 0) continue;
    std::istringstream in(docs.texts[i]);
    std::string w;
    auto& bucket = words[assignment.labels[i]];
    while (in >> w) bucket.push_back(w);
  }
  // Pass 2: counts.
  double total = 0;
  std::map<std::string, double> f;
  std::map<std::pair<std::string, int>, double> tf;
  for (const auto& [c, list] : words) {
    total += static_cast<double>(list.size());
    for (const auto& w : list) {
      f[w] += 1;
      tf[{w, c}] += 1;
    }
  }
  const double a = total / static_cast<double>(words.size());
  std::map<std::pair<std::string, int>, double> out;
  for (const auto& [key, t] : tf) out[key] = t * std::log(1.0 + a / f[key.first]);
  return out;
}

double ctfidf_max_error(const topics::TopicModel& model,
                        const std::map<std::pair<std::string, int>, double>& oracle) {
  std::size_t seen = 0;
  double worst = 0.0;
  for (const auto& c : model.clusters) {
    for (const auto& [term, w] : c.weights) {
      auto it = oracle.find({term, c.cluster_id});
      if (it == oracle.end()) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, std::abs(w - it->second));
      ++seen;
    }
  }
  return seen == oracle.size() ? worst : std::numeric_limits<double>::infinity();
}

// ---- metrics ----------------------------------------------------------------

Confusion confusion_oracle(const std::vector<int>& pred, const std::vector<int>& label) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && label[i] == 1) ++c.tp;
    if (pred[i] == 1 && label[i] == 0) ++c.fp;
    if (pred[i] == 0 && label[i] == 1) ++c.fn;
    if (pred[i] == 0 && label[i] == 0) ++c.tn;
  }
  return c;
}

std::int64_t exhaustive_metrics_mismatches(int max_len, std::int64_t* checked) {
  std::int64_t bad = 0, count = 0;
  for (int len = 1; len <= max_len; ++len) {
    const std::uint32_t span = 1u << len;
    std::vector<int> p(static_cast<std::size_t>(len)), y(static_cast<std::size_t>(len));
    for (std::uint32_t pm = 0; pm < span; ++pm) {
      for (int i = 0; i < len; ++i) p[static_cast<std::size_t>(i)] = (pm >> i) & 1u;
      for (std::uint32_t ym = 0; ym < span; ++ym) {
        for (int i = 0; i < len; ++i) y[static_cast<std::size_t>(i)] = (ym >> i) & 1u;
        const Confusion c = confusion_oracle(p, y);
        const double acc = static_cast<double>(c.tp + c.tn) / len;
        const double prec = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
        const double rec = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        const Metrics m = evaluate(p, y);
        ++count;
        if (m.tp != c.tp || m.fp != c.fp || m.fn != c.fn || m.tn != c.tn || std::abs(m.accuracy - acc) > 1e-12 ||
            std::abs(m.f1 - f1) > 1e-12) {
          ++bad;
        }
      }
    }
  }
  if (checked) *checked = count;
  return bad;
}

// ---- gradients --------------------------------------------------------------

Tensor project(const Tensor& out, std::uint64_t seed) {
  Mat r = nn::uniform_matrix(out.rows(), out.cols(), -1.0, 1.0, seed, 0x9E0);
  return nn::sum(nn::mul(out, Tensor::constant(std::move(r))));
}

GradCheck check_gradients(const LossFn& loss, const std::vector<Mat>& inputs, double eps) {
  std::vector<Tensor> params;
  for (const auto& m : inputs) params.push_back(Tensor::parameter(m));
  Tensor l = loss(params);
  nn::backward(l);

  auto value_at = [&](std::size_t which, Eigen::Index r, Eigen::Index c, double delta) {
    std::vector<Tensor> consts;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Mat m = inputs[i];
      if (i == which) m(r, c) += delta;
      consts.push_back(Tensor::constant(std::move(m)));
    }
    return loss(consts).item();
  };

  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Mat& g = params[i].grad();
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const double analytic = g(r, c);
        // A kink closer than `eps` to the point can pass the one-sided test
        // when both slopes are small; a failing coordinate is re-measured
        // once with a step 100 times smaller.
        double rel = -1.0;
        for (double h : {eps, eps * 1e-2}) {
          const double f0 = value_at(i, r, c, 0.0);
          const double fp = value_at(i, r, c, h);
          const double fm = value_at(i, r, c, -h);
          const double right = (fp - f0) / h;
          const double left = (f0 - fm) / h;
          if (std::abs(right - left) > 1e-3 + 1e-2 * std::max(std::abs(right), std::abs(left))) {
            rel = -1.0;
            break;
          }
          const double numeric = (fp - fm) / (2 * h);
          const double diff = std::abs(analytic - numeric);
          rel = diff < 1e-7 ? 0.0 : diff / std::max(std::abs(analytic), std::abs(numeric));
          if (rel <= 1e-3) break;
        }
        if (rel < 0) {
          ++out.skipped;
          continue;
        }
        out.worst = std::max(out.worst, rel);
        ++out.checked;
      }
    }
  }
  return out;
}

namespace {

Mat rand_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

Eigen::Index dim(Rng& rng, int lo, int hi) { return lo + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(hi - lo + 1))); }

std::vector<int> rand_index(Rng& rng, std::size_t count, Eigen::Index bound) {
  std::vector<int> v(count);
  for (auto& x : v) x = static_cast<int>(rng.below(static_cast<std::size_t>(bound)));
  return v;
}

std::shared_ptr<const nn::SparseOperand> rand_sparse(Rng& rng, Eigen::Index r, Eigen::Index c, double density) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      if (rng.bernoulli(density)) t.emplace_back(i, j, rng.uniform(-1.0, 1.0));
  nn::SparseMat m(r, c);
  m.setFromTriplets(t.begin(), t.end());
  return std::make_shared<const nn::SparseOperand>(std::move(m));
}

// Loss wrapper: project the op output with a per-case fixed weight matrix.
template <typename F>
LossFn projected(F f, std::uint64_t seed) {
  return [f, seed](const std::vector<Tensor>& x) { return project(f(x), seed); };
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite() {
  std::vector<GradSuiteEntry> s;
  auto binary = [&](const std::string& name, Tensor (*op)(const Tensor&, const Tensor&)) {
    s.push_back({name, [op](Rng& rng) {
                   const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
                   // Broadcast shape of b: full, row, column or scalar.
                   const auto mode = rng.below(4);
                   const auto br = mode == 0 || mode == 2 ? r : 1;
                   const auto bc = mode == 0 || mode == 1 ? c : 1;
                   return GradCase{projected([op](const auto& x) { return op(x[0], x[1]); }, rng.next_u64()),
                                   {rand_mat(rng, r, c), rand_mat(rng, br, bc)}};
                 }});
  };
  s.push_back({"matmul", [](Rng& rng) {
                 const auto m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
                 return GradCase{projected([](const auto& x) { return nn::matmul(x[0], x[1]); }, rng.next_u64()),
                                 {rand_mat(rng, m, k), rand_mat(rng, k, n)}};
               }});
  binary("add", &nn::add);
  binary("sub", &nn::sub);
  binary("mul", &nn::mul);
  s.push_back({"scale", [](Rng& rng) {
                 const double f = rng.uniform(-3.0, 3.0);
                 return GradCase{projected([f](const auto& x) { return nn::scale(x[0], f); }, rng.next_u64()),
                                 {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  s.push_back({"transpose", [](Rng& rng) {
                 return GradCase{projected([](const auto& x) { return nn::transpose(x[0]); }, rng.next_u64()),
                                 {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  s.push_back({"leaky_relu", [](Rng& rng) {
                 const double slope = rng.bernoulli(0.5) ? 0.01 : 0.2;
                 return GradCase{projected([slope](const auto& x) { return nn::leaky_relu(x[0], slope); }, rng.next_u64()),
                                 {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  for (int axis : {0, 1}) {
    s.push_back({"softmax_axis" + std::to_string(axis), [axis](Rng& rng) {
                   return GradCase{projected([axis](const auto& x) { return nn::softmax(x[0], axis); }, rng.next_u64()),
                                   {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4), 2.0)}};
                 }});
    s.push_back({"log_softmax_axis" + std::to_string(axis), [axis](Rng& rng) {
                   return GradCase{
                       projected([axis](const auto& x) { return nn::log_softmax(x[0], axis); }, rng.next_u64()),
                       {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4), 2.0)}};
                 }});
    s.push_back({"concat_axis" + std::to_string(axis), [axis](Rng& rng) {
                   const auto parts = dim(rng, 1, 3);
                   const auto fixed = dim(rng, 1, 3);
                   std::vector<Mat> in;
                   for (Eigen::Index p = 0; p < parts; ++p) {
                     const auto var = dim(rng, 1, 3);
                     in.push_back(axis == 0 ? rand_mat(rng, var, fixed) : rand_mat(rng, fixed, var));
                   }
                   return GradCase{projected([axis](const auto& x) { return nn::concat(x, axis); }, rng.next_u64()),
                                   in};
                 }});
    s.push_back({"mean_axis" + std::to_string(axis), [axis](Rng& rng) {
                   return GradCase{projected([axis](const auto& x) { return nn::mean(x[0], axis); }, rng.next_u64()),
                                   {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
                 }});
    s.push_back({"max_axis" + std::to_string(axis), [axis](Rng& rng) {
                   return GradCase{projected([axis](const auto& x) { return nn::max(x[0], axis); }, rng.next_u64()),
                                   {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
                 }});
  }
  s.push_back({"dropout", [](Rng& rng) {
                 const auto seed = rng.next_u64();
                 return GradCase{
                     projected([seed](const auto& x) { return nn::dropout(x[0], 0.3, seed, 3, true); }, rng.next_u64()),
                     {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  s.push_back({"sum", [](Rng& rng) {
                 const double w = rng.uniform(0.5, 2.0);
                 return GradCase{[w](const auto& x) { return nn::scale(nn::sum(nn::mul(x[0], x[0])), w); },
                                 {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  s.push_back({"mean", [](Rng& rng) {
                 return GradCase{[](const auto& x) { return nn::mean(nn::mul(x[0], x[0])); },
                                 {rand_mat(rng, dim(rng, 1, 4), dim(rng, 1, 4))}};
               }});
  s.push_back({"slice_cols", [](Rng& rng) {
                 const auto c = dim(rng, 1, 5);
                 const auto begin = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(c)));
                 const auto count = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(c - begin)));
                 return GradCase{
                     projected([begin, count](const auto& x) { return nn::slice_cols(x[0], begin, count); },
                               rng.next_u64()),
                     {rand_mat(rng, dim(rng, 1, 4), c)}};
               }});
  s.push_back({"gather_rows", [](Rng& rng) {
                 const auto r = dim(rng, 1, 4);
                 auto idx = rand_index(rng, static_cast<std::size_t>(dim(rng, 1, 6)), r);
                 return GradCase{projected([idx](const auto& x) { return nn::gather_rows(x[0], idx); }, rng.next_u64()),
                                 {rand_mat(rng, r, dim(rng, 1, 3))}};
               }});
  s.push_back({"scatter_add_rows", [](Rng& rng) {
                 const auto e = dim(rng, 1, 6), rows = dim(rng, 1, 4);
                 auto idx = rand_index(rng, static_cast<std::size_t>(e), rows);
                 return GradCase{
                     projected([idx, rows](const auto& x) { return nn::scatter_add_rows(x[0], idx, rows); },
                               rng.next_u64()),
                     {rand_mat(rng, e, dim(rng, 1, 3))}};
               }});
  s.push_back({"segment_softmax", [](Rng& rng) {
                 const auto e = dim(rng, 1, 8), segs = dim(rng, 1, 3);
                 auto seg = rand_index(rng, static_cast<std::size_t>(e), segs);
                 return GradCase{
                     projected([seg, segs](const auto& x) { return nn::segment_softmax(x[0], seg, segs); },
                               rng.next_u64()),
                     {rand_mat(rng, e, 1, 2.0)}};
               }});
  s.push_back({"edge_aggregate", [](Rng& rng) {
                 const auto n = dim(rng, 1, 4), e = dim(rng, 1, 8), rows = dim(rng, 1, 4);
                 auto src = rand_index(rng, static_cast<std::size_t>(e), n);
                 auto dst = rand_index(rng, static_cast<std::size_t>(e), rows);
                 return GradCase{
                     projected([src, dst, rows](const auto& x) { return nn::edge_aggregate(x[0], x[1], src, dst, rows); },
                               rng.next_u64()),
                     {rand_mat(rng, n, dim(rng, 1, 3)), rand_mat(rng, e, 1)}};
               }});
  s.push_back({"edge_pair_score", [](Rng& rng) {
                 const auto n = dim(rng, 1, 4), e = dim(rng, 1, 8), f = dim(rng, 1, 3);
                 auto src = rand_index(rng, static_cast<std::size_t>(e), n);
                 auto dst = rand_index(rng, static_cast<std::size_t>(e), n);
                 return GradCase{projected(
                                     [src, dst](const auto& x) {
                                       return nn::edge_pair_score(x[0], x[1], x[2], src, dst, 0.2);
                                     },
                                     rng.next_u64()),
                                 {rand_mat(rng, n, f), rand_mat(rng, n, f), rand_mat(rng, f, 1)}};
               }});
  s.push_back({"spmm", [](Rng& rng) {
                 const auto r = dim(rng, 1, 5), c = dim(rng, 1, 5);
                 auto a = rand_sparse(rng, r, c, 0.5);
                 return GradCase{projected([a](const auto& x) { return nn::spmm(a, x[0]); }, rng.next_u64()),
                                 {rand_mat(rng, c, dim(rng, 1, 3))}};
               }});
  s.push_back({"cross_entropy", [](Rng& rng) {
                 const auto n = dim(rng, 1, 6), classes = dim(rng, 2, 3);
                 std::vector<int> rows, targets;
                 for (int i = 0; i < n; ++i) {
                   if (rng.bernoulli(0.7) || rows.empty()) {
                     rows.push_back(i);
                     targets.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(classes))));
                   }
                 }
                 std::vector<double> weights;
                 if (rng.bernoulli(0.5))
                   for (Eigen::Index c = 0; c < classes; ++c) weights.push_back(rng.uniform(0.5, 2.0));
                 return GradCase{[rows, targets, weights](const auto& x) {
                                   return nn::cross_entropy(x[0], rows, targets, weights);
                                 },
                                 {rand_mat(rng, n, classes, 2.0)}};
               }});
  s.push_back({"mlp_head", [](Rng& rng) {
                 const auto in = dim(rng, 1, 4);
                 const std::vector<int> hidden{static_cast<int>(dim(rng, 1, 4)), static_cast<int>(dim(rng, 1, 3))};
                 auto head = embed::MlpHead::create(static_cast<std::size_t>(in), hidden, rng.next_u64());
                 std::vector<Mat> inputs{rand_mat(rng, dim(rng, 1, 4), in)};
                 for (const auto& p : head.parameters()) inputs.push_back(rand_mat(rng, p.rows(), p.cols()));
                 const auto layers = head.weights.size();
                 return GradCase{projected(
                                     [layers](const std::vector<Tensor>& x) {
                                       embed::MlpHead h;
                                       // parameters() interleaves (W, b) per layer.
                                       for (std::size_t l = 0; l < layers; ++l) {
                                         h.weights.push_back(x[1 + 2 * l]);
                                         h.biases.push_back(x[2 + 2 * l]);
                                       }
                                       return h.logits(x[0], false);
                                     },
                                     rng.next_u64()),
                                 inputs};
               }});

  // GNN layers on small random graphs.
  auto small_graph = [](Rng& rng) { return random_graph(rng, static_cast<int>(dim(rng, 2, 5)), 0.3); };
  s.push_back({"gcn_layer", [small_graph](Rng& rng) {
                 auto g = small_graph(rng);
                 auto a = std::make_shared<const nn::SparseOperand>(
                     graph::normalize_adjacency(g, graph::NormMode::Symmetric).matrix);
                 const auto in = dim(rng, 1, 3), out = dim(rng, 1, 3);
                 return GradCase{projected([a](const auto& x) { return gnn::gcn_layer(x[0], a, x[1], 0.01); },
                                           rng.next_u64()),
                                 {rand_mat(rng, static_cast<Eigen::Index>(g.node_count()), in), rand_mat(rng, in, out)}};
               }});
  s.push_back({"rgcn_layer", [small_graph](Rng& rng) {
                 auto g = small_graph(rng);
                 std::vector<std::shared_ptr<const nn::SparseOperand>> rel;
                 for (auto r : graph::kRelations)
                   rel.push_back(std::make_shared<const nn::SparseOperand>(
                       graph::normalize_adjacency(g, graph::NormMode::Row, r).matrix));
                 const auto in = dim(rng, 1, 3), out = dim(rng, 1, 3);
                 std::vector<Mat> inputs{rand_mat(rng, static_cast<Eigen::Index>(g.node_count()), in),
                                         rand_mat(rng, in, out)};
                 for (std::size_t r = 0; r < rel.size(); ++r) inputs.push_back(rand_mat(rng, in, out));
                 return GradCase{projected(
                                     [rel](const std::vector<Tensor>& x) {
                                       std::vector<Tensor> w(x.begin() + 2, x.end());
                                       return gnn::rgcn_layer(x[0], rel, w, x[1], 0.01);
                                     },
                                     rng.next_u64()),
                                 inputs};
               }});
  for (bool concat : {true, false}) {
    const std::string suffix = concat ? "_concat" : "_mean";
    s.push_back({"gat_layer" + suffix, [small_graph, concat](Rng& rng) {
                   auto g = small_graph(rng);
                   auto edges = gnn::attention_edges(g, true);
                   const auto in = dim(rng, 1, 3), out = dim(rng, 1, 3), heads = dim(rng, 1, 2);
                   std::vector<Mat> inputs{rand_mat(rng, static_cast<Eigen::Index>(g.node_count()), in)};
                   for (Eigen::Index h = 0; h < heads; ++h) {
                     inputs.push_back(rand_mat(rng, in, out));
                     inputs.push_back(rand_mat(rng, 2 * out, 1));
                   }
                   return GradCase{projected(
                                       [edges, concat](const std::vector<Tensor>& x) {
                                         std::vector<gnn::GatHead> hs;
                                         for (std::size_t i = 1; i + 1 < x.size(); i += 2) hs.push_back({x[i], x[i + 1]});
                                         return gnn::gat_layer(x[0], edges, hs, concat, 0.2, 0.01);
                                       },
                                       rng.next_u64()),
                                   inputs};
                 }});
    s.push_back({"gatv2_layer" + suffix, [small_graph, concat](Rng& rng) {
                   auto g = small_graph(rng);
                   auto edges = gnn::attention_edges(g, true);
                   const auto in = dim(rng, 1, 3), out = dim(rng, 1, 3), heads = dim(rng, 1, 2);
                   std::vector<Mat> inputs{rand_mat(rng, static_cast<Eigen::Index>(g.node_count()), in)};
                   for (Eigen::Index h = 0; h < heads; ++h) {
                     inputs.push_back(rand_mat(rng, in, out));
                     inputs.push_back(rand_mat(rng, in, out));
                     inputs.push_back(rand_mat(rng, out, 1));
                   }
                   return GradCase{projected(
                                       [edges, concat](const std::vector<Tensor>& x) {
                                         std::vector<gnn::Gatv2Head> hs;
                                         for (std::size_t i = 1; i + 2 < x.size(); i += 3)
                                           hs.push_back({x[i], x[i + 1], x[i + 2]});
                                         return gnn::gatv2_layer(x[0], edges, hs, concat, 0.2, 0.01);
                                       },
                                       rng.next_u64()),
                                   inputs};
                 }});
  }
  s.push_back({"output_projection", [](Rng& rng) {
                 const auto n = dim(rng, 1, 4), h = dim(rng, 1, 4);
                 return GradCase{projected([](const auto& x) { return gnn::output_projection(x[0], x[1], x[2], 0.01); },
                                           rng.next_u64()),
                                 {rand_mat(rng, n, h), rand_mat(rng, h, 2), rand_mat(rng, 1, 2)}};
               }});
  return s;
}

std::vector<GradOutcome> run_gradient_suite(int trials, std::uint64_t seed, double tolerance) {
  std::vector<GradOutcome> out;
  const auto suite = gradient_suite();
  for (std::size_t k = 0; k < suite.size(); ++k) {
    GradOutcome o{suite[k].name};
    Rng rng(seed, hash_string(suite[k].name));
    for (int t = 0; t < trials; ++t) {
      const GradCase c = suite[k].make(rng);
      const GradCheck r = check_gradients(c.loss, c.inputs);
      ++o.trials;
      o.worst = std::max(o.worst, r.worst);
      o.skipped += r.skipped;
      o.checked += r.checked;
      if (r.worst > tolerance) ++o.failures;
    }
    out.push_back(o);
  }
  return out;
}

// ---- graphs -----------------------------------------------------------------

graph::ForumGraph random_graph(Rng& rng, int n, double p) {
  graph::ForumGraph g;
  for (int i = 0; i < n; ++i) {
    std::string id = "u" + std::to_string(1000 + i);
    g.index[id] = i;
    g.nodes.push_back(std::move(id));
  }
  for (auto& list : g.edges) {
    for (int s = 0; s < n; ++s)
      for (int d = 0; d < n; ++d)
        if (s != d && rng.bernoulli(p)) list.push_back({s, d, 1 + static_cast<int>(rng.below(3))});
  }
  g.labels.assign(static_cast<std::size_t>(n), -1);
  g.splits.assign(static_cast<std::size_t>(n), graph::SplitTag::None);
  return g;
}

Mat dense(const nn::SparseMat& m) { return Mat(m); }

double power_iteration_radius(const Mat& m, int iterations) {
  // Iterate on M^2 (positive semi-definite for symmetric M) so that
  // eigenvalues of equal magnitude and opposite sign cannot stall it.
  const Mat m2 = m * m;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = m2 * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    lambda = v.dot(w) / v.dot(v);
    v = w / norm;
  }
  return std::sqrt(std::max(0.0, lambda));
}

// ---- clustering ------------------------------------------------------------

Blobs two_blobs(std::uint64_t seed, int per_blob, double sigma, double separation, int dim) {
  Rng rng(seed, 0xB10B);
  Blobs b;
  b.points.resize(2 * per_blob, dim);
  for (int i = 0; i < 2 * per_blob; ++i) {
    const int blob = i % 2;
    for (int d = 0; d < dim; ++d) b.points(i, d) = sigma * rng.normal() + (d == 0 ? blob * separation : 0.0);
    b.truth.push_back(blob);
  }
  return b;
}

std::vector<std::vector<int>> partition_of(const std::vector<int>& labels) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) groups[labels[i]].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> out;
  for (auto& [_, g] : groups) out.push_back(std::move(g));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace khid::testing
