#include "khid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "khid/error.hpp"
#include "khid/metrics.hpp"

namespace khid::graph {

std::string to_string(Relation r) {
  switch (r) {
    case Relation::QuotedReply: return "quoted_reply";
    case Relation::Thread: return "thread";
    case Relation::Contract: return "contract";
  }
  return "?";
}

Relation relation_from_string(std::string_view s) {
  for (auto r : kRelations) {
    if (to_string(r) == s) return r;
  }
  throw FormatError("unknown relation: " + std::string(s));
}

std::string to_string(SplitTag s) {
  switch (s) {
    case SplitTag::None: return "none";
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "?";
}

SplitTag split_from_string(std::string_view s) {
  for (auto t : {SplitTag::None, SplitTag::Train, SplitTag::Val, SplitTag::Test}) {
    if (to_string(t) == s) return t;
  }
  throw FormatError("unknown split: " + std::string(s));
}

int ForumGraph::node_index(std::string_view user_id) const {
  auto it = index.find(std::string(user_id));
  if (it == index.end()) throw LookupError("unknown node: " + std::string(user_id));
  return it->second;
}

std::size_t ForumGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

std::vector<std::pair<int, int>> ForumGraph::message_pairs(std::optional<Relation> r) const {
  std::set<std::pair<int, int>> pairs;
  for (auto rel : kRelations) {
    if (r && *r != rel) continue;
    for (const auto& e : relation(rel)) {
      pairs.emplace(e.src, e.dst);
      pairs.emplace(e.dst, e.src);
    }
  }
  return {pairs.begin(), pairs.end()};
}

std::vector<int> ForumGraph::mask(SplitTag s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

ForumGraph build_graph(const corpus::ForumCorpus& c) {
  ForumGraph g;
  for (const auto& u : c.users) {
    g.index.emplace(u.user_id, static_cast<int>(g.nodes.size()));
    g.nodes.push_back(u.user_id);
  }
  g.labels.assign(g.nodes.size(), -1);
  g.splits.assign(g.nodes.size(), SplitTag::None);

  std::array<std::map<std::pair<int, int>, int>, 3> counts;
  auto add = [&](Relation r, const std::string& a, const std::string& b) {
    if (a == b) return;
    ++counts[static_cast<std::size_t>(r)][{g.node_index(a), g.node_index(b)}];
  };

  corpus::CorpusIndex idx(c);
  for (const auto& p : c.posts) {
    if (p.quoted_post_id) {
      if (const auto* q = idx.post(*p.quoted_post_id)) add(Relation::QuotedReply, p.author_id, q->author_id);
    }
    if (const auto* t = idx.thread(p.thread_id)) add(Relation::Thread, t->author_id, p.author_id);
  }
  for (const auto& k : c.contracts) add(Relation::Contract, k.initiator_id, k.counterparty_id);

  for (std::size_t r = 0; r < counts.size(); ++r) {
    for (const auto& [pair, w] : counts[r]) g.edges[r].push_back({pair.first, pair.second, w});
  }
  return g;
}

void assign_labels(ForumGraph& g, const std::map<std::string, int>& labels) {
  for (const auto& [id, label] : labels) {
    if (label != 0 && label != 1) throw ContractError("label for " + id + " is not binary");
    g.labels[static_cast<std::size_t>(g.node_index(id))] = label;
  }
}

void assign_splits(ForumGraph& g, std::array<double, 2> fractions, std::uint64_t seed) {
  auto split = stratified_split(g.labels, fractions, seed);
  g.splits.assign(g.nodes.size(), SplitTag::None);
  for (int i : split.train) g.splits[static_cast<std::size_t>(i)] = SplitTag::Train;
  for (int i : split.val) g.splits[static_cast<std::size_t>(i)] = SplitTag::Val;
  for (int i : split.test) g.splits[static_cast<std::size_t>(i)] = SplitTag::Test;
}

NormalizedAdjacency normalize_adjacency(const ForumGraph& g, NormMode mode, std::optional<Relation> relation) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  if (n == 0) throw ContractError("normalize_adjacency: empty graph");
  NormalizedAdjacency out{relation, mode, mode == NormMode::Symmetric, nn::SparseMat(n, n)};
  const auto pairs = g.message_pairs(relation);
  std::vector<double> degree(static_cast<std::size_t>(n), mode == NormMode::Symmetric ? 1.0 : 0.0);
  for (const auto& [src, dst] : pairs) degree[static_cast<std::size_t>(src)] += 1.0;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(pairs.size() + static_cast<std::size_t>(n));
  if (mode == NormMode::Symmetric) {
    for (Eigen::Index i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0 / degree[static_cast<std::size_t>(i)]);
    for (const auto& [a, b] : pairs) {
      trips.emplace_back(a, b, 1.0 / std::sqrt(degree[static_cast<std::size_t>(a)] * degree[static_cast<std::size_t>(b)]));
    }
  } else {
    for (const auto& [a, b] : pairs) trips.emplace_back(a, b, 1.0 / degree[static_cast<std::size_t>(a)]);
  }
  out.matrix.setFromTriplets(trips.begin(), trips.end());
  out.matrix.makeCompressed();
  return out;
}

namespace {

std::string label_name(int label) {
  return label == 1 ? "key" : label == 0 ? "non-key" : "unlabeled";
}

int label_from_name(const std::string& s) {
  if (s == "key") return 1;
  if (s == "non-key") return 0;
  if (s == "unlabeled") return -1;
  throw FormatError("unknown label: " + s);
}

}  // namespace

io::json graph_to_json(const ForumGraph& g) {
  io::json doc = io::document("khid.graph");
  doc["nodes"] = g.nodes;
  doc["edges"] = io::json::object();
  for (auto r : kRelations) {
    auto arr = io::json::array();
    for (const auto& e : g.relation(r)) arr.push_back({e.src, e.dst, e.weight});
    doc["edges"][to_string(r)] = std::move(arr);
  }
  doc["labels"] = io::json::array();
  doc["splits"] = io::json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    doc["labels"].push_back(label_name(g.labels[i]));
    doc["splits"].push_back(to_string(g.splits[i]));
  }
  return doc;
}

ForumGraph graph_from_json(const io::json& doc) {
  ForumGraph g;
  try {
    g.nodes = doc.at("nodes").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      if (!g.index.emplace(g.nodes[i], static_cast<int>(i)).second) {
        throw FormatError("duplicate node " + g.nodes[i]);
      }
    }
    const auto n = static_cast<int>(g.nodes.size());
    for (auto r : kRelations) {
      for (const auto& e : doc.at("edges").at(to_string(r))) {
        Edge edge{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()};
        if (edge.src < 0 || edge.src >= n || edge.dst < 0 || edge.dst >= n || edge.src == edge.dst) {
          throw FormatError("edge out of range in relation " + to_string(r));
        }
        g.edges[static_cast<std::size_t>(r)].push_back(edge);
      }
    }
    for (const auto& l : doc.at("labels")) g.labels.push_back(label_from_name(l.get<std::string>()));
    for (const auto& s : doc.at("splits")) g.splits.push_back(split_from_string(s.get<std::string>()));
  } catch (const io::json::exception& e) {
    throw FormatError(std::string("malformed graph document: ") + e.what());
  }
  if (g.labels.size() != g.nodes.size() || g.splits.size() != g.nodes.size()) {
    throw FormatError("graph labels/splits do not match the node count");
  }
  return g;
}

}  // namespace khid::graph
