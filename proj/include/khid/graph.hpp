#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "khid/corpus.hpp"
#include "khid/io.hpp"
#include "khid/tensor.hpp"

namespace khid::graph {

enum class Relation { QuotedReply, Thread, Contract };
inline constexpr std::array<Relation, 3> kRelations{Relation::QuotedReply, Relation::Thread, Relation::Contract};
std::string to_string(Relation r);
Relation relation_from_string(std::string_view s);

enum class SplitTag { None, Train, Val, Test };
std::string to_string(SplitTag s);
SplitTag split_from_string(std::string_view s);

// Directed edge; parallel interactions are collapsed into `weight`.
struct Edge {
  int src = 0;
  int dst = 0;
  int weight = 1;

  bool operator==(const Edge&) const = default;
};

// Labels: 1 key, 0 non-key, -1 unlabeled.
struct ForumGraph {
  std::vector<std::string> nodes;
  std::map<std::string, int> index;
  std::array<std::vector<Edge>, 3> edges;  // by relation, sorted by (src, dst)
  std::vector<int> labels;
  std::vector<SplitTag> splits;

  std::size_t node_count() const { return nodes.size(); }
  int node_index(std::string_view user_id) const;
  const std::vector<Edge>& relation(Relation r) const { return edges[static_cast<std::size_t>(r)]; }
  std::size_t edge_count() const;

  // Mirrored (src, dst) message pairs, deduplicated and sorted. Passing
  // nullopt merges every relation.
  std::vector<std::pair<int, int>> message_pairs(std::optional<Relation> r = std::nullopt) const;
  std::vector<int> mask(SplitTag s) const;
};

// quoted_reply u1 -> u2: a post by u1 quotes a post by u2.
// thread u1 -> u2: u2 posted in a thread u1 opened.
// contract u1 -> u2: u1 initiated a contract with u2.
// Self-interactions produce no edge. Every user becomes a node, in id order.
ForumGraph build_graph(const corpus::ForumCorpus& c);

// Labels by user id; users absent from the map stay unlabeled. Throws
// LookupError for ids that are not nodes.
void assign_labels(ForumGraph& g, const std::map<std::string, int>& labels);

// Stratified split over labelled nodes; unlabelled nodes get SplitTag::None.
void assign_splits(ForumGraph& g, std::array<double, 2> fractions, std::uint64_t seed);

enum class NormMode { Symmetric, Row };

struct NormalizedAdjacency {
  std::optional<Relation> relation;  // nullopt: all relations merged
  NormMode mode = NormMode::Symmetric;
  bool self_loops = false;
  nn::SparseMat matrix;
};

// Symmetric: D^-1/2 (A + I) D^-1/2 over the mirrored edges. Row: each row of
// the mirrored adjacency divided by its degree, isolated rows left at zero.
NormalizedAdjacency normalize_adjacency(const ForumGraph& g, NormMode mode,
                                        std::optional<Relation> relation = std::nullopt);

io::json graph_to_json(const ForumGraph& g);
ForumGraph graph_from_json(const io::json& doc);

}  // namespace khid::graph
