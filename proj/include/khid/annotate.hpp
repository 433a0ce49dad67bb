#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "khid/corpus.hpp"
#include "khid/io.hpp"

namespace khid::annotate {

std::vector<std::string> default_keywords();

struct AnnotationRules {
  std::int64_t min_replies = 400;
  std::int64_t min_threads = 20;
  std::int64_t min_reputation = 100;  // strict: reputation must exceed it
  std::vector<std::string> keywords = default_keywords();
  int keyword_min = 3;
  // When set, candidates must also have opened a thread in `market_category`.
  bool require_market = false;
  std::string market_category = "market";

  void validate() const;
};

struct RuleHits {
  bool behavioral = false;
  bool keyword = false;
  bool market = false;
  int keyword_count = 0;
};

struct Candidate {
  std::string user_id;
  RuleHits hits;
  bool candidate = false;
};

// Occurrences of any keyword as a whole word, case-insensitively. Words are
// maximal runs of [A-Za-z0-9_].
int count_keyword_hits(std::string_view text, const std::set<std::string>& keywords);

// One entry per user in id order. Activity counts come from the user
// metadata; keywords are counted over the user's preprocessed threads and
// replies.
std::vector<Candidate> auto_candidates(const corpus::ForumCorpus& c, const AnnotationRules& rules);

enum class Provenance { Auto, Manual };
std::string to_string(Provenance p);

struct LabelOverride {
  std::string user_id;
  int label = 0;
  std::string note;
};

struct Label {
  std::string user_id;
  int label = 0;  // 1 key, 0 non-key
  Provenance provenance = Provenance::Auto;
  RuleHits hits;
};

// JSONL {user_id, label: "key"|"non-key", note}.
std::vector<LabelOverride> read_overrides(const std::filesystem::path& path);
std::string overrides_to_jsonl(const std::vector<LabelOverride>& overrides);

// Overrides replace the automatic decision. Throws LookupError for an
// override naming a user with no candidate entry.
std::vector<Label> merge_labels(const std::vector<Candidate>& candidates, const std::vector<LabelOverride>& overrides);

// Header line followed by {user_id, label, provenance, rule_hits} records.
std::string labels_to_jsonl(const std::vector<Label>& labels);
std::vector<Label> read_labels(const std::filesystem::path& path);

}  // namespace khid::annotate
