#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace khid::corpus {

struct UserRecord {
  std::string user_id;
  std::string username;
  std::int64_t thread_count = 0;
  std::int64_t post_count = 0;
  std::int64_t reputation = 0;

  bool operator==(const UserRecord&) const = default;
};

struct ThreadRecord {
  std::string thread_id;
  std::string author_id;
  std::string title;
  std::string created_at;
  // Subforum/category tag, e.g. "market". Empty when the dump has none.
  std::string category;

  bool operator==(const ThreadRecord&) const = default;
};

struct PostRecord {
  std::string post_id;
  std::string thread_id;
  std::string author_id;
  std::string body;
  std::optional<std::string> quoted_post_id;
  std::string created_at;

  bool operator==(const PostRecord&) const = default;
};

struct ContractRecord {
  std::string contract_id;
  std::string initiator_id;
  std::string counterparty_id;
  std::string created_at;

  bool operator==(const ContractRecord&) const = default;
};

struct Provenance {
  std::string source_path;
  std::string source_digest;
  std::string ingested_at;
};

// Immutable after ingestion. Collections are kept sorted by primary id so
// that the result does not depend on the order of records in the source.
struct ForumCorpus {
  std::vector<UserRecord> users;
  std::vector<ThreadRecord> threads;
  std::vector<PostRecord> posts;
  std::vector<ContractRecord> contracts;
  Provenance provenance;

  // Equality over content only; provenance is metadata.
  bool operator==(const ForumCorpus& o) const {
    return users == o.users && threads == o.threads && posts == o.posts && contracts == o.contracts;
  }

  void sort_canonical();
};

struct Violation {
  std::string rule;
  std::string subject_id;
  std::string message;
};

std::vector<Violation> validate_corpus(const ForumCorpus& c);

// Reads a JSON-lines dump where every record carries a "kind" of user,
// thread, post or contract. An optional leading header record written by
// serialize_corpus is accepted. Throws ParseError on malformed lines and
// IntegrityError (listing every offending id) when validation fails.
ForumCorpus ingest_corpus(const std::filesystem::path& path);
ForumCorpus parse_corpus(std::string_view jsonl, std::string source_path = "<memory>");

std::string serialize_corpus(const ForumCorpus& c);

// Returns a copy with thread titles and post bodies passed through
// preprocess_text.
ForumCorpus preprocess_corpus(const ForumCorpus& c);

// Read-side index over a corpus. Holds pointers into the corpus, which must
// outlive it.
class CorpusIndex {
 public:
  explicit CorpusIndex(const ForumCorpus& c);

  const UserRecord* user(std::string_view id) const;
  const ThreadRecord* thread(std::string_view id) const;
  const PostRecord* post(std::string_view id) const;

  // Opening post of a thread: its earliest post written by the thread author.
  const PostRecord* opening_post(std::string_view thread_id) const;
  bool is_opening_post(const PostRecord& p) const;

  // Per-user views, in creation order.
  const std::vector<const ThreadRecord*>& threads_by(std::string_view user_id) const;
  const std::vector<const PostRecord*>& replies_by(std::string_view user_id) const;

  // "title body" of each thread the user opened.
  std::vector<std::string> thread_texts(std::string_view user_id) const;
  std::vector<std::string> reply_texts(std::string_view user_id) const;

 private:
  std::unordered_map<std::string, const UserRecord*> users_;
  std::unordered_map<std::string, const ThreadRecord*> threads_;
  std::unordered_map<std::string, const PostRecord*> posts_;
  std::unordered_map<std::string, const PostRecord*> opening_;
  std::unordered_map<std::string, std::vector<const ThreadRecord*>> threads_by_;
  std::unordered_map<std::string, std::vector<const PostRecord*>> replies_by_;
};

}  // namespace khid::corpus
