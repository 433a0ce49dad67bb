#include "khid/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

#include "khid/error.hpp"
#include "khid/io.hpp"
#include "khid/text.hpp"

namespace khid::corpus {

using io::json;

namespace {

bool is_iso_timestamp(std::string_view s) {
  // YYYY-MM-DDTHH:MM:SS[.fff]Z
  auto digits = [&](std::size_t from, std::size_t n) {
    if (from + n > s.size()) return false;
    for (std::size_t i = from; i < from + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
    }
    return true;
  };
  if (s.size() < 20) return false;
  if (!digits(0, 4) || s[4] != '-' || !digits(5, 2) || s[7] != '-' || !digits(8, 2) || s[10] != 'T' ||
      !digits(11, 2) || s[13] != ':' || !digits(14, 2) || s[16] != ':' || !digits(17, 2)) {
    return false;
  }
  std::size_t i = 19;
  if (i < s.size() && s[i] == '.') {
    ++i;
    std::size_t start = i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (i == start) return false;
  }
  return i + 1 == s.size() && s[i] == 'Z';
}

// SOURCE_DATE_EPOCH wins; otherwise `fallback`, otherwise the clock.
std::string ingest_time(std::optional<std::time_t> fallback = std::nullopt) {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else if (fallback) {
    t = *fallback;
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string get_string(const json& r, const char* key, std::size_t line) {
  auto it = r.find(key);
  if (it == r.end()) throw ParseError(std::string("missing field \"") + key + "\"", line);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw ParseError(std::string("field \"") + key + "\" must be a string", line);
}

std::int64_t get_int(const json& r, const char* key, std::size_t line) {
  auto it = r.find(key);
  if (it == r.end()) throw ParseError(std::string("missing field \"") + key + "\"", line);
  if (!it->is_number_integer()) throw ParseError(std::string("field \"") + key + "\" must be an integer", line);
  return it->get<std::int64_t>();
}

std::string get_timestamp(const json& r, std::size_t line) {
  auto ts = get_string(r, "created_at", line);
  if (!is_iso_timestamp(ts)) throw ParseError("created_at is not an ISO-8601 UTC timestamp: " + ts, line);
  return ts;
}

void add_record(ForumCorpus& c, const json& r, std::size_t line) {
  auto kind_it = r.find("kind");
  if (kind_it == r.end() || !kind_it->is_string()) throw ParseError("missing \"kind\" discriminator", line);
  const auto kind = kind_it->get<std::string>();
  if (kind == "header") {
    io::check_schema(r, "khid.corpus", "line " + std::to_string(line));
    return;
  }
  if (kind == "user") {
    c.users.push_back({get_string(r, "user_id", line), get_string(r, "username", line),
                       get_int(r, "thread_count", line), get_int(r, "post_count", line),
                       get_int(r, "reputation", line)});
  } else if (kind == "thread") {
    ThreadRecord t{get_string(r, "thread_id", line), get_string(r, "author_id", line),
                   get_string(r, "title", line), get_timestamp(r, line), ""};
    if (auto it = r.find("category"); it != r.end() && !it->is_null()) t.category = get_string(r, "category", line);
    c.threads.push_back(std::move(t));
  } else if (kind == "post") {
    PostRecord p{get_string(r, "post_id", line), get_string(r, "thread_id", line),
                 get_string(r, "author_id", line), get_string(r, "body", line), std::nullopt,
                 get_timestamp(r, line)};
    if (auto it = r.find("quoted_post_id"); it != r.end() && !it->is_null()) {
      p.quoted_post_id = get_string(r, "quoted_post_id", line);
    }
    c.posts.push_back(std::move(p));
  } else if (kind == "contract") {
    c.contracts.push_back({get_string(r, "contract_id", line), get_string(r, "initiator_id", line),
                           get_string(r, "counterparty_id", line), get_timestamp(r, line)});
  } else {
    throw ParseError("unknown kind \"" + kind + "\"", line);
  }
}

ForumCorpus finish(ForumCorpus c) {
  c.sort_canonical();
  auto violations = validate_corpus(c);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "corpus integrity check failed (" << violations.size() << " violation"
        << (violations.size() == 1 ? "" : "s") << "):";
    for (const auto& v : violations) msg << "\n  " << v.rule << " " << v.subject_id << ": " << v.message;
    throw IntegrityError(msg.str());
  }
  return c;
}

template <typename T, typename Key>
void check_duplicates(const std::vector<T>& items, Key key, const char* what, std::vector<Violation>& out) {
  std::set<std::string> seen;
  for (const auto& item : items) {
    const std::string& id = key(item);
    if (!seen.insert(id).second) out.push_back({"duplicate_id", id, std::string("duplicate ") + what + " id"});
  }
}

}  // namespace

void ForumCorpus::sort_canonical() {
  // Stable so that duplicate ids keep a deterministic relative order.
  std::stable_sort(users.begin(), users.end(), [](auto& a, auto& b) { return a.user_id < b.user_id; });
  std::stable_sort(threads.begin(), threads.end(), [](auto& a, auto& b) { return a.thread_id < b.thread_id; });
  std::stable_sort(posts.begin(), posts.end(), [](auto& a, auto& b) { return a.post_id < b.post_id; });
  std::stable_sort(contracts.begin(), contracts.end(),
                   [](auto& a, auto& b) { return a.contract_id < b.contract_id; });
}

std::vector<Violation> validate_corpus(const ForumCorpus& c) {
  std::vector<Violation> out;
  check_duplicates(c.users, [](const UserRecord& u) -> const std::string& { return u.user_id; }, "user", out);
  check_duplicates(c.threads, [](const ThreadRecord& t) -> const std::string& { return t.thread_id; }, "thread", out);
  check_duplicates(c.posts, [](const PostRecord& p) -> const std::string& { return p.post_id; }, "post", out);
  check_duplicates(c.contracts, [](const ContractRecord& k) -> const std::string& { return k.contract_id; },
                   "contract", out);

  std::set<std::string> users;
  for (const auto& u : c.users) users.insert(u.user_id);
  std::map<std::string, const PostRecord*> posts;
  for (const auto& p : c.posts) posts.emplace(p.post_id, &p);
  std::set<std::string> threads;
  std::map<std::string, std::int64_t> authored;
  for (const auto& t : c.threads) {
    threads.insert(t.thread_id);
    if (!users.contains(t.author_id)) {
      out.push_back({"dangling_reference", t.thread_id, "thread author " + t.author_id + " does not exist"});
    }
    ++authored[t.author_id];
  }

  for (const auto& u : c.users) {
    if (u.thread_count < 0 || u.post_count < 0) {
      out.push_back({"negative_count", u.user_id, "thread_count and post_count must be >= 0"});
    }
    // Only checked when the dump carries the user's threads at all.
    auto it = authored.find(u.user_id);
    if (it != authored.end() && u.thread_count > it->second) {
      out.push_back({"thread_count_exceeds_threads", u.user_id,
                     "thread_count " + std::to_string(u.thread_count) + " exceeds " +
                         std::to_string(it->second) + " authored threads"});
    }
  }

  for (const auto& p : c.posts) {
    if (!threads.contains(p.thread_id)) {
      out.push_back({"dangling_reference", p.post_id, "thread " + p.thread_id + " does not exist"});
    }
    if (!users.contains(p.author_id)) {
      out.push_back({"dangling_reference", p.post_id, "author " + p.author_id + " does not exist"});
    }
    if (p.quoted_post_id) {
      auto it = posts.find(*p.quoted_post_id);
      if (it == posts.end()) {
        out.push_back({"dangling_reference", p.post_id, "quoted post " + *p.quoted_post_id + " does not exist"});
      } else if (it->second == &p || it->second->created_at > p.created_at) {
        out.push_back({"quote_not_earlier", p.post_id, "quoted post " + *p.quoted_post_id + " is not earlier"});
      }
    }
  }

  for (const auto& k : c.contracts) {
    if (k.initiator_id == k.counterparty_id) {
      out.push_back({"self_contract", k.contract_id, "initiator equals counterparty"});
    }
    for (const auto* id : {&k.initiator_id, &k.counterparty_id}) {
      if (!users.contains(*id)) {
        out.push_back({"dangling_reference", k.contract_id, "user " + *id + " does not exist"});
      }
    }
  }
  return out;
}

ForumCorpus parse_corpus(std::string_view jsonl, std::string source_path) {
  ForumCorpus c;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    auto text = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line;
    if (text.find_first_not_of(" \t\r") != std::string_view::npos) {
      json r;
      try {
        r = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line);
      }
      if (!r.is_object()) throw ParseError("record is not a JSON object", line);
      add_record(c, r, line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  c.provenance = {std::move(source_path), io::sha256_hex(jsonl), ingest_time()};
  return finish(std::move(c));
}

ForumCorpus ingest_corpus(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("corpus file not found: " + path.string());
  auto c = parse_corpus(io::read_file(path), path.string());
  // The file's modification time keeps re-ingesting unchanged input reproducible.
  const auto mtime = std::chrono::file_clock::to_sys(std::filesystem::last_write_time(path));
  c.provenance.ingested_at = ingest_time(std::chrono::system_clock::to_time_t(
      std::chrono::time_point_cast<std::chrono::system_clock::duration>(mtime)));
  return c;
}

std::string serialize_corpus(const ForumCorpus& c) {
  std::vector<json> out;
  auto h = io::header("khid.corpus");
  h["provenance"] = {{"source_path", c.provenance.source_path},
                     {"source_digest", c.provenance.source_digest},
                     {"ingested_at", c.provenance.ingested_at}};
  out.push_back(std::move(h));
  for (const auto& u : c.users) {
    out.push_back({{"kind", "user"}, {"user_id", u.user_id}, {"username", u.username},
                   {"thread_count", u.thread_count}, {"post_count", u.post_count}, {"reputation", u.reputation}});
  }
  for (const auto& t : c.threads) {
    json r{{"kind", "thread"}, {"thread_id", t.thread_id}, {"author_id", t.author_id},
           {"title", t.title}, {"created_at", t.created_at}};
    if (!t.category.empty()) r["category"] = t.category;
    out.push_back(std::move(r));
  }
  for (const auto& p : c.posts) {
    json r{{"kind", "post"}, {"post_id", p.post_id}, {"thread_id", p.thread_id}, {"author_id", p.author_id},
           {"body", p.body}, {"created_at", p.created_at}};
    r["quoted_post_id"] = p.quoted_post_id ? json(*p.quoted_post_id) : json(nullptr);
    out.push_back(std::move(r));
  }
  for (const auto& k : c.contracts) {
    out.push_back({{"kind", "contract"}, {"contract_id", k.contract_id}, {"initiator_id", k.initiator_id},
                   {"counterparty_id", k.counterparty_id}, {"created_at", k.created_at}});
  }
  return io::dump_jsonl(out);
}

ForumCorpus preprocess_corpus(const ForumCorpus& c) {
  ForumCorpus out = c;
  for (auto& t : out.threads) t.title = text::preprocess_text(t.title);
  for (auto& p : out.posts) p.body = text::preprocess_text(p.body);
  return out;
}

CorpusIndex::CorpusIndex(const ForumCorpus& c) {
  for (const auto& u : c.users) users_.emplace(u.user_id, &u);
  for (const auto& t : c.threads) threads_.emplace(t.thread_id, &t);
  for (const auto& p : c.posts) posts_.emplace(p.post_id, &p);

  auto earlier = [](const auto* a, const auto* b) {
    return a->created_at != b->created_at ? a->created_at < b->created_at : a < b;
  };
  for (const auto& p : c.posts) {
    auto t = threads_.find(p.thread_id);
    if (t == threads_.end() || t->second->author_id != p.author_id) continue;
    auto& slot = opening_[p.thread_id];
    if (!slot || p.created_at < slot->created_at ||
        (p.created_at == slot->created_at && p.post_id < slot->post_id)) {
      slot = &p;
    }
  }
  for (const auto& t : c.threads) threads_by_[t.author_id].push_back(&t);
  for (const auto& p : c.posts) {
    if (!is_opening_post(p)) replies_by_[p.author_id].push_back(&p);
  }
  for (auto& [_, v] : threads_by_) std::stable_sort(v.begin(), v.end(), earlier);
  for (auto& [_, v] : replies_by_) std::stable_sort(v.begin(), v.end(), earlier);
}

const UserRecord* CorpusIndex::user(std::string_view id) const {
  auto it = users_.find(std::string(id));
  return it == users_.end() ? nullptr : it->second;
}

const ThreadRecord* CorpusIndex::thread(std::string_view id) const {
  auto it = threads_.find(std::string(id));
  return it == threads_.end() ? nullptr : it->second;
}

const PostRecord* CorpusIndex::post(std::string_view id) const {
  auto it = posts_.find(std::string(id));
  return it == posts_.end() ? nullptr : it->second;
}

const PostRecord* CorpusIndex::opening_post(std::string_view thread_id) const {
  auto it = opening_.find(std::string(thread_id));
  return it == opening_.end() ? nullptr : it->second;
}

bool CorpusIndex::is_opening_post(const PostRecord& p) const { return opening_post(p.thread_id) == &p; }

const std::vector<const ThreadRecord*>& CorpusIndex::threads_by(std::string_view user_id) const {
  static const std::vector<const ThreadRecord*> empty;
  auto it = threads_by_.find(std::string(user_id));
  return it == threads_by_.end() ? empty : it->second;
}

const std::vector<const PostRecord*>& CorpusIndex::replies_by(std::string_view user_id) const {
  static const std::vector<const PostRecord*> empty;
  auto it = replies_by_.find(std::string(user_id));
  return it == replies_by_.end() ? empty : it->second;
}

std::vector<std::string> CorpusIndex::thread_texts(std::string_view user_id) const {
  std::vector<std::string> out;
  for (const auto* t : threads_by(user_id)) {
    std::string s = t->title;
    if (const auto* op = opening_post(t->thread_id); op && !op->body.empty()) {
      if (!s.empty()) s += ' ';
      s += op->body;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> CorpusIndex::reply_texts(std::string_view user_id) const {
  std::vector<std::string> out;
  for (const auto* p : replies_by(user_id)) out.push_back(p->body);
  return out;
}

}  // namespace khid::corpus
