#include "khid/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "khid/error.hpp"
#include "khid/text.hpp"

namespace khid::annotate {

std::vector<std::string> default_keywords() {
  return {"bypass", "hacking", "hacker", "hack", "shell", "bomber", "virus",
          "bot",    "botnet",  "ddos",   "crypter", "fud", "rat"};
}

void AnnotationRules::validate() const {
  if (min_replies < 0 || min_threads < 0) throw ContractError("annotation thresholds must be non-negative");
  if (keywords.empty()) throw ContractError("keyword list is empty");
  for (const auto& k : keywords) {
    if (k.empty() || text::to_lower(k) != k) throw ContractError("keywords must be non-empty and lowercase: " + k);
  }
  if (keyword_min < 1) throw ContractError("keyword_min must be positive");
}

int count_keyword_hits(std::string_view s, const std::set<std::string>& keywords) {
  auto is_word = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; };
  int hits = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word(s[j])) ++j;
    if (keywords.contains(text::to_lower(s.substr(i, j - i)))) ++hits;
    i = j;
  }
  return hits;
}

std::vector<Candidate> auto_candidates(const corpus::ForumCorpus& c, const AnnotationRules& rules) {
  rules.validate();
  const std::set<std::string> keywords(rules.keywords.begin(), rules.keywords.end());
  corpus::CorpusIndex idx(c);
  std::vector<Candidate> out;
  out.reserve(c.users.size());
  for (const auto& u : c.users) {
    Candidate cand{u.user_id, {}, false};
    cand.hits.behavioral = u.post_count >= rules.min_replies && u.thread_count >= rules.min_threads &&
                           u.reputation > rules.min_reputation;
    for (const auto& t : idx.thread_texts(u.user_id)) {
      cand.hits.keyword_count += count_keyword_hits(text::preprocess_text(t), keywords);
    }
    for (const auto& r : idx.reply_texts(u.user_id)) {
      cand.hits.keyword_count += count_keyword_hits(text::preprocess_text(r), keywords);
    }
    cand.hits.keyword = cand.hits.keyword_count >= rules.keyword_min;
    for (const auto* t : idx.threads_by(u.user_id)) {
      if (t->category == rules.market_category) cand.hits.market = true;
    }
    cand.candidate = cand.hits.behavioral || cand.hits.keyword;
    if (rules.require_market) cand.candidate = cand.candidate && cand.hits.market;
    out.push_back(std::move(cand));
  }
  return out;
}

std::string to_string(Provenance p) { return p == Provenance::Auto ? "auto" : "manual"; }

namespace {

int parse_label(const io::json& v, const std::string& where) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "key") return 1;
    if (s == "non-key") return 0;
  } else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) {
    return v.get<int>();
  }
  throw FormatError(where + ": label must be \"key\" or \"non-key\"");
}

std::string label_name(int label) { return label == 1 ? "key" : "non-key"; }

io::json hits_to_json(const RuleHits& h) {
  return {{"behavioral", h.behavioral}, {"keyword", h.keyword}, {"market", h.market},
          {"keyword_count", h.keyword_count}};
}

}  // namespace

std::vector<LabelOverride> read_overrides(const std::filesystem::path& path) {
  io::require_artifact(path);
  std::vector<LabelOverride> out;
  io::for_each_jsonl(path, [&](const io::json& r, std::size_t line) {
    if (r.value("kind", "") == "header") return;
    if (!r.contains("user_id") || !r["user_id"].is_string() || !r.contains("label")) {
      throw ParseError("override needs user_id and label", line);
    }
    out.push_back({r["user_id"].get<std::string>(), parse_label(r["label"], "line " + std::to_string(line)),
                   r.value("note", "")});
  });
  return out;
}

std::string overrides_to_jsonl(const std::vector<LabelOverride>& overrides) {
  std::vector<io::json> lines;
  for (const auto& o : overrides) {
    lines.push_back({{"user_id", o.user_id}, {"label", label_name(o.label)}, {"note", o.note}});
  }
  return io::dump_jsonl(lines);
}

std::vector<Label> merge_labels(const std::vector<Candidate>& candidates, const std::vector<LabelOverride>& overrides) {
  std::map<std::string, std::size_t> pos;
  std::vector<Label> out;
  for (const auto& c : candidates) {
    pos.emplace(c.user_id, out.size());
    out.push_back({c.user_id, c.candidate ? 1 : 0, Provenance::Auto, c.hits});
  }
  for (const auto& o : overrides) {
    auto it = pos.find(o.user_id);
    if (it == pos.end()) throw LookupError("override references unknown user " + o.user_id);
    if (o.label != 0 && o.label != 1) throw ContractError("override label for " + o.user_id + " is not binary");
    out[it->second].label = o.label;
    out[it->second].provenance = Provenance::Manual;
  }
  return out;
}

std::string labels_to_jsonl(const std::vector<Label>& labels) {
  std::vector<io::json> lines{io::header("khid.labels")};
  for (const auto& l : labels) {
    lines.push_back({{"user_id", l.user_id},
                     {"label", label_name(l.label)},
                     {"provenance", to_string(l.provenance)},
                     {"rule_hits", hits_to_json(l.hits)}});
  }
  return io::dump_jsonl(lines);
}

std::vector<Label> read_labels(const std::filesystem::path& path) {
  io::require_artifact(path);
  std::vector<Label> out;
  bool header = false;
  io::for_each_jsonl(path, [&](const io::json& r, std::size_t line) {
    if (!header) {
      io::check_schema(r, "khid.labels", path);
      header = true;
      return;
    }
    Label l;
    l.user_id = r.at("user_id").get<std::string>();
    l.label = parse_label(r.at("label"), "line " + std::to_string(line));
    l.provenance = r.at("provenance").get<std::string>() == "manual" ? Provenance::Manual : Provenance::Auto;
    const auto& h = r.at("rule_hits");
    l.hits = {h.at("behavioral").get<bool>(), h.at("keyword").get<bool>(), h.at("market").get<bool>(),
              h.at("keyword_count").get<int>()};
    out.push_back(std::move(l));
  });
  if (!header) io::check_schema(io::json::object(), "khid.labels", path);
  return out;
}

}  // namespace khid::annotate
