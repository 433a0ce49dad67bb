#include "khid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <set>

#include "khid/error.hpp"
#include "khid/rng.hpp"

namespace khid::synth {
namespace {

using Words = std::vector<std::string_view>;

const Words kAttack{"bypass",  "hacking", "hacker",   "hack",    "shell",   "bomber",   "virus",   "bot",
                    "botnet",  "ddos",    "crypter",  "fud",     "rat",     "exploit",  "payload", "rootkit",
                    "keylogger", "stealer", "inject", "spoofer", "booter",  "stresser", "malware", "trojan",
                    "phishing", "combo",  "socks",    "zeroday", "backdoor", "binder"};
const Words kMarket{"selling", "buying", "price",   "vouch",  "escrow", "btc",   "offer",  "cheap",
                    "deal",    "service", "lifetime", "license", "refund", "stock", "wallet", "profit"};
const std::vector<Words> kBenign{
    {"game", "steam", "fps", "console", "league", "ranked", "mod", "server", "minecraft", "clan", "match", "skins",
     "loot", "quest", "patch", "controller"},
    {"python", "java", "compile", "function", "library", "variable", "debug", "github", "framework", "syntax", "loop",
     "module", "script", "database", "tutorial", "homework"},
    {"hello", "thanks", "music", "movie", "weekend", "coffee", "school", "weather", "sports", "travel", "food",
     "friends", "funny", "story", "welcome", "holiday"}};
const Words kFiller{"the", "a",    "is",   "for",   "and",  "to",   "with", "this", "my",   "new",
                    "anyone", "help", "looking", "best", "good", "just", "need", "about", "know", "what"};
const Words kSyllables{"dark", "zero", "cyber", "neo", "ghost", "night", "byte", "blue", "red", "shadow",
                       "pixel", "storm", "frost", "void", "nova", "king", "wolf", "lynx", "echo", "flux"};
const std::vector<std::string_view> kBenignCategory{"gaming", "coding", "lounge"};

constexpr std::time_t kEpoch = 1577836800;  // 2020-01-01T00:00:00Z

std::string iso(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string padded(std::string_view prefix, std::size_t i, int width) {
  std::string n = std::to_string(i);
  return std::string(prefix) + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n;
}

struct Persona {
  bool key = false;
  double attack_rate = 0;  // share of content words from the attack/market pool
  std::size_t theme = 0;   // benign theme
};

class Writer {
 public:
  explicit Writer(Rng& rng) : rng_(rng) {}

  std::string words(const Persona& p, int count) {
    std::string out;
    for (int i = 0; i < count; ++i) {
      if (!out.empty()) out += ' ';
      const double u = rng_.uniform();
      if (u < 0.3) {
        out += pick(kFiller);
      } else if (rng_.bernoulli(p.attack_rate)) {
        out += rng_.bernoulli(0.7) ? pick(kAttack) : pick(kMarket);
      } else {
        out += pick(kBenign[p.theme]);
      }
    }
    return out;
  }

  std::string decorate(std::string body) {
    if (rng_.bernoulli(0.1)) body += " see https://files.example.net/" + std::to_string(rng_.below(100000));
    if (rng_.bernoulli(0.05)) body += " [code]int x = " + std::to_string(rng_.below(100)) + ";[/code]";
    if (rng_.bernoulli(0.1)) body += "!!";
    return body;
  }

 private:
  std::string pick(const Words& w) { return std::string(w[rng_.below(w.size())]); }
  Rng& rng_;
};

}  // namespace

void SyntheticSpec::validate() const {
  if (users < 2) throw ContractError("synth: need at least 2 users");
  if (!(key_fraction > 0 && key_fraction < 1)) throw ContractError("synth: key fraction must lie in (0, 1)");
  if (signal < 0 || signal > 1) throw ContractError("synth: signal must lie in [0, 1]");
  for (double f : {mimic_fraction, quiet_fraction, quote_density}) {
    if (f < 0 || f > 1) throw ContractError("synth: fractions must lie in [0, 1]");
  }
  if (thread_density < 0 || contract_density < 0) throw ContractError("synth: densities must be non-negative");
}

io::json SyntheticSpec::to_json() const {
  return {{"users", users},
          {"key_fraction", key_fraction},
          {"signal", signal},
          {"mimic_fraction", mimic_fraction},
          {"quiet_fraction", quiet_fraction},
          {"quote_density", quote_density},
          {"thread_density", thread_density},
          {"contract_density", contract_density},
          {"seed", seed}};
}

SyntheticCorpus generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.users);
  const auto n_key = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(spec.key_fraction * spec.users)), 1,
                                             n - 1);
  const int width = static_cast<int>(std::to_string(n).size());
  const double s = spec.signal;

  Rng pick(spec.seed, 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  pick.shuffle(order);
  std::vector<Persona> people(n);
  std::vector<std::size_t> keys, others;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    people[i].key = r < n_key;
    people[i].theme = pick.below(kBenign.size());
    (people[i].key ? keys : others).push_back(i);
  }
  std::sort(keys.begin(), keys.end());
  std::sort(others.begin(), others.end());
  const double key_rate = 0.05 + 0.45 * s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = people[i];
    if (p.key) {
      p.attack_rate = pick.bernoulli(spec.quiet_fraction) ? 0.05 : key_rate;
    } else {
      p.attack_rate = pick.bernoulli(spec.mimic_fraction) ? key_rate : 0.03;
    }
  }

  SyntheticCorpus out;
  auto& c = out.corpus;
  Rng rng(spec.seed, 2);
  Writer writer(rng);
  auto uid = [&](std::size_t i) { return padded("u", i + 1, width); };

  // Users and their threads.
  std::vector<int> threads_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = people[i];
    corpus::UserRecord u;
    u.user_id = uid(i);
    u.username = std::string(kSyllables[rng.below(kSyllables.size())]) +
                 std::string(kSyllables[rng.below(kSyllables.size())]) + std::to_string(rng.below(100));
    if (p.key) {
      threads_of[i] = 20 + static_cast<int>(rng.below(8));
      u.post_count = 400 + static_cast<std::int64_t>(rng.below(1200));
      u.reputation = 101 + static_cast<std::int64_t>(rng.below(500));
    } else if (rng.bernoulli(0.08)) {
      // Busy ordinary users: active, but without standing.
      threads_of[i] = 20 + static_cast<int>(rng.below(6));
      u.post_count = 400 + static_cast<std::int64_t>(rng.below(400));
      u.reputation = static_cast<std::int64_t>(rng.below(100));
    } else {
      threads_of[i] = static_cast<int>(rng.below(4));
      u.post_count = static_cast<std::int64_t>(rng.below(350));
      u.reputation = static_cast<std::int64_t>(rng.below(140)) - 20;
    }
    u.thread_count = threads_of[i];
    c.users.push_back(std::move(u));
  }

  // Partner choice: key users mostly engage key users, in proportion to
  // the signal; everyone else engages at random.
  auto partner = [&](std::size_t self) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      std::size_t j;
      if (people[self].key && rng.bernoulli(0.25 + 0.7 * s)) {
        j = keys[rng.below(keys.size())];
      } else if (!people[self].key && rng.bernoulli(0.5 + 0.45 * s)) {
        j = others[rng.below(others.size())];
      } else {
        j = rng.below(n);
      }
      if (j != self) return j;
    }
    return (self + 1) % n;
  };

  std::size_t thread_seq = 0, post_seq = 0;
  std::time_t clock = kEpoch;
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < threads_of[i]; ++t) {
      const auto& p = people[i];
      clock += 600 + static_cast<std::time_t>(rng.below(3600));
      corpus::ThreadRecord th;
      th.thread_id = padded("t", ++thread_seq, 6);
      th.author_id = uid(i);
      th.title = writer.words(p, 3 + static_cast<int>(rng.below(4)));
      th.created_at = iso(clock);
      th.category = p.key && rng.bernoulli(0.3) ? "market" : std::string(kBenignCategory[p.theme]);
      c.threads.push_back(th);

      std::vector<corpus::PostRecord> thread_posts;
      corpus::PostRecord opening;
      opening.post_id = padded("p", ++post_seq, 7);
      opening.thread_id = th.thread_id;
      opening.author_id = th.author_id;
      opening.body = writer.decorate(writer.words(p, 10 + static_cast<int>(rng.below(15))));
      opening.created_at = th.created_at;
      thread_posts.push_back(opening);

      const double mean_replies = (p.key ? 3.0 : 1.5) * spec.thread_density;
      const int replies = static_cast<int>(rng.below(static_cast<std::size_t>(std::lround(2 * mean_replies)) + 1));
      std::time_t post_clock = clock;
      for (int r = 0; r < replies; ++r) {
        const std::size_t j = partner(i);
        post_clock += 60 + static_cast<std::time_t>(rng.below(1800));
        corpus::PostRecord reply;
        reply.post_id = padded("p", ++post_seq, 7);
        reply.thread_id = th.thread_id;
        reply.author_id = uid(j);
        reply.created_at = iso(post_clock);
        std::string body = writer.words(people[j], 6 + static_cast<int>(rng.below(12)));
        if (rng.bernoulli(spec.quote_density)) {
          const auto& q = thread_posts[rng.below(thread_posts.size())];
          reply.quoted_post_id = q.post_id;
          body = "[quote=" + q.author_id + "]" + q.body.substr(0, 40) + "[/quote] " + body;
        }
        reply.body = writer.decorate(std::move(body));
        thread_posts.push_back(reply);
      }
      for (auto& post : thread_posts) c.posts.push_back(std::move(post));
    }
  }

  // Contracts.
  std::size_t contract_seq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = (people[i].key ? 1.0 + 3.0 * s : 0.4) * spec.contract_density;
    const auto count = rng.below(static_cast<std::size_t>(std::lround(2 * mean)) + 1);
    for (std::size_t k = 0; k < count; ++k) {
      clock += 60 + static_cast<std::time_t>(rng.below(600));
      c.contracts.push_back({padded("k", ++contract_seq, 6), uid(i), uid(partner(i)), iso(clock)});
    }
  }

  c.provenance = {"synth", "", ""};
  c.sort_canonical();
  for (std::size_t i = 0; i < n; ++i) {
    out.truth.push_back({uid(i), people[i].key ? 1 : 0, "planted"});
  }
  return out;
}

std::string corpus_jsonl(const SyntheticCorpus& s, const SyntheticSpec& spec) {
  const std::string body = corpus::serialize_corpus(s.corpus);
  const auto nl = body.find('\n');
  auto header = io::json::parse(body.substr(0, nl));
  header["generator"] = spec.to_json();
  return header.dump() + body.substr(nl);
}

}  // namespace khid::synth
