#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "khid/annotate.hpp"
#include "khid/corpus.hpp"
#include "khid/io.hpp"

namespace khid::synth {

// Planted-signal forum generator. Key users open many threads, have high
// post counts and reputation, write with attack/market vocabulary and
// interact densely with each other. `signal` in [0, 1] scales how strongly
// vocabulary and interactions separate the two groups.
struct SyntheticSpec {
  int users = 500;
  double key_fraction = 0.15;
  double signal = 1.0;
  // Non-key users who talk like key users but interact like ordinary ones.
  double mimic_fraction = 0.1;
  // Key users whose text carries little signal.
  double quiet_fraction = 0.1;
  double quote_density = 0.3;     // chance that a reply quotes an earlier post
  double thread_density = 1.0;    // scales replies per thread
  double contract_density = 1.0;  // scales contracts per user
  std::uint64_t seed = 7;

  void validate() const;
  io::json to_json() const;
};

struct SyntheticCorpus {
  corpus::ForumCorpus corpus;
  // Planted labels for every user, in override form.
  std::vector<annotate::LabelOverride> truth;
};

SyntheticCorpus generate(const SyntheticSpec& spec);

// JSONL dump in ingest format, with a leading header record carrying the spec.
std::string corpus_jsonl(const SyntheticCorpus& s, const SyntheticSpec& spec);

}  // namespace khid::synth
