#pragma once

#include <cstdint>
#include <string>

#include "recg/corpus.hpp"
#include "recg/semstore.hpp"

namespace recg {

/// Two-domain synthetic benchmark. Items sit on shared latent topics plus a
/// per-domain offset scaled by `bias_strength`; user sequences follow a
/// topic-level Markov chain that both domains share.
struct SynthConfig {
  std::size_t n_items = 2000;  // per domain
  std::size_t n_users = 5000;  // per domain
  std::size_t d_h = 64;
  double bias_strength = 3.0;
  std::size_t n_latent_topics = 32;
  double transition_sharpness = 3.0;
  double item_noise = 0.5;
  std::size_t seq_len_min = 10;
  std::size_t seq_len_max = 20;
  std::uint64_t seed = 1;
  std::string source_name = "A";
  std::string target_name = "B";

  void validate() const;
};

struct SynthOutput {
  Corpus corpus;
  SemanticStore store;
};

SynthOutput synthesize(const SynthConfig& config);

}  // namespace recg
