#pragma once

#include <vector>

#include "gblab/adam.hpp"
#include "gblab/tape.hpp"
#include "gblab/types.hpp"

namespace gblab {

// Glue between a tape and the host-side parameter matrices: after backward(),
// one call applies an Adam update to every bound matrix.
struct ParamBinding {
  Mat* host;
  ad::Var var;
};

inline void step_params(AdamState& opt, ad::Tape& t,
                        const std::vector<ParamBinding>& bindings) {
  std::vector<Mat*> hosts;
  std::vector<const Mat*> grads;
  hosts.reserve(bindings.size());
  grads.reserve(bindings.size());
  for (const auto& b : bindings) {
    hosts.push_back(b.host);
    grads.push_back(&t.grad(b.var));
  }
  opt.step(hosts, grads);
}

// Decorrelates seed streams that share one user-facing seed.
inline Seed mix_seed(Seed seed, Seed salt) {
  Seed z = seed + salt * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace gblab
