#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace noisegate {

using Rng = std::mt19937_64;

// Stable seed fan-out: every stochastic step derives its seed from
// (master seed, operation name, item index). The mix is fixed across
// platforms and releases so experiments replay bit-for-bit.
uint64_t derive_seed(uint64_t master, std::string_view op, uint64_t index = 0);

// Two-level variant used where a stream is keyed by (outer, inner) indices,
// e.g. (generation, candidate).
uint64_t derive_seed(uint64_t master, std::string_view op, uint64_t outer,
                     uint64_t inner);

}  // namespace noisegate
