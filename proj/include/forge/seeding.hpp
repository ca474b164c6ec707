#pragma once

#include <ATen/core/Generator.h>

#include <cstdint>
#include <string_view>

namespace forge {

/// One step of the splitmix64 sequence (Steele, Lea, Flood).
uint64_t splitmix64(uint64_t x) noexcept;

/// 64-bit FNV-1a hash.
uint64_t fnv1a64(std::string_view text) noexcept;

/// Seed for a named stage: splitmix64(global_seed ^ fnv1a64(name)).
uint64_t derive_seed(uint64_t global_seed, std::string_view name) noexcept;

/// Independent CPU generator seeded deterministically.
at::Generator make_generator(uint64_t seed);

/// Uniform integer in [0, n) drawn from `gen`.
int64_t uniform_index(at::Generator& gen, int64_t n);

/// Uniform real in [0, 1) drawn from `gen`.
double uniform_real(at::Generator& gen);

}  // namespace forge
