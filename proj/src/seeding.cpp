#include "forge/seeding.hpp"

#include "forge/error.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace forge {

uint64_t splitmix64(uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view text) noexcept {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t global_seed, std::string_view name) noexcept {
  return splitmix64(global_seed ^ fnv1a64(name));
}

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

int64_t uniform_index(at::Generator& gen, int64_t n) {
  require(n >= 1, "uniform_index: n must be >= 1");
  return torch::randint(n, {1}, gen, torch::kInt64).item<int64_t>();
}

double uniform_real(at::Generator& gen) {
  return torch::rand({1}, gen, torch::kFloat64).item<double>();
}

}  // namespace forge
