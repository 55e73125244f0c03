#include "noisegate/seed.h"

namespace noisegate {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view op, uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a(op)) ^ splitmix64(index + 1));
}

uint64_t derive_seed(uint64_t master, std::string_view op, uint64_t outer,
                     uint64_t inner) {
  return splitmix64(derive_seed(master, op, outer) ^ splitmix64(~inner));
}

}  // namespace noisegate
