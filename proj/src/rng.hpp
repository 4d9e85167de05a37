#ifndef BISWIFT_SRC_RNG_HPP_
#define BISWIFT_SRC_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace biswift::detail {

// Engine keyed by a tuple of 64-bit words; independent streams per key.
inline std::mt19937_64 make_engine(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * key.size());
  for (auto k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

template <typename... Ts>
std::mt19937_64 make_engine(Ts... key) {
  return make_engine({static_cast<std::uint64_t>(key)...});
}

}  // namespace biswift::detail

#endif  // BISWIFT_SRC_RNG_HPP_
