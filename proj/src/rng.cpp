#include "csmt/rng.hpp"

#include <algorithm>

namespace csmt {

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
  std::vector<std::size_t> reservoir;
  if (k == 0) return reservoir;
  reservoir.reserve(std::min(n, k));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < k) {
      reservoir.push_back(i);
    } else {
      const std::size_t j = below(i + 1);
      if (j < k) reservoir[j] = i;
    }
  }
  std::sort(reservoir.begin(), reservoir.end());
  return reservoir;
}

}  // namespace csmt
