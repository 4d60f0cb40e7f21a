#include "tabs/split.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace tabs {

SplitResult split_dataset(const std::vector<double>& covariates, std::uint64_t seed) {
  const std::size_t n = covariates.size();
  SplitResult out;
  if (n == 0) return out;
  const std::size_t quota[3] = {n * 6 / 10, n * 2 / 10, n - n * 6 / 10 - n * 2 / 10};

  // Sainte-Laguë rounding gives the most even interleaving of the three
  // quotas; ties fall to train, then val.
  std::vector<int> sequence;
  sequence.reserve(n);
  std::size_t assigned[3] = {0, 0, 0};
  for (std::size_t step = 0; step < n; ++step) {
    int best = -1;
    double best_score = -1.0;
    for (int g = 0; g < 3; ++g) {
      if (assigned[g] == quota[g]) continue;
      const double score = static_cast<double>(quota[g]) / (2.0 * assigned[g] + 1.0);
      if (score > best_score) {
        best_score = score;
        best = g;
      }
    }
    sequence.push_back(best);
    ++assigned[best];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return covariates[a] < covariates[b]; });

  std::vector<std::size_t>* groups[3] = {&out.train, &out.val, &out.test};
  std::size_t cursor = 0;
  for (std::size_t bin = 0; bin < 5; ++bin) {
    const std::size_t lo = bin * n / 5, hi = (bin + 1) * n / 5;
    std::vector<std::size_t> members(order.begin() + lo, order.begin() + hi);
    std::mt19937_64 rng(mix_seed(seed, bin));
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng() % i]);
    for (std::size_t m : members) groups[sequence[cursor++]]->push_back(m);
  }
  for (auto* g : groups) std::sort(g->begin(), g->end());
  return out;
}

}  // namespace tabs
