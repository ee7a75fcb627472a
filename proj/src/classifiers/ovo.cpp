#include "debris/classifiers/ovo.hpp"

#include <cmath>

namespace debris {

std::vector<std::pair<int, int>> ovo_pairs(int num_classes) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < num_classes; ++a) {
    for (int b = a + 1; b < num_classes; ++b) pairs.emplace_back(a, b);
  }
  return pairs;
}

std::vector<int> ovo_wins(int num_classes, std::span<const std::pair<int, int>> pairs,
                          std::span<const double> decisions) {
  if (pairs.size() != decisions.size()) fail(ErrorKind::DimensionError, "one decision per pair required");
  std::vector<int> wins(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    ++wins.at(static_cast<std::size_t>(decisions[p] > 0 ? pairs[p].first : pairs[p].second));
  }
  return wins;
}

int ovo_vote(int num_classes, std::span<const std::pair<int, int>> pairs,
             std::span<const double> decisions) {
  const auto wins = ovo_wins(num_classes, pairs, decisions);
  std::vector<double> margin(wins.size(), 0.0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int winner = decisions[p] > 0 ? pairs[p].first : pairs[p].second;
    margin[static_cast<std::size_t>(winner)] += std::abs(decisions[p]);
  }
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c), bu = static_cast<std::size_t>(best);
    if (wins[cu] > wins[bu] || (wins[cu] == wins[bu] && margin[cu] > margin[bu])) best = c;
  }
  return best;
}

}  // namespace debris
