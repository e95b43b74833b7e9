#pragma once

// Brute-force reference for the beam search: walks every branch of the
// configuration tree with no pruning and keeps the lowest final score.

#include <limits>
#include <optional>
#include <vector>

#include "dynilm/engine.hpp"

namespace dynilm::testing {

struct ExhaustiveResult {
  std::vector<SwitchEvent> events;
  double score = std::numeric_limits<double>::infinity();
  std::size_t leaves = 0;
  std::size_t nodes = 0;
};

inline void explore(const Engine& engine, const Configuration& config, Index j, ExhaustiveResult& best,
                    std::size_t node_limit) {
  if (++best.nodes > node_limit) return;
  for (; j < engine.end(); ++j) {
    const auto change = engine.detect(config, j);
    if (change.kind == ChangeKind::none) continue;
    const auto options = engine.candidates(config, change);
    if (options.empty()) {
      explore(engine, engine.mark_unexplained(config, change, j), j + 1, best, node_limit);
      return;
    }
    for (const auto& c : options) explore(engine, engine.apply(config, c, change.k_star), j + 1, best, node_limit);
    return;
  }
  ++best.leaves;
  const double score = engine.final_score(config);
  if (score < best.score) {
    best.score = score;
    best.events = config.events;
  }
}

/// nullopt when the tree has more than `node_limit` nodes.
inline std::optional<ExhaustiveResult> exhaustive_search(const SignalSeries& y_m, const std::vector<DeviceModel>& library,
                                                         const EngineParams& params, std::size_t node_limit = 200000) {
  const Engine engine(y_m, library, params);
  ExhaustiveResult best;
  explore(engine, engine.initial(), engine.start(), best, node_limit);
  if (best.nodes > node_limit) return std::nullopt;
  return best;
}

}  // namespace dynilm::testing
