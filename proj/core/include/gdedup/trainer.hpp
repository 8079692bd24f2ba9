#pragma once

#include <vector>

#include "gdedup/model.hpp"

namespace gdedup {

struct TrainStats {
  std::vector<double> step_losses;  // one entry per optimizer step
  int steps = 0;
};

/// Seeded-shuffle passes over the examples (cfg.epochs of them, one by
/// default) with bias-corrected adaptive-moment updates and global-norm
/// gradient clipping. Deterministic given the config seeds.
TrainStats train(ModelParams& params, const std::vector<TrainingExample>& examples,
                 const TrainConfig& cfg, const TgnConfig& tgn);

}  // namespace gdedup
