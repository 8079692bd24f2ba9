#include "gdedup/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace gdedup {

namespace {

struct Adam {
  ModelParams m;
  ModelParams v;
  long t = 0;

  explicit Adam(const ModelParams& params)
      : m(ModelParams::zeros_like(params)), v(ModelParams::zeros_like(params)) {}

  void step(ModelParams& params, ModelParams& grads, const TrainConfig& cfg) {
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
    auto prefs = params.tensors();
    auto grefs = grads.tensors();
    auto mrefs = m.tensors();
    auto vrefs = v.tensors();
    for (std::size_t i = 0; i < prefs.size(); ++i) {
      auto& p = *prefs[i].tensor;
      const auto& g = *grefs[i].tensor;
      auto& mi = *mrefs[i].tensor;
      auto& vi = *vrefs[i].tensor;
      mi = cfg.adam_beta1 * mi + (1.0 - cfg.adam_beta1) * g;
      vi = cfg.adam_beta2 * vi.array().matrix() +
           (1.0 - cfg.adam_beta2) * g.array().square().matrix();
      p.array() -= cfg.learning_rate * (mi.array() / bc1) /
                   ((vi.array() / bc2).sqrt() + cfg.adam_eps);
    }
  }
};

void clip_gradients(ModelParams& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& ref : grads.tensors()) {
    sq += ref.tensor->squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& ref : grads.tensors()) {
      *ref.tensor *= scale;
    }
  }
}

}  // namespace

TrainStats train(ModelParams& params, const std::vector<TrainingExample>& examples,
                 const TrainConfig& cfg, const TgnConfig& tgn) {
  if (cfg.epochs < 1) {
    throw std::invalid_argument("train: epochs must be >= 1");
  }
  if (cfg.batch_size < 1) {
    throw std::invalid_argument("train: batch size must be >= 1");
  }
  if (examples.empty()) {
    throw std::invalid_argument("train: no training examples");
  }

  TrainStats stats;
  ModelParams grads = ModelParams::zeros_like(params);
  Adam adam(params);
  Rng shuffle_rng(cfg.shuffle_seed);
  Rng tgn_rng(tgn.seed);

  std::vector<std::size_t> order(examples.size());
  std::vector<TrainingExample> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(examples[order[i]]);
      }
      const double loss = loss_and_grads(params, batch, tgn, tgn_rng, grads);
      clip_gradients(grads, cfg.grad_clip_norm);
      adam.step(params, grads, cfg);
      stats.step_losses.push_back(loss);
      ++stats.steps;
    }
  }
  return stats;
}

}  // namespace gdedup
