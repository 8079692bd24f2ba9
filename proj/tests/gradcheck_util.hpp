#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gdedup/model.hpp"
#include "gdedup/rng.hpp"

namespace gdedup::testutil {

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel = 0.0;          // over coordinates with non-negligible gradient
  double max_abs_small = 0.0;    // over near-zero-gradient coordinates
  std::string worst_tensor;
  std::map<std::string, std::size_t> per_class;
};

inline std::string tensor_class(const std::string& name) {
  if (name == "embedding") return "embedding";
  if (name.rfind("pos_", 0) == 0) return "positional";
  const auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (name.find("ln_") != std::string::npos) return "layernorm";
  if (name.find(".ffn.") != std::string::npos) {
    return ends_with(".w1") || ends_with(".w2") ? "ffn_weights" : "ffn_biases";
  }
  return ends_with(".wq") || ends_with(".wk") || ends_with(".wv") || ends_with(".wo")
             ? "attention_weights"
             : "attention_biases";
}

/// Central finite differences (step h) against the analytic gradients of
/// loss_and_grads, sampling up to per_class_cap coordinates per tensor class.
/// TGN must be disabled so both loss evaluations see the same computation.
inline GradCheckReport gradient_check(ModelParams& params,
                                      const std::vector<TrainingExample>& batch,
                                      std::size_t per_class_cap = 200,
                                      double h = 1e-4, std::uint64_t sample_seed = 17) {
  TgnConfig tgn;
  tgn.enabled = false;

  ModelParams analytic = ModelParams::zeros_like(params);
  {
    Rng rng(0);
    loss_and_grads(params, batch, tgn, rng, analytic);
  }
  const auto loss_at = [&]() {
    Rng rng(0);
    ModelParams scratch = ModelParams::zeros_like(params);
    return loss_and_grads(params, batch, tgn, rng, scratch);
  };

  // Group coordinates by tensor class, then sample within each class.
  auto prefs = params.tensors();
  auto grefs = analytic.tensors();
  std::map<std::string, std::vector<std::pair<std::size_t, Eigen::Index>>> classes;
  for (std::size_t t = 0; t < prefs.size(); ++t) {
    auto& positions = classes[tensor_class(prefs[t].name)];
    for (Eigen::Index i = 0; i < prefs[t].tensor->size(); ++i) {
      positions.emplace_back(t, i);
    }
  }

  GradCheckReport report;
  Rng sampler(sample_seed);
  for (auto& [class_name, positions] : classes) {
    sampler.shuffle(positions);
    const std::size_t take = std::min(per_class_cap, positions.size());
    report.per_class[class_name] = take;
    for (std::size_t s = 0; s < take; ++s) {
      const auto [t, i] = positions[s];
      double* coord = prefs[t].tensor->data() + i;
      const double saved = *coord;
      *coord = saved + h;
      const double plus = loss_at();
      *coord = saved - h;
      const double minus = loss_at();
      *coord = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double exact = *(grefs[t].tensor->data() + i);
      const double denom = std::max(std::abs(exact), std::abs(numeric));
      ++report.checked;
      if (denom >= 1e-6) {
        const double rel = std::abs(exact - numeric) / denom;
        if (rel > report.max_rel) {
          report.max_rel = rel;
          report.worst_tensor = prefs[t].name;
        }
      } else {
        report.max_abs_small = std::max(report.max_abs_small, std::abs(exact - numeric));
      }
    }
  }
  return report;
}

}  // namespace gdedup::testutil
