#pragma once

#include "grec/eval/scenario.hpp"
#include "grec/eval/synthetic.hpp"

namespace grec {

// The seeded desk-scale benchmark: 2,000 users, 500 items, 8 clusters, 21 days.
inline SyntheticConfig benchmark_synthetic_config(std::uint64_t seed) {
  SyntheticConfig c;
  c.seed = seed;
  c.prototype_scale = 0.6;
  return c;
}

// Hyperparameters tuned for the benchmark. The contrastive objective is
// unbounded below, so the teacher runs a fixed small budget at a low rate.
inline ModelConfig benchmark_model_config(std::size_t feature_dim) {
  ModelConfig m;
  m.teacher_dims = {feature_dim, 64, 32};
  m.contrastive.sgd.learning_rate = 2e-3;
  m.contrastive.epochs_max = 50;
  m.distill.student_dims = {feature_dim, 128, 32};
  m.distill.sgd.learning_rate = 5e-2;
  m.distill.epochs = 400;
  m.distill.patience = 20;
  m.distill.standardize_targets = true;
  m.personalization.sgd.learning_rate = 3e-3;
  return m;
}

inline ScenarioConfig benchmark_scenario_config(std::uint64_t seed) {
  ScenarioConfig s;
  s.seeds = {seed};
  return s;
}

}  // namespace grec
