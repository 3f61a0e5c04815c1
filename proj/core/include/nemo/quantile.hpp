#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nemo/height_field.hpp"
#include "nemo/ray_oracle.hpp"

namespace nemo {

struct TrainConfig {
  double quantile = 0.5;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 8192;       // samples per optimizer step, gathered ray by ray
  int iterations = 5000;
  // Density above the predicted surface plus this margin is zeroed before the
  // loss. Negative disables masking (the default: with a fixed density
  // source, margin-0 masking hides every sample above the current estimate
  // and the estimate can only drift downward).
  double mask_margin = -1.0;
  double heldout_fraction = 0.1;  // fraction of rays excluded from training
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;          // mean weighted pinball loss over the minibatch
  double mean_abs_err = 0.0;  // mean |z - z_hat| over the minibatch
  double wall_time_sec = 0.0;
};

struct TrainHistory {
  std::vector<IterationRecord> records;
  double final_heldout_mean_abs_err = 0.0;  // over held-out samples with w > 0.1
  std::size_t heldout_rays = 0;
  std::size_t train_rays = 0;
};

// Asymmetric piecewise-linear loss; its minimizer over z_hat is the
// q-quantile of the target distribution.
double pinball_loss(double z, double z_hat, double q);
// d/d(z_hat): -q for e >= 0, (1-q) for e < 0, with e = z - z_hat.
double pinball_grad_zhat(double z, double z_hat, double q);

struct WeightedLossResult {
  double total = 0.0;              // sum_i w_i * L_q(z_i, H(x_i, y_i))
  std::vector<double> gradient;    // d(total)/d(field parameters)
};

// Loss of a batch under the current field. Weights are treated as constants;
// gradients flow to the field parameters only.
WeightedLossResult weighted_quantile_loss(const RaySampleBatch& batch,
                                          const HeightField& field, double q);

// Brute-force weighted quantile: smallest v with cumulative weight fraction
// of values <= v reaching q. Reference oracle for tests and diagnostics.
double weighted_quantile_oracle(std::span<const double> values,
                                std::span<const double> weights, double q);

// Zeroes density for samples above the predicted surface plus margin and
// recomputes the transmittance recursion per ray. Negative margin: identity.
RaySampleBatch apply_height_mask(const RaySampleBatch& batch,
                                 const HeightField& field, double margin);

// Adam training loop over minibatches drawn (ray by ray, seeded shuffling)
// from the pooled batches. A seeded fraction of rays is held out and never
// trained on. Throws NumericError naming the iteration if the loss goes
// non-finite.
TrainHistory train_height_field(std::span<const RaySampleBatch> batches,
                                HeightField& field, const TrainConfig& config);

// Mean |z - H(x,y)| over the given rays' samples with weight above w_min.
double mean_abs_surface_error(const RaySampleBatch& batch, const HeightField& field,
                              std::span<const std::size_t> rays, double w_min = 0.1);

// CSV with header iter,loss,mean_abs_err.
std::string history_to_csv(const TrainHistory& history);
void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace nemo
