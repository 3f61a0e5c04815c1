#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace nemo {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First-order optimizer with bias-corrected moment estimates, shared by the
// height-field trainer and the path refiner.
//
// step() performs one full update. For partitioned updates (e.g. parallel
// parameter chunks), call begin_step() once, then update_range() for each
// disjoint chunk; results are identical to a single step() call.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t param_count, AdamConfig config = {});

  void step(std::span<double> params, std::span<const double> grads);

  void begin_step();
  void update_range(std::span<double> params, std::span<const double> grads,
                    std::size_t offset);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t step_ = 0;
};

// Compares an analytic gradient against central finite differences of f at
// n_probes randomly chosen coordinates. Returns the maximum relative error,
// with denominator max(1e-12, |analytic|, |numeric|).
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_grad,
                         std::span<const double> params, double step,
                         int n_probes, std::uint64_t seed);

// Same check restricted to an explicit set of coordinate indices.
double finite_diff_check_at(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> analytic_grad,
                            std::span<const double> params, double step,
                            std::span<const std::size_t> indices);

}  // namespace nemo
