#include "nemo/optim.hpp"

#include <cmath>
#include <random>
#include <string>

#include "nemo/errors.hpp"

namespace nemo {

AdamOptimizer::AdamOptimizer(std::size_t param_count, AdamConfig config)
    : config_(config), m_(param_count, 0.0), v_(param_count, 0.0) {
  if (!(config_.learning_rate > 0.0)) {
    throw ValidationError("adam: learning rate must be positive");
  }
}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grads) {
  begin_step();
  update_range(params, grads, 0);
}

void AdamOptimizer::begin_step() { ++step_; }

void AdamOptimizer::update_range(std::span<double> params,
                                 std::span<const double> grads,
                                 std::size_t offset) {
  if (params.size() != grads.size() || offset + params.size() > m_.size()) {
    throw ValidationError("adam: parameter/gradient shape mismatch");
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  // Bias correction at the current step count.
  const double inv_c1 = 1.0 / (1.0 - std::pow(b1, static_cast<double>(step_)));
  const double inv_c2 = 1.0 / (1.0 - std::pow(b2, static_cast<double>(step_)));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  double* m = m_.data() + offset;
  double* v = v_.data() + offset;
  const double* g = grads.data();
  double* p = params.data();
  const std::size_t n = params.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericError("adam: non-finite gradient at index " +
                         std::to_string(offset + i));
    }
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double m_hat = m[i] * inv_c1;
    const double v_hat = v[i] * inv_c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double finite_diff_check_at(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> analytic_grad,
                            std::span<const double> params, double step,
                            std::span<const std::size_t> indices) {
  if (!(step > 0.0)) throw ValidationError("finite_diff_check: step must be positive");
  if (analytic_grad.size() != params.size()) {
    throw ValidationError("finite_diff_check: gradient size mismatch");
  }
  std::vector<double> work(params.begin(), params.end());
  double max_rel = 0.0;
  for (std::size_t idx : indices) {
    if (idx >= work.size()) throw ValidationError("finite_diff_check: index out of range");
    const double saved = work[idx];
    work[idx] = saved + step;
    const double f_plus = f(work);
    work[idx] = saved - step;
    const double f_minus = f(work);
    work[idx] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw NumericError("finite_diff_check: non-finite objective value");
    }
    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double analytic = analytic_grad[idx];
    const double denom =
        std::max({1e-12, std::abs(analytic), std::abs(numeric)});
    max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
  }
  return max_rel;
}

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_grad,
                         std::span<const double> params, double step,
                         int n_probes, std::uint64_t seed) {
  if (n_probes < 1) throw ValidationError("finite_diff_check: n_probes must be >= 1");
  if (params.empty()) throw ValidationError("finite_diff_check: empty parameter vector");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  std::vector<std::size_t> indices(static_cast<std::size_t>(n_probes));
  for (auto& idx : indices) idx = pick(rng);
  return finite_diff_check_at(f, analytic_grad, params, step, indices);
}

}  // namespace nemo
