#include "nemo/spline.hpp"

#include <algorithm>
#include <cmath>

#include "nemo/errors.hpp"

namespace nemo {

std::vector<double> natural_cubic_second_derivs(const std::vector<double>& y, double h) {
  const std::size_t k = y.size();
  std::vector<double> m(k, 0.0);
  if (k < 3) return m;  // straight segment: second derivatives vanish
  const std::size_t n = k - 2;  // interior unknowns
  std::vector<double> diag(n, 4.0), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rhs[i] = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]) / (h * h);
  }
  // Thomas sweep with unit off-diagonals.
  for (std::size_t i = 1; i < n; ++i) {
    const double f = 1.0 / diag[i - 1];
    diag[i] -= f;
    rhs[i] -= f * rhs[i - 1];
  }
  m[n] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
  }
  return m;
}

PathSpline::PathSpline(Vec2 start, Vec2 goal, std::vector<Vec2> interior, double horizon)
    : start_(start), goal_(goal), interior_(std::move(interior)), horizon_(horizon) {
  if (!(horizon_ > 0.0)) throw ValidationError("spline: horizon must be positive");
  rebuild();
}

void PathSpline::set_interior(std::vector<Vec2> interior) {
  if (interior.size() != interior_.size()) {
    throw ValidationError("spline: interior waypoint count cannot change");
  }
  interior_ = std::move(interior);
  rebuild();
}

void PathSpline::rebuild() {
  const std::size_t k = knot_count();
  ys_x_.resize(k);
  ys_y_.resize(k);
  ys_x_[0] = start_.x();
  ys_y_[0] = start_.y();
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    ys_x_[i + 1] = interior_[i].x();
    ys_y_[i + 1] = interior_[i].y();
  }
  ys_x_[k - 1] = goal_.x();
  ys_y_[k - 1] = goal_.y();
  const double h = knot_spacing();
  m_x_ = natural_cubic_second_derivs(ys_x_, h);
  m_y_ = natural_cubic_second_derivs(ys_y_, h);
}

void PathSpline::eval(double tau, Vec2* position, Vec2* velocity,
                      Vec2* acceleration) const {
  const double h = knot_spacing();
  const std::size_t segments = knot_count() - 1;
  const double clamped = std::clamp(tau, 0.0, horizon_);
  std::size_t j = std::min(static_cast<std::size_t>(clamped / h), segments - 1);
  const double s = clamped - static_cast<double>(j) * h;

  auto piece = [&](const std::vector<double>& y, const std::vector<double>& m,
                   double* p, double* v, double* a) {
    const double y0 = y[j], y1 = y[j + 1];
    const double m0 = m[j], m1 = m[j + 1];
    const double b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
    if (p) *p = y0 + s * (b + s * (m0 / 2.0 + s * (m1 - m0) / (6.0 * h)));
    if (v) *v = b + s * (m0 + s * (m1 - m0) / (2.0 * h));
    if (a) *a = m0 + s * (m1 - m0) / h;
  };
  double px, py, vx, vy, ax, ay;
  piece(ys_x_, m_x_, position ? &px : nullptr, velocity ? &vx : nullptr,
        acceleration ? &ax : nullptr);
  piece(ys_y_, m_y_, position ? &py : nullptr, velocity ? &vy : nullptr,
        acceleration ? &ay : nullptr);
  if (position) *position = {px, py};
  if (velocity) *velocity = {vx, vy};
  if (acceleration) *acceleration = {ax, ay};
}

std::vector<PathSample> PathSpline::sample(int total_samples) const {
  if (total_samples < 2) throw ValidationError("spline: need at least 2 samples");
  std::vector<PathSample> out(static_cast<std::size_t>(total_samples));
  for (int i = 0; i < total_samples; ++i) {
    auto& s = out[static_cast<std::size_t>(i)];
    s.tau = horizon_ * static_cast<double>(i) / (total_samples - 1);
    eval(s.tau, &s.position, &s.velocity, &s.acceleration);
  }
  return out;
}

}  // namespace nemo
