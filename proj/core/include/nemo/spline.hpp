#pragma once

#include <vector>

#include "nemo/geometry.hpp"

namespace nemo {

struct PathSample {
  double tau = 0.0;
  Vec2 position{0.0, 0.0};
  Vec2 velocity{0.0, 0.0};
  Vec2 acceleration{0.0, 0.0};
};

// 2D natural cubic spline through fixed endpoints and N interior waypoints,
// uniform knots on [0, horizon]. C^2 everywhere; the map from waypoint
// coordinates to spline coefficients is linear, so waypoint gradients of any
// sampled quantity follow by exact chain rule.
class PathSpline {
 public:
  PathSpline(Vec2 start, Vec2 goal, std::vector<Vec2> interior, double horizon);

  const Vec2& start() const { return start_; }
  const Vec2& goal() const { return goal_; }
  double horizon() const { return horizon_; }
  std::size_t interior_count() const { return interior_.size(); }
  const std::vector<Vec2>& interior() const { return interior_; }
  void set_interior(std::vector<Vec2> interior);

  void eval(double tau, Vec2* position, Vec2* velocity = nullptr,
            Vec2* acceleration = nullptr) const;

  // Uniform tau grid including both endpoints; total_samples >= 2.
  std::vector<PathSample> sample(int total_samples) const;

  std::size_t knot_count() const { return interior_.size() + 2; }
  double knot_spacing() const { return horizon_ / static_cast<double>(knot_count() - 1); }

 private:
  void rebuild();

  Vec2 start_, goal_;
  std::vector<Vec2> interior_;
  double horizon_;
  std::vector<double> ys_x_, ys_y_;  // knot values per axis
  std::vector<double> m_x_, m_y_;    // knot second derivatives (natural BC)
};

// Solves the natural-cubic second-derivative system for uniformly spaced
// knots (Thomas algorithm). Exposed for the basis construction in the
// planner and for tests.
std::vector<double> natural_cubic_second_derivs(const std::vector<double>& y, double h);

}  // namespace nemo
