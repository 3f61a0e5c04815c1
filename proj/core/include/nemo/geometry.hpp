#pragma once

#include <Eigen/Core>
#include <algorithm>

#include "nemo/errors.hpp"

namespace nemo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

// Axis-aligned rectangle in scene units.
struct Rect {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double max_extent() const { return std::max(width(), height()); }
  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }

  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }

  Vec2 clamp(double x, double y) const {
    return {std::clamp(x, x_min, x_max), std::clamp(y, y_min, y_max)};
  }

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max)) {
      throw ValidationError("degenerate bounds: require x_min < x_max and y_min < y_max");
    }
  }
};

}  // namespace nemo
