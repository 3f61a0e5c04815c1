#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nemo/geometry.hpp"

namespace nemo {

enum class Activation { softplus, relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Multi-resolution feature-grid encoding followed by a small MLP.
//
// The default activation is a zero-centered softplus, ln(1+e^x) - ln 2, so the
// network is C^2 (second spatial derivatives exist everywhere) and a freshly
// initialized field evaluates close to height_offset. ReLU is available for
// fidelity experiments; hessian() is unsupported in that mode.
struct HeightFieldConfig {
  int levels = 8;
  int base_resolution = 16;       // cells per axis at the coarsest level
  double growth_factor = 1.5;     // per-level resolution multiplier
  int features_per_level = 2;
  std::uint32_t table_size = 1u << 16;  // entries per level, power of two
  int hidden_width = 64;
  Activation activation = Activation::softplus;
  Rect bounds{-1.0, 1.0, -1.0, 1.0};
  double height_scale = 1.0;   // output denormalization: z = offset + scale * y
  double height_offset = 0.0;

  void validate() const;
  std::vector<int> level_resolutions() const;
};

// Continuous, differentiable elevation model H: R^2 -> R.
//
// Queries clamp coordinates to the configured bounds first, so the field is
// constant outward; the planner's line searches may step outside bounds.
class HeightField {
 public:
  explicit HeightField(HeightFieldConfig config);  // all parameters zero

  // Feature entries uniform in [-1e-4, 1e-4]; MLP weights Glorot-uniform
  // (a = sqrt(6/(fan_in+fan_out))); biases zero. Deterministic per seed.
  static HeightField random_init(HeightFieldConfig config, std::uint64_t seed);

  double query(double x, double y) const;
  Vec2 gradient(double x, double y) const;
  Mat2 hessian(double x, double y) const;  // softplus only

  // Scratch buffers for a fused forward/backward pass over many points.
  struct Workspace {
    std::vector<std::uint32_t> corner_index;  // 4 per level
    std::vector<double> corner_weight;        // 4 per level
    std::vector<double> features;             // levels * features_per_level
    std::vector<double> pre_act;              // hidden_width
    std::vector<double> hidden;               // hidden_width
    std::vector<double> d_feature;            // scratch for the backward pass
  };

  double query(double x, double y, Workspace& ws) const;
  // Accumulates upstream * dz/dtheta into grad (size param_count()) for the
  // point whose forward pass filled ws. Touches only the entries the forward
  // pass used, plus the MLP block.
  void backward(const Workspace& ws, double upstream, std::span<double> grad) const;

  // Accumulates sum_k upstream[k] * dz_k/dtheta over a batch of points.
  void backward_batch(std::span<const Vec2> points, std::span<const double> upstream,
                      std::span<double> grad) const;

  const HeightFieldConfig& config() const { return config_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Flat-parameter layout: [feature tables level 0..L-1][W1][b1][W2][b2].
  std::size_t feature_param_count() const { return mlp_offset_; }
  std::size_t mlp_offset() const { return mlp_offset_; }

  void save(std::ostream& out) const;
  static HeightField load(std::istream& in);
  void save_file(const std::string& path) const;
  static HeightField load_file(const std::string& path);

 private:
  struct Encoding;  // per-point, per-level interpolation state
  void encode(double x, double y, Encoding& enc) const;

  HeightFieldConfig config_;
  std::vector<int> resolutions_;
  std::vector<double> params_;
  std::size_t mlp_offset_ = 0;   // start of W1
  std::size_t b1_offset_ = 0;
  std::size_t w2_offset_ = 0;
  std::size_t b2_offset_ = 0;
  int input_dim_ = 0;  // levels * features_per_level
};

// Quintic smoothstep interpolation kernel: C^2 across grid-cell boundaries.
namespace smoothstep {
inline double value(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
inline double d1(double t) { return 30.0 * t * t * (1.0 + t * (t - 2.0)); }
inline double d2(double t) { return t * (60.0 + t * (-180.0 + 120.0 * t)); }
}  // namespace smoothstep

}  // namespace nemo
