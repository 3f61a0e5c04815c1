#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nemo/geometry.hpp"
#include "nemo/terrain.hpp"

namespace nemo {

// Pinhole camera in an east-north-up scene frame.
struct CameraPose {
  Vec3 position{0.0, 0.0, 0.0};
  Vec3 view_dir{0.0, 0.0, -1.0};  // unit
  Vec3 up_hint{0.0, 0.0, 1.0};    // unit, non-parallel to view_dir
  double hfov = 1.0;              // horizontal field of view, radians
  int image_width = 512;
  int image_height = 512;

  void validate() const;
};

// Flat per-sample arrays for a set of rays cast into a scene. Within each
// ray: T_1 = 1, T_{i+1} = T_i * (1 - alpha_i), alpha_i = 1 - exp(-rho_i *
// delta_i), w_i = T_i * alpha_i. Immutable after construction.
struct RaySampleBatch {
  std::vector<Vec3> points;
  std::vector<double> densities;
  std::vector<double> deltas;
  std::vector<double> transmittances;
  std::vector<double> opacities;
  std::vector<double> weights;
  std::vector<std::uint32_t> ray_offsets;  // start index of each ray's samples

  std::size_t size() const { return points.size(); }
  std::size_t num_rays() const { return ray_offsets.size(); }
  std::size_t ray_begin(std::size_t ray) const { return ray_offsets[ray]; }
  std::size_t ray_end(std::size_t ray) const {
    return ray + 1 < ray_offsets.size() ? ray_offsets[ray + 1] : size();
  }

  // Checks array lengths and the transmittance recursion (tolerance on the
  // recomputed T/alpha, absolute).
  void validate(double tolerance = 1e-9) const;
};

// n poses evenly spaced on a horizontal circle, all looking at target.
std::vector<CameraPose> make_orbit_cameras(int n, double radius, double altitude,
                                           const Vec3& target, double fov);

// Synthetic stand-in for a trained volumetric density: rho0 below the
// analytic surface, 0 above (hard), or a sigmoid ramp of the given softness.
double synth_density(const TerrainSpec& spec, const Vec3& point, double rho0,
                     double softness);

struct VolumetricWeights {
  std::vector<double> transmittance;
  std::vector<double> opacity;
  std::vector<double> weight;
};

// Transmittance/opacity/weight recursion along one ray.
// sum_i w_i = 1 - prod_i (1 - alpha_i) <= 1.
VolumetricWeights volumetric_weights(std::span<const double> densities,
                                     std::span<const double> deltas);

// Casts rays_per_pose rays per pose at uniformly random image-plane positions
// (seeded), samples stratified-uniform depths in [near, far], and fills a
// batch with densities and volumetric weights. Deterministic per seed.
RaySampleBatch cast_rays(const TerrainSpec& spec, std::span<const CameraPose> poses,
                         int rays_per_pose, int samples_per_ray, double near,
                         double far, double rho0, double softness,
                         std::uint64_t seed);

// NRAY binary dump: magic "NRAY", version u32 LE = 1, ray count, sample
// count, then LE f32 arrays (offsets as u32): ray_offsets, points (xyz
// interleaved), densities, deltas, transmittances, opacities. Weights are
// recomputed on load and the stored T/alpha are checked against the
// recursion within 1e-5 absolute.
RaySampleBatch load_ray_dump(std::istream& in);
RaySampleBatch load_ray_dump_file(const std::string& path);
void save_ray_dump(const RaySampleBatch& batch, std::ostream& out);
void save_ray_dump_file(const RaySampleBatch& batch, const std::string& path);

}  // namespace nemo
