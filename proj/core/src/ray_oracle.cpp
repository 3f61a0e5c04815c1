#include "nemo/ray_oracle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include "nemo/errors.hpp"

namespace nemo {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ValidationError(std::string("ray dump: truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, std::span<const double> values) {
  std::vector<float> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_f32(std::istream& in, std::vector<double>& values, std::size_t count,
              const char* what) {
  std::vector<float> buf(count);
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(count * sizeof(float)))) {
    throw ValidationError(std::string("ray dump: truncated while reading ") + what);
  }
  values.resize(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(buf[i]);
}

}  // namespace

void CameraPose::validate() const {
  if (std::abs(view_dir.norm() - 1.0) > 1e-9 || std::abs(up_hint.norm() - 1.0) > 1e-9) {
    throw ValidationError("camera: view direction and up hint must be unit vectors");
  }
  if (view_dir.cross(up_hint).norm() < 1e-9) {
    throw ValidationError("camera: view direction parallel to up hint");
  }
  if (!(hfov > 0.0) || image_width < 1 || image_height < 1) {
    throw ValidationError("camera: invalid field of view or image size");
  }
}

void RaySampleBatch::validate(double tolerance) const {
  const std::size_t n = points.size();
  if (densities.size() != n || deltas.size() != n || transmittances.size() != n ||
      opacities.size() != n || weights.size() != n) {
    throw ValidationError("ray batch: array length mismatch");
  }
  if (ray_offsets.empty() && n > 0) {
    throw ValidationError("ray batch: samples present but no rays");
  }
  std::uint32_t prev = 0;
  for (std::size_t r = 0; r < ray_offsets.size(); ++r) {
    if (ray_offsets[r] > n || (r > 0 && ray_offsets[r] < prev)) {
      throw ValidationError("ray batch: ray offsets not nondecreasing/in range");
    }
    prev = ray_offsets[r];
  }
  if (!ray_offsets.empty() && ray_offsets[0] != 0) {
    throw ValidationError("ray batch: first ray offset must be 0");
  }
  for (std::size_t r = 0; r < num_rays(); ++r) {
    double t = 1.0;
    for (std::size_t i = ray_begin(r); i < ray_end(r); ++i) {
      if (densities[i] < 0.0) throw ValidationError("ray batch: negative density");
      if (!(deltas[i] > 0.0)) throw ValidationError("ray batch: nonpositive delta");
      const double alpha = -std::expm1(-densities[i] * deltas[i]);
      if (std::abs(alpha - opacities[i]) > tolerance ||
          std::abs(t - transmittances[i]) > tolerance ||
          std::abs(t * alpha - weights[i]) > tolerance) {
        throw ValidationError("ray batch: transmittance/opacity recursion violated at sample " +
                              std::to_string(i));
      }
      t *= 1.0 - alpha;
    }
  }
}

std::vector<CameraPose> make_orbit_cameras(int n, double radius, double altitude,
                                           const Vec3& target, double fov) {
  if (n < 1) throw ValidationError("orbit: need at least one pose");
  if (!(radius > 0.0)) throw ValidationError("orbit: radius must be positive");
  std::vector<CameraPose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / n;
    CameraPose pose;
    pose.position = Vec3(target.x() + radius * std::cos(angle),
                         target.y() + radius * std::sin(angle), altitude);
    pose.view_dir = (target - pose.position).normalized();
    pose.up_hint = Vec3(0.0, 0.0, 1.0);
    pose.hfov = fov;
    pose.validate();
    poses.push_back(pose);
  }
  return poses;
}

double synth_density(const TerrainSpec& spec, const Vec3& point, double rho0,
                     double softness) {
  if (!(rho0 > 0.0)) throw ValidationError("synth_density: rho0 must be positive");
  if (softness < 0.0) throw ValidationError("synth_density: softness must be >= 0");
  const double s = surface_height(spec, point.x(), point.y());
  if (softness == 0.0) {
    return point.z() < s ? rho0 : 0.0;
  }
  const double a = (s - point.z()) / softness;
  const double sig = a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
  return rho0 * sig;
}

VolumetricWeights volumetric_weights(std::span<const double> densities,
                                     std::span<const double> deltas) {
  if (densities.size() != deltas.size()) {
    throw ValidationError("volumetric weights: densities/deltas length mismatch");
  }
  VolumetricWeights out;
  const std::size_t n = densities.size();
  out.transmittance.resize(n);
  out.opacity.resize(n);
  out.weight.resize(n);
  double t = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (densities[i] < 0.0) throw ValidationError("volumetric weights: negative density");
    if (!(deltas[i] > 0.0)) throw ValidationError("volumetric weights: nonpositive delta");
    const double alpha = -std::expm1(-densities[i] * deltas[i]);
    out.transmittance[i] = t;
    out.opacity[i] = alpha;
    out.weight[i] = t * alpha;
    t *= 1.0 - alpha;
  }
  return out;
}

RaySampleBatch cast_rays(const TerrainSpec& spec, std::span<const CameraPose> poses,
                         int rays_per_pose, int samples_per_ray, double near,
                         double far, double rho0, double softness,
                         std::uint64_t seed) {
  if (!(near < far)) throw ValidationError("cast_rays: require near < far");
  if (rays_per_pose < 1) throw ValidationError("cast_rays: rays_per_pose must be >= 1");
  if (samples_per_ray < 2) throw ValidationError("cast_rays: samples_per_ray must be >= 2");
  if (poses.empty()) throw ValidationError("cast_rays: no camera poses");
  for (const CameraPose& pose : poses) pose.validate();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RaySampleBatch batch;
  const std::size_t total_rays = poses.size() * static_cast<std::size_t>(rays_per_pose);
  const std::size_t total = total_rays * static_cast<std::size_t>(samples_per_ray);
  batch.points.reserve(total);
  batch.densities.reserve(total);
  batch.deltas.reserve(total);
  batch.transmittances.reserve(total);
  batch.opacities.reserve(total);
  batch.weights.reserve(total);
  batch.ray_offsets.reserve(total_rays);

  std::vector<double> depths(static_cast<std::size_t>(samples_per_ray));
  std::vector<double> rho(static_cast<std::size_t>(samples_per_ray));
  std::vector<double> delta(static_cast<std::size_t>(samples_per_ray));
  const double span = far - near;

  for (const CameraPose& pose : poses) {
    const Vec3 right = pose.view_dir.cross(pose.up_hint).normalized();
    const Vec3 up = right.cross(pose.view_dir);
    const double tan_h = std::tan(0.5 * pose.hfov);
    const double tan_v = tan_h * static_cast<double>(pose.image_height) / pose.image_width;
    for (int r = 0; r < rays_per_pose; ++r) {
      const double sx = 2.0 * unit(rng) - 1.0;
      const double sy = 2.0 * unit(rng) - 1.0;
      const Vec3 dir = (pose.view_dir + sx * tan_h * right + sy * tan_v * up).normalized();

      // One jittered depth per equal-width bin in [near, far].
      for (int i = 0; i < samples_per_ray; ++i) {
        depths[static_cast<std::size_t>(i)] = near + span * (i + unit(rng)) / samples_per_ray;
      }
      for (int i = 0; i < samples_per_ray; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        delta[idx] = (i + 1 < samples_per_ray ? depths[idx + 1] : far) - depths[idx];
      }

      batch.ray_offsets.push_back(static_cast<std::uint32_t>(batch.points.size()));
      for (int i = 0; i < samples_per_ray; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Vec3 p = pose.position + depths[idx] * dir;
        rho[idx] = synth_density(spec, p, rho0, softness);
        batch.points.push_back(p);
        batch.densities.push_back(rho[idx]);
        batch.deltas.push_back(delta[idx]);
      }
      const VolumetricWeights vw = volumetric_weights(rho, delta);
      batch.transmittances.insert(batch.transmittances.end(), vw.transmittance.begin(),
                                  vw.transmittance.end());
      batch.opacities.insert(batch.opacities.end(), vw.opacity.begin(), vw.opacity.end());
      batch.weights.insert(batch.weights.end(), vw.weight.begin(), vw.weight.end());
    }
  }
  return batch;
}

void save_ray_dump(const RaySampleBatch& batch, std::ostream& out) {
  out.write("NRAY", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(batch.num_rays()));
  write_u32(out, static_cast<std::uint32_t>(batch.size()));
  for (std::uint32_t offset : batch.ray_offsets) write_u32(out, offset);
  std::vector<double> xyz;
  xyz.reserve(batch.size() * 3);
  for (const Vec3& p : batch.points) {
    xyz.push_back(p.x());
    xyz.push_back(p.y());
    xyz.push_back(p.z());
  }
  write_f32(out, xyz);
  write_f32(out, batch.densities);
  write_f32(out, batch.deltas);
  write_f32(out, batch.transmittances);
  write_f32(out, batch.opacities);
  if (!out) throw ValidationError("ray dump: write failed");
}

void save_ray_dump_file(const RaySampleBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write ray dump: " + path);
  save_ray_dump(batch, out);
}

RaySampleBatch load_ray_dump(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NRAY", 4) != 0) {
    throw ValidationError("ray dump: bad magic, expected NRAY");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != 1) {
    throw ValidationError("ray dump: unsupported version " + std::to_string(version));
  }
  const std::uint32_t ray_count = read_u32(in, "ray count");
  const std::uint32_t sample_count = read_u32(in, "sample count");

  RaySampleBatch batch;
  batch.ray_offsets.resize(ray_count);
  for (std::uint32_t r = 0; r < ray_count; ++r) {
    batch.ray_offsets[r] = read_u32(in, "ray offsets");
  }
  std::vector<double> xyz;
  read_f32(in, xyz, static_cast<std::size_t>(sample_count) * 3, "points");
  batch.points.resize(sample_count);
  for (std::uint32_t i = 0; i < sample_count; ++i) {
    batch.points[i] = Vec3(xyz[i * 3], xyz[i * 3 + 1], xyz[i * 3 + 2]);
  }
  read_f32(in, batch.densities, sample_count, "densities");
  read_f32(in, batch.deltas, sample_count, "deltas");
  read_f32(in, batch.transmittances, sample_count, "transmittances");
  read_f32(in, batch.opacities, sample_count, "opacities");
  char extra;
  if (in.read(&extra, 1)) {
    throw ValidationError("ray dump: trailing data after sample arrays");
  }

  // Weights are derived data; recompute rather than trusting the dump.
  batch.weights.resize(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) {
    batch.weights[i] = batch.transmittances[i] * batch.opacities[i];
  }
  batch.validate(1e-5);
  return batch;
}

RaySampleBatch load_ray_dump_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open ray dump: " + path);
  return load_ray_dump(in);
}

}  // namespace nemo
