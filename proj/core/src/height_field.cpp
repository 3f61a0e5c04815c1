#include "nemo/height_field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "nemo/errors.hpp"

namespace nemo {

namespace {

constexpr double kLn2 = std::numbers::ln2;

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Zero-centered softplus: act(0) == 0, act' = sigmoid, act'' = sig*(1-sig).
inline double act_value(Activation a, double x) {
  if (a == Activation::relu) return x > 0.0 ? x : 0.0;
  const double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return sp - kLn2;
}

inline double act_d1(Activation a, double x) {
  if (a == Activation::relu) return x > 0.0 ? 1.0 : 0.0;
  return stable_sigmoid(x);
}

inline double act_d2(Activation a, double x) {
  if (a == Activation::relu) return 0.0;
  const double s = stable_sigmoid(x);
  return s * (1.0 - s);
}

// Spatial hash of a grid vertex into a power-of-two table.
inline std::uint32_t hash_vertex(std::uint32_t ix, std::uint32_t iy, std::uint32_t mask) {
  return ((ix * 1u) ^ (iy * 2654435761u)) & mask;
}

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
    throw ValidationError(std::string("checkpoint: truncated while reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_array(std::ostream& out, std::span<const double> values) {
  std::vector<float> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_f32_array(std::istream& in, std::span<double> values, const char* what) {
  std::vector<float> buf(values.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw ValidationError(std::string("checkpoint: truncated while reading ") + what);
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(buf[i]);
}

}  // namespace

const char* to_string(Activation a) {
  return a == Activation::relu ? "relu" : "softplus";
}

Activation activation_from_string(const std::string& name) {
  if (name == "softplus") return Activation::softplus;
  if (name == "relu") return Activation::relu;
  throw ValidationError("unknown activation \"" + name + "\"");
}

void HeightFieldConfig::validate() const {
  if (levels < 1) throw ValidationError("height field: levels must be >= 1");
  if (base_resolution < 1) throw ValidationError("height field: base_resolution must be >= 1");
  if (features_per_level < 1) {
    throw ValidationError("height field: features_per_level must be >= 1");
  }
  if (hidden_width < 1) throw ValidationError("height field: hidden_width must be >= 1");
  if (table_size < 2 || (table_size & (table_size - 1)) != 0) {
    throw ValidationError("height field: table_size must be a power of two >= 2");
  }
  if (!(growth_factor > 0.0)) {
    throw ValidationError("height field: growth_factor must be positive");
  }
  if (!(height_scale > 0.0)) {
    throw ValidationError("height field: height_scale must be positive");
  }
  bounds.validate();
  const std::vector<int> res = level_resolutions();
  for (std::size_t l = 1; l < res.size(); ++l) {
    if (res[l] <= res[l - 1]) {
      throw ValidationError("height field: level resolutions must be strictly increasing");
    }
  }
}

std::vector<int> HeightFieldConfig::level_resolutions() const {
  std::vector<int> res(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    res[static_cast<std::size_t>(l)] =
        static_cast<int>(std::floor(base_resolution * std::pow(growth_factor, l)));
  }
  return res;
}

struct HeightField::Encoding {
  struct Level {
    std::uint32_t idx[4];  // corner order 00, 10, 01, 11
    double sx, sy;         // smoothstep weights
    double dsx, dsy;       // s'(t) * d(t)/d(coordinate)
    double d2sx, d2sy;     // s''(t) * (d(t)/d(coordinate))^2
    double cross;          // s'(tx) s'(ty) * scale_x * scale_y
  };
  std::vector<Level> levels;
};

HeightField::HeightField(HeightFieldConfig config) : config_(std::move(config)) {
  config_.validate();
  resolutions_ = config_.level_resolutions();
  input_dim_ = config_.levels * config_.features_per_level;
  const std::size_t feat_count = static_cast<std::size_t>(config_.levels) *
                                 config_.table_size * config_.features_per_level;
  const std::size_t w1 = static_cast<std::size_t>(config_.hidden_width) * input_dim_;
  mlp_offset_ = feat_count;
  b1_offset_ = mlp_offset_ + w1;
  w2_offset_ = b1_offset_ + config_.hidden_width;
  b2_offset_ = w2_offset_ + config_.hidden_width;
  params_.assign(b2_offset_ + 1, 0.0);
}

HeightField HeightField::random_init(HeightFieldConfig config, std::uint64_t seed) {
  HeightField field(std::move(config));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> feat_dist(-1e-4, 1e-4);
  for (std::size_t i = 0; i < field.mlp_offset_; ++i) field.params_[i] = feat_dist(rng);

  const int d = field.input_dim_;
  const int h = field.config_.hidden_width;
  const double a1 = std::sqrt(6.0 / (d + h));
  std::uniform_real_distribution<double> w1_dist(-a1, a1);
  for (std::size_t i = field.mlp_offset_; i < field.b1_offset_; ++i) {
    field.params_[i] = w1_dist(rng);
  }
  const double a2 = std::sqrt(6.0 / (h + 1));
  std::uniform_real_distribution<double> w2_dist(-a2, a2);
  for (std::size_t i = field.w2_offset_; i < field.b2_offset_; ++i) {
    field.params_[i] = w2_dist(rng);
  }
  return field;
}

void HeightField::encode(double x, double y, Encoding& enc) const {
  const Rect& b = config_.bounds;
  const Vec2 p = b.clamp(x, y);
  const double u = (p.x() - b.x_min) / b.width();
  const double v = (p.y() - b.y_min) / b.height();
  enc.levels.resize(static_cast<std::size_t>(config_.levels));
  const std::uint32_t mask = config_.table_size - 1;
  for (int l = 0; l < config_.levels; ++l) {
    const int res = resolutions_[static_cast<std::size_t>(l)];
    const double px = u * res;
    const double py = v * res;
    int ix = static_cast<int>(px);
    int iy = static_cast<int>(py);
    ix = std::min(ix, res - 1);
    iy = std::min(iy, res - 1);
    const double tx = px - ix;
    const double ty = py - iy;
    auto& lv = enc.levels[static_cast<std::size_t>(l)];
    const auto ux = static_cast<std::uint32_t>(ix);
    const auto uy = static_cast<std::uint32_t>(iy);
    lv.idx[0] = hash_vertex(ux, uy, mask);
    lv.idx[1] = hash_vertex(ux + 1, uy, mask);
    lv.idx[2] = hash_vertex(ux, uy + 1, mask);
    lv.idx[3] = hash_vertex(ux + 1, uy + 1, mask);
    const double scale_x = res / b.width();
    const double scale_y = res / b.height();
    lv.sx = smoothstep::value(tx);
    lv.sy = smoothstep::value(ty);
    lv.dsx = smoothstep::d1(tx) * scale_x;
    lv.dsy = smoothstep::d1(ty) * scale_y;
    lv.d2sx = smoothstep::d2(tx) * scale_x * scale_x;
    lv.d2sy = smoothstep::d2(ty) * scale_y * scale_y;
    lv.cross = smoothstep::d1(tx) * smoothstep::d1(ty) * scale_x * scale_y;
  }
}

double HeightField::query(double x, double y, Workspace& ws) const {
  thread_local Encoding enc;
  encode(x, y, enc);
  const int fpl = config_.features_per_level;
  const int hw = config_.hidden_width;
  ws.corner_index.resize(static_cast<std::size_t>(config_.levels) * 4);
  ws.corner_weight.resize(static_cast<std::size_t>(config_.levels) * 4);
  ws.features.assign(static_cast<std::size_t>(input_dim_), 0.0);
  ws.pre_act.resize(static_cast<std::size_t>(hw));
  ws.hidden.resize(static_cast<std::size_t>(hw));

  const double* feat_table = params_.data();
  const std::size_t level_stride = static_cast<std::size_t>(config_.table_size) * fpl;
  for (int l = 0; l < config_.levels; ++l) {
    const auto& lv = enc.levels[static_cast<std::size_t>(l)];
    const double w[4] = {(1.0 - lv.sx) * (1.0 - lv.sy), lv.sx * (1.0 - lv.sy),
                         (1.0 - lv.sx) * lv.sy, lv.sx * lv.sy};
    const double* table = feat_table + level_stride * l;
    double* f = ws.features.data() + static_cast<std::size_t>(l) * fpl;
    for (int k = 0; k < 4; ++k) {
      ws.corner_index[static_cast<std::size_t>(l) * 4 + k] = lv.idx[k];
      ws.corner_weight[static_cast<std::size_t>(l) * 4 + k] = w[k];
      const double* entry = table + static_cast<std::size_t>(lv.idx[k]) * fpl;
      for (int c = 0; c < fpl; ++c) f[c] += w[k] * entry[c];
    }
  }

  const double* w1 = params_.data() + mlp_offset_;
  const double* b1 = params_.data() + b1_offset_;
  const double* w2 = params_.data() + w2_offset_;
  const double b2 = params_[b2_offset_];
  double out = b2;
  for (int h = 0; h < hw; ++h) {
    const double* row = w1 + static_cast<std::size_t>(h) * input_dim_;
    double q = b1[h];
    for (int d = 0; d < input_dim_; ++d) q += row[d] * ws.features[static_cast<std::size_t>(d)];
    ws.pre_act[static_cast<std::size_t>(h)] = q;
    const double a = act_value(config_.activation, q);
    ws.hidden[static_cast<std::size_t>(h)] = a;
    out += w2[h] * a;
  }
  return config_.height_offset + config_.height_scale * out;
}

double HeightField::query(double x, double y) const {
  thread_local Workspace ws;
  return query(x, y, ws);
}

Vec2 HeightField::gradient(double x, double y) const {
  thread_local Encoding enc;
  thread_local std::vector<double> f, dfx, dfy;
  encode(x, y, enc);
  const int fpl = config_.features_per_level;
  f.assign(static_cast<std::size_t>(input_dim_), 0.0);
  dfx.assign(static_cast<std::size_t>(input_dim_), 0.0);
  dfy.assign(static_cast<std::size_t>(input_dim_), 0.0);

  const std::size_t level_stride = static_cast<std::size_t>(config_.table_size) * fpl;
  for (int l = 0; l < config_.levels; ++l) {
    const auto& lv = enc.levels[static_cast<std::size_t>(l)];
    const double* table = params_.data() + level_stride * l;
    const double* f00 = table + static_cast<std::size_t>(lv.idx[0]) * fpl;
    const double* f10 = table + static_cast<std::size_t>(lv.idx[1]) * fpl;
    const double* f01 = table + static_cast<std::size_t>(lv.idx[2]) * fpl;
    const double* f11 = table + static_cast<std::size_t>(lv.idx[3]) * fpl;
    const std::size_t base = static_cast<std::size_t>(l) * fpl;
    for (int c = 0; c < fpl; ++c) {
      const double bx = (f10[c] - f00[c]) * (1.0 - lv.sy) + (f11[c] - f01[c]) * lv.sy;
      const double by = (f01[c] - f00[c]) * (1.0 - lv.sx) + (f11[c] - f10[c]) * lv.sx;
      f[base + c] = f00[c] * (1.0 - lv.sx) * (1.0 - lv.sy) + f10[c] * lv.sx * (1.0 - lv.sy) +
                    f01[c] * (1.0 - lv.sx) * lv.sy + f11[c] * lv.sx * lv.sy;
      dfx[base + c] = lv.dsx * bx;
      dfy[base + c] = lv.dsy * by;
    }
  }

  const double* w1 = params_.data() + mlp_offset_;
  const double* b1 = params_.data() + b1_offset_;
  const double* w2 = params_.data() + w2_offset_;
  double gx = 0.0, gy = 0.0;
  for (int h = 0; h < config_.hidden_width; ++h) {
    const double* row = w1 + static_cast<std::size_t>(h) * input_dim_;
    double q = b1[h];
    double ux = 0.0, uy = 0.0;
    for (int d = 0; d < input_dim_; ++d) {
      q += row[d] * f[static_cast<std::size_t>(d)];
      ux += row[d] * dfx[static_cast<std::size_t>(d)];
      uy += row[d] * dfy[static_cast<std::size_t>(d)];
    }
    const double t = w2[h] * act_d1(config_.activation, q);
    gx += t * ux;
    gy += t * uy;
  }
  return {config_.height_scale * gx, config_.height_scale * gy};
}

Mat2 HeightField::hessian(double x, double y) const {
  if (config_.activation != Activation::softplus) {
    throw ValidationError(
        "height field: hessian unsupported with relu activation (not C^2)");
  }
  thread_local Encoding enc;
  thread_local std::vector<double> f, dfx, dfy, dxx, dyy, dxy;
  encode(x, y, enc);
  const int fpl = config_.features_per_level;
  const auto dim = static_cast<std::size_t>(input_dim_);
  f.assign(dim, 0.0);
  dfx.assign(dim, 0.0);
  dfy.assign(dim, 0.0);
  dxx.assign(dim, 0.0);
  dyy.assign(dim, 0.0);
  dxy.assign(dim, 0.0);

  const std::size_t level_stride = static_cast<std::size_t>(config_.table_size) * fpl;
  for (int l = 0; l < config_.levels; ++l) {
    const auto& lv = enc.levels[static_cast<std::size_t>(l)];
    const double* table = params_.data() + level_stride * l;
    const double* f00 = table + static_cast<std::size_t>(lv.idx[0]) * fpl;
    const double* f10 = table + static_cast<std::size_t>(lv.idx[1]) * fpl;
    const double* f01 = table + static_cast<std::size_t>(lv.idx[2]) * fpl;
    const double* f11 = table + static_cast<std::size_t>(lv.idx[3]) * fpl;
    const std::size_t base = static_cast<std::size_t>(l) * fpl;
    for (int c = 0; c < fpl; ++c) {
      const double bx = (f10[c] - f00[c]) * (1.0 - lv.sy) + (f11[c] - f01[c]) * lv.sy;
      const double by = (f01[c] - f00[c]) * (1.0 - lv.sx) + (f11[c] - f10[c]) * lv.sx;
      const double corner_mix = f11[c] - f10[c] - f01[c] + f00[c];
      f[base + c] = f00[c] * (1.0 - lv.sx) * (1.0 - lv.sy) + f10[c] * lv.sx * (1.0 - lv.sy) +
                    f01[c] * (1.0 - lv.sx) * lv.sy + f11[c] * lv.sx * lv.sy;
      dfx[base + c] = lv.dsx * bx;
      dfy[base + c] = lv.dsy * by;
      dxx[base + c] = lv.d2sx * bx;
      dyy[base + c] = lv.d2sy * by;
      dxy[base + c] = lv.cross * corner_mix;
    }
  }

  const double* w1 = params_.data() + mlp_offset_;
  const double* b1 = params_.data() + b1_offset_;
  const double* w2 = params_.data() + w2_offset_;
  double hxx = 0.0, hyy = 0.0, hxy = 0.0;
  for (int h = 0; h < config_.hidden_width; ++h) {
    const double* row = w1 + static_cast<std::size_t>(h) * input_dim_;
    double q = b1[h];
    double ux = 0.0, uy = 0.0, cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (int d = 0; d < input_dim_; ++d) {
      const auto di = static_cast<std::size_t>(d);
      q += row[d] * f[di];
      ux += row[d] * dfx[di];
      uy += row[d] * dfy[di];
      cxx += row[d] * dxx[di];
      cyy += row[d] * dyy[di];
      cxy += row[d] * dxy[di];
    }
    const double t1 = w2[h] * act_d1(config_.activation, q);
    const double t2 = w2[h] * act_d2(config_.activation, q);
    hxx += t2 * ux * ux + t1 * cxx;
    hyy += t2 * uy * uy + t1 * cyy;
    hxy += t2 * ux * uy + t1 * cxy;
  }
  Mat2 out;
  const double s = config_.height_scale;
  out << s * hxx, s * hxy, s * hxy, s * hyy;
  return out;
}

void HeightField::backward(const Workspace& ws, double upstream,
                           std::span<double> grad) const {
  if (grad.size() != params_.size()) {
    throw ValidationError("height field: gradient accumulator size mismatch");
  }
  const int fpl = config_.features_per_level;
  const int hw = config_.hidden_width;
  const double gy = upstream * config_.height_scale;

  const double* w1 = params_.data() + mlp_offset_;
  const double* w2 = params_.data() + w2_offset_;
  double* g_w1 = grad.data() + mlp_offset_;
  double* g_b1 = grad.data() + b1_offset_;
  double* g_w2 = grad.data() + w2_offset_;

  grad[b2_offset_] += gy;
  thread_local std::vector<double> dfeat;
  dfeat.assign(static_cast<std::size_t>(input_dim_), 0.0);
  for (int h = 0; h < hw; ++h) {
    const auto hi = static_cast<std::size_t>(h);
    g_w2[h] += gy * ws.hidden[hi];
    const double r = gy * w2[h] * act_d1(config_.activation, ws.pre_act[hi]);
    g_b1[h] += r;
    const double* row = w1 + hi * input_dim_;
    double* g_row = g_w1 + hi * input_dim_;
    for (int d = 0; d < input_dim_; ++d) {
      const auto di = static_cast<std::size_t>(d);
      g_row[d] += r * ws.features[di];
      dfeat[di] += r * row[d];
    }
  }

  const std::size_t level_stride = static_cast<std::size_t>(config_.table_size) * fpl;
  for (int l = 0; l < config_.levels; ++l) {
    double* g_table = grad.data() + level_stride * l;
    const double* df = dfeat.data() + static_cast<std::size_t>(l) * fpl;
    for (int k = 0; k < 4; ++k) {
      const std::size_t slot = static_cast<std::size_t>(l) * 4 + k;
      const double w = ws.corner_weight[slot];
      double* entry = g_table + static_cast<std::size_t>(ws.corner_index[slot]) * fpl;
      for (int c = 0; c < fpl; ++c) entry[c] += w * df[c];
    }
  }
}

void HeightField::backward_batch(std::span<const Vec2> points,
                                 std::span<const double> upstream,
                                 std::span<double> grad) const {
  if (points.size() != upstream.size()) {
    throw ValidationError("height field: points/upstream size mismatch");
  }
  Workspace ws;
  for (std::size_t i = 0; i < points.size(); ++i) {
    query(points[i].x(), points[i].y(), ws);
    backward(ws, upstream[i], grad);
  }
}

void HeightField::save(std::ostream& out) const {
  out.write("NEMO", 4);
  write_u32(out, 1);
  nlohmann::json meta;
  meta["levels"] = config_.levels;
  meta["base_resolution"] = config_.base_resolution;
  meta["growth_factor"] = config_.growth_factor;
  meta["features_per_level"] = config_.features_per_level;
  meta["table_size"] = config_.table_size;
  meta["hidden_width"] = config_.hidden_width;
  meta["activation"] = to_string(config_.activation);
  meta["bounds"] = {config_.bounds.x_min, config_.bounds.x_max, config_.bounds.y_min,
                    config_.bounds.y_max};
  meta["height_scale"] = config_.height_scale;
  meta["height_offset"] = config_.height_offset;
  const std::string text = meta.dump();
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_f32_array(out, params_);
  if (!out) throw ValidationError("checkpoint: write failed");
}

HeightField HeightField::load(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NEMO", 4) != 0) {
    throw ValidationError("checkpoint: bad magic, expected NEMO");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != 1) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t meta_len = read_u32(in, "metadata length");
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), meta_len)) {
    throw ValidationError("checkpoint: truncated metadata");
  }
  HeightFieldConfig config;
  try {
    const nlohmann::json meta = nlohmann::json::parse(text);
    config.levels = meta.at("levels").get<int>();
    config.base_resolution = meta.at("base_resolution").get<int>();
    config.growth_factor = meta.at("growth_factor").get<double>();
    config.features_per_level = meta.at("features_per_level").get<int>();
    config.table_size = meta.at("table_size").get<std::uint32_t>();
    config.hidden_width = meta.at("hidden_width").get<int>();
    config.activation = activation_from_string(meta.at("activation").get<std::string>());
    const auto& b = meta.at("bounds");
    config.bounds = Rect{b.at(0).get<double>(), b.at(1).get<double>(),
                         b.at(2).get<double>(), b.at(3).get<double>()};
    config.height_scale = meta.at("height_scale").get<double>();
    config.height_offset = meta.at("height_offset").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: invalid metadata: ") + e.what());
  }
  HeightField field(config);
  read_f32_array(in, field.params_, "parameters");
  char extra;
  if (in.read(&extra, 1)) {
    throw ValidationError("checkpoint: trailing data after parameter arrays");
  }
  for (double p : field.params_) {
    if (!std::isfinite(p)) throw ValidationError("checkpoint: non-finite parameter");
  }
  return field;
}

void HeightField::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  save(out);
}

HeightField HeightField::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  return load(in);
}

}  // namespace nemo
