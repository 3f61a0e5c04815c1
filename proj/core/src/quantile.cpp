#include "nemo/quantile.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "nemo/errors.hpp"
#include "nemo/optim.hpp"
#include "nemo/parallel.hpp"

namespace nemo {

namespace {

void check_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw ValidationError("quantile must lie strictly inside (0, 1)");
  }
}

// (batch index, ray index) pair for pooling rays across batches.
struct RayRef {
  std::uint32_t batch = 0;
  std::uint32_t ray = 0;
};

}  // namespace

void TrainConfig::validate() const {
  check_quantile(quantile);
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning rate must be positive");
  if (iterations < 1) throw ValidationError("train: iterations must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    throw ValidationError("train: heldout_fraction must lie in [0, 1)");
  }
}

double pinball_loss(double z, double z_hat, double q) {
  check_quantile(q);
  const double e = z - z_hat;
  return e >= 0.0 ? q * e : -(1.0 - q) * e;
}

double pinball_grad_zhat(double z, double z_hat, double q) {
  check_quantile(q);
  return (z - z_hat) >= 0.0 ? -q : (1.0 - q);
}

WeightedLossResult weighted_quantile_loss(const RaySampleBatch& batch,
                                          const HeightField& field, double q) {
  check_quantile(q);
  if (batch.size() == 0) throw ValidationError("weighted loss: empty batch");
  WeightedLossResult out;
  out.gradient.assign(field.param_count(), 0.0);
  HeightField::Workspace ws;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec3& p = batch.points[i];
    const double w = batch.weights[i];
    const double z_hat = field.query(p.x(), p.y(), ws);
    const double e = p.z() - z_hat;
    out.total += w * (e >= 0.0 ? q * e : -(1.0 - q) * e);
    const double upstream = w * (e >= 0.0 ? -q : (1.0 - q));
    if (upstream != 0.0) field.backward(ws, upstream, out.gradient);
  }
  return out;
}

double weighted_quantile_oracle(std::span<const double> values,
                                std::span<const double> weights, double q) {
  check_quantile(q);
  if (values.size() != weights.size() || values.empty()) {
    throw ValidationError("weighted quantile: values/weights size mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ValidationError("weighted quantile: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("weighted quantile: all weights zero");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += weights[order[k]];
    // include ties: advance while the next value is equal
    while (k + 1 < order.size() && values[order[k + 1]] == values[order[k]]) {
      ++k;
      cum += weights[order[k]];
    }
    if (cum / total >= q) return values[order[k]];
  }
  return values[order.back()];
}

RaySampleBatch apply_height_mask(const RaySampleBatch& batch,
                                 const HeightField& field, double margin) {
  RaySampleBatch out = batch;
  if (margin < 0.0) return out;  // disabled
  for (std::size_t r = 0; r < batch.num_rays(); ++r) {
    const std::size_t begin = batch.ray_begin(r);
    const std::size_t end = batch.ray_end(r);
    bool changed = false;
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& p = batch.points[i];
      if (p.z() > field.query(p.x(), p.y()) + margin && out.densities[i] != 0.0) {
        out.densities[i] = 0.0;
        changed = true;
      }
    }
    if (!changed) continue;
    double t = 1.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double alpha = -std::expm1(-out.densities[i] * out.deltas[i]);
      out.transmittances[i] = t;
      out.opacities[i] = alpha;
      out.weights[i] = t * alpha;
      t *= 1.0 - alpha;
    }
  }
  return out;
}

double mean_abs_surface_error(const RaySampleBatch& batch, const HeightField& field,
                              std::span<const std::size_t> rays, double w_min) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r : rays) {
    for (std::size_t i = batch.ray_begin(r); i < batch.ray_end(r); ++i) {
      if (batch.weights[i] <= w_min) continue;
      const Vec3& p = batch.points[i];
      sum += std::abs(p.z() - field.query(p.x(), p.y()));
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

TrainHistory train_height_field(std::span<const RaySampleBatch> batches,
                                HeightField& field, const TrainConfig& config) {
  config.validate();
  if (batches.empty()) throw ValidationError("train: no ray batches provided");

  std::vector<RayRef> rays;
  for (std::uint32_t b = 0; b < batches.size(); ++b) {
    batches[b].validate();
    for (std::uint32_t r = 0; r < batches[b].num_rays(); ++r) {
      if (batches[b].ray_end(r) > batches[b].ray_begin(r)) rays.push_back({b, r});
    }
  }
  if (rays.empty()) throw ValidationError("train: ray batches contain no samples");

  std::mt19937_64 rng(config.seed);
  std::shuffle(rays.begin(), rays.end(), rng);
  const auto heldout_count = static_cast<std::size_t>(
      std::floor(config.heldout_fraction * static_cast<double>(rays.size())));
  std::vector<RayRef> heldout(rays.end() - static_cast<std::ptrdiff_t>(heldout_count),
                              rays.end());
  rays.resize(rays.size() - heldout_count);

  TrainHistory history;
  history.train_rays = rays.size();
  history.heldout_rays = heldout.size();
  history.records.reserve(static_cast<std::size_t>(config.iterations));

  AdamOptimizer adam(field.param_count(),
                     AdamConfig{config.learning_rate, config.adam_beta1,
                                config.adam_beta2, config.adam_epsilon});

  const int workers = worker_count();
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(workers));
  for (auto& g : grads) g.assign(field.param_count(), 0.0);
  std::vector<double> loss_parts(static_cast<std::size_t>(workers));
  std::vector<double> abs_err_parts(static_cast<std::size_t>(workers));

  std::vector<RayRef> minibatch;
  std::size_t cursor = rays.size();  // forces an initial shuffle
  const auto t_start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < config.iterations; ++iter) {
    minibatch.clear();
    std::size_t sample_count = 0;
    while (sample_count < static_cast<std::size_t>(config.batch_size)) {
      if (cursor >= rays.size()) {
        std::shuffle(rays.begin(), rays.end(), rng);
        cursor = 0;
      }
      const RayRef ref = rays[cursor++];
      const auto& b = batches[ref.batch];
      minibatch.push_back(ref);
      sample_count += b.ray_end(ref.ray) - b.ray_begin(ref.ray);
    }

    for (int w = 0; w < workers; ++w) {
      std::fill(grads[static_cast<std::size_t>(w)].begin(),
                grads[static_cast<std::size_t>(w)].end(), 0.0);
      loss_parts[static_cast<std::size_t>(w)] = 0.0;
      abs_err_parts[static_cast<std::size_t>(w)] = 0.0;
    }

    const double q = config.quantile;
    const double margin = config.mask_margin;
    parallel_chunks(minibatch.size(), [&](std::size_t begin, std::size_t end, int w) {
      HeightField::Workspace ws;
      std::vector<double> masked_w;
      auto& grad = grads[static_cast<std::size_t>(w)];
      double loss = 0.0;
      double abs_err = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const RayRef ref = minibatch[k];
        const auto& b = batches[ref.batch];
        const std::size_t rb = b.ray_begin(ref.ray);
        const std::size_t re = b.ray_end(ref.ray);

        const bool masking = margin >= 0.0;
        if (masking) {
          // Re-derive the transmittance recursion with masked densities.
          masked_w.resize(re - rb);
          double t = 1.0;
          for (std::size_t i = rb; i < re; ++i) {
            const Vec3& p = b.points[i];
            double rho = b.densities[i];
            if (rho != 0.0 && p.z() > field.query(p.x(), p.y(), ws) + margin) rho = 0.0;
            const double alpha = -std::expm1(-rho * b.deltas[i]);
            masked_w[i - rb] = t * alpha;
            t *= 1.0 - alpha;
          }
        }

        for (std::size_t i = rb; i < re; ++i) {
          const Vec3& p = b.points[i];
          const double wi = masking ? masked_w[i - rb] : b.weights[i];
          const double z_hat = field.query(p.x(), p.y(), ws);
          const double e = p.z() - z_hat;
          loss += wi * (e >= 0.0 ? q * e : -(1.0 - q) * e);
          abs_err += std::abs(e);
          const double upstream = wi * (e >= 0.0 ? -q : (1.0 - q));
          if (upstream != 0.0) field.backward(ws, upstream, grad);
        }
      }
      loss_parts[static_cast<std::size_t>(w)] = loss;
      abs_err_parts[static_cast<std::size_t>(w)] = abs_err;
    });

    double total_loss = 0.0;
    double total_abs_err = 0.0;
    for (int w = 0; w < workers; ++w) {
      total_loss += loss_parts[static_cast<std::size_t>(w)];
      total_abs_err += abs_err_parts[static_cast<std::size_t>(w)];
      if (w > 0) {
        auto& dst = grads[0];
        const auto& src = grads[static_cast<std::size_t>(w)];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    if (!std::isfinite(total_loss)) {
      throw NumericError("training diverged: non-finite loss at iteration " +
                         std::to_string(iter));
    }

    adam.step(field.params(), grads[0]);

    const auto now = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = iter;
    rec.loss = total_loss / static_cast<double>(sample_count);
    rec.mean_abs_err = total_abs_err / static_cast<double>(sample_count);
    rec.wall_time_sec = std::chrono::duration<double>(now - t_start).count();
    history.records.push_back(rec);
  }

  if (!heldout.empty()) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const RayRef ref : heldout) {
      const auto& b = batches[ref.batch];
      for (std::size_t i = b.ray_begin(ref.ray); i < b.ray_end(ref.ray); ++i) {
        if (b.weights[i] <= 0.1) continue;
        const Vec3& p = b.points[i];
        sum += std::abs(p.z() - field.query(p.x(), p.y()));
        ++count;
      }
    }
    history.final_heldout_mean_abs_err = count > 0 ? sum / static_cast<double>(count) : 0.0;
  }
  return history;
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "iter,loss,mean_abs_err\n";
  char buf[128];
  for (const IterationRecord& rec : history.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", rec.iteration, rec.loss,
                  rec.mean_abs_err);
    out += buf;
  }
  return out;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write history CSV: " + path);
  out << history_to_csv(history);
}

}  // namespace nemo
