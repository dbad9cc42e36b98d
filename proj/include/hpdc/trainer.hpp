#pragma once

// Joint training of the lossy coder and the lossless branch with
// L = R_y + R_z + R_res + alpha * D(x, x_tilde) + beta * D(r, r_est),
// rates in bits per pixel and distortions as MSE in normalized units.
// Also: synthetic depth data and the bpp evaluation report.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "hpdc/bitsplit.hpp"
#include "hpdc/codec.hpp"
#include "hpdc/depth_io.hpp"
#include "hpdc/model.hpp"
#include "hpdc/nn/adam.hpp"
#include "hpdc/nn/likelihood_ops.hpp"
#include "hpdc/residual.hpp"

namespace hpdc {

struct TrainConfig {
  double alpha = 25;
  double beta = 25;
  std::uint32_t d = 512;
  double lr = 1.5e-4;
  double decay = 0.75;
  int decay_every = 20;
  int epochs = 50;
  /// Stop after this many optimizer steps when > 0.
  int max_steps = 0;
  int batch = 4;
  int crop_h = 64;
  int crop_w = 64;
  int lossy_channels = 32;
  int lossless_channels = 16;
  int K = 3;
  Family mixture = Family::laplace;
  Fusion fusion = Fusion::gated;
  std::uint64_t seed = 1;
  bool detach_second_pass = false;

  /// 196/64 channels, 256x64 crops, batch 16.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.lossy_channels = 196;
    c.lossless_channels = 64;
    c.crop_h = 64;
    c.crop_w = 256;
    c.batch = 16;
    return c;
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.lossy_channels = lossy_channels;
    m.lossless_channels = lossless_channels;
    m.K = K;
    m.mixture = mixture;
    m.fusion = fusion;
    m.d = d;
    return m;
  }

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0)) throw ArgumentError("alpha and beta must be >= 0");
    if (!(lr > 0) || !(decay > 0) || decay_every < 1) throw ArgumentError("invalid learning-rate schedule");
    if (epochs < 1 || batch < 1) throw ArgumentError("epochs and batch must be >= 1");
    if (crop_h < 1 || crop_w < 1 || crop_h % kHyperStride != 0 || crop_w % kHyperStride != 0)
      throw ArgumentError("crop dimensions must be positive multiples of 64");
    model_config().validate();
  }
};

/// lr0 * decay^floor(epoch / decay_every), epochs counted from 0.
inline double learning_rate(const TrainConfig& c, int epoch) {
  return c.lr * std::pow(c.decay, std::floor(static_cast<double>(epoch) / c.decay_every));
}

/// Network-ready crops: x (B, 2, h, w) normalized planes and the validity
/// mask (B, 1, h, w).
template <class T>
struct Batch {
  nn::Tensor<T> x;
  nn::Tensor<T> mask;
  PlaneScales scales;
};

/// Top-left-anchored crop; pixels past the map edge replicate the border.
inline DepthMap crop_map(const DepthMap& m, std::uint32_t x0, std::uint32_t y0, std::uint32_t w, std::uint32_t h) {
  DepthMap out = DepthMap::zeros(w, h, m.bit_depth, m.precision_um);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x)
      out.at(y, x) = m.at(std::min(y0 + y, m.height - 1), std::min(x0 + x, m.width - 1));
  out.recompute_mask();
  return out;
}

template <class T>
Batch<T> make_batch(const std::vector<DepthMap>& crops, std::uint32_t d) {
  if (crops.empty()) throw ArgumentError("empty batch");
  const auto& f = crops.front();
  const int h = static_cast<int>(f.height);
  const int w = static_cast<int>(f.width);
  const int n = static_cast<int>(crops.size());
  Batch<T> b;
  b.scales = PlaneScales::for_split(f.bit_depth, d);
  b.x = nn::Tensor<T>({n, 2, h, w});
  b.mask = nn::Tensor<T>({n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    const auto& m = crops[i];
    if (m.width != f.width || m.height != f.height || m.bit_depth != f.bit_depth)
      throw ShapeError("batch crops must share size and bit depth");
    const auto x = pack_normalized<T>(split(m, d));
    std::copy_n(x.data(), 2 * x.shape().plane(), b.x.plane(i, 0));
    for (std::size_t p = 0; p < m.size(); ++p) b.mask.plane(i, 0)[p] = m.mask[p] ? T(1) : T(0);
  }
  return b;
}

template <class T>
struct LossTerms {
  nn::Var<T> total;
  double rate_y = 0;  // bits per pixel
  double rate_z = 0;
  double rate_res = 0;
  double dist_x = 0;  // MSE, normalized units
  double dist_r = 0;
  double value = 0;
};

/// Training-mode objective on one batch. All quantization noise comes from
/// `noise`, so a fixed seed pins the stochastic terms.
template <class T>
LossTerms<T> compute_loss(const Model<T>& model, const Batch<T>& batch, double alpha, double beta, NoiseSource& noise,
                          bool detach_second_pass = false) {
  const auto& lossy = model.lossy();
  const auto& cfg = model.config();
  const nn::Shape s = batch.x.shape();
  const double pixels = static_cast<double>(s.n) * s.h * s.w;

  const nn::Var<T> x(batch.x);
  const auto f = lossy.forward(x, QuantMode::train, &noise);
  const auto r_est = pseudo_residual(lossy, f.x_tilde, QuantMode::train, &noise, detach_second_pass);
  const auto lmm = model.lossless().forward(f.x_tilde, r_est, batch.scales);

  const auto diff = nn::sub(x, f.x_tilde);
  const std::vector<T> plane_scale{static_cast<T>(batch.scales.msb), static_cast<T>(batch.scales.lsb)};
  const auto r_noisy = nn::add(nn::scale_channels(diff, plane_scale), nn::Var<T>(noise.draw<T>(s)));
  const auto rate_res = nn::discretized_bits(r_noisy, lmm.logits, lmm.loc, lmm.scale, cfg.K, cfg.mixture);

  const auto dist_x = nn::masked_mse(x, f.x_tilde, batch.mask);
  const auto dist_r = nn::masked_mse(diff, r_est, nn::Tensor<T>({s.n, 1, s.h, s.w}, T(1)));

  const auto rates = nn::add(nn::add(f.rate_y_bits, f.rate_z_bits), rate_res);
  const auto total = nn::add(nn::scale(rates, static_cast<T>(1.0 / pixels)),
                             nn::add(nn::scale(dist_x, static_cast<T>(alpha)), nn::scale(dist_r, static_cast<T>(beta))));
  LossTerms<T> out;
  out.total = total;
  out.rate_y = f.rate_y_bits.item() / pixels;
  out.rate_z = f.rate_z_bits.item() / pixels;
  out.rate_res = rate_res.item() / pixels;
  out.dist_x = dist_x.item();
  out.dist_r = dist_r.item();
  out.value = total.item();
  return out;
}

struct StepLog {
  int step = 0;
  int epoch = 0;
  double lr = 0;
  double rate_y = 0, rate_z = 0, rate_res = 0, dist_x = 0, dist_r = 0, loss = 0;
};

inline void write_metrics_header(std::ostream& os) { os << "epoch,lr,R_y,R_z,R_res,D_x,D_r,L\n"; }

inline void write_metrics_row(std::ostream& os, const StepLog& e) {
  os << e.epoch << ',' << e.lr << ',' << e.rate_y << ',' << e.rate_z << ',' << e.rate_res << ',' << e.dist_x << ','
     << e.dist_r << ',' << e.loss << '\n';
}

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<StepLog> epochs;  // per-epoch means
  TrainState state;
};

/// Adam training of `model` on random crops of `data`. One epoch is
/// ceil(|data| / batch) steps. `metrics`, when given, receives one CSV row
/// per epoch. A resumed run continues at the stored epoch, so `cfg.epochs` is
/// the total across runs.
inline TrainResult train(Model<float>& model, const std::vector<DepthMap>& data, const TrainConfig& cfg,
                         std::ostream* metrics = nullptr, const TrainState* resume = nullptr) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("training set is empty");
  for (const auto& m : data)
    if (m.bit_depth != data.front().bit_depth) throw ArgumentError("training maps must share one bit depth");
  std::mt19937_64 rng(cfg.seed);
  NoiseSource noise(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  nn::Adam<float> adam;
  TrainResult res;
  if (resume) {
    res.state = *resume;
    for (const auto& [name, mom] : resume->moments) adam.moments()[name] = mom;
  }
  const int steps_per_epoch = static_cast<int>((data.size() + cfg.batch - 1) / cfg.batch);
  if (metrics) write_metrics_header(*metrics);
  double initial = 0;
  int diverged_epochs = 0;
  int step = 0;
  std::vector<std::size_t> order(data.size());
  for (int epoch = res.state.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    StepLog mean;
    mean.epoch = epoch;
    mean.lr = lr;
    int in_epoch = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      std::vector<DepthMap> crops;
      for (int b = 0; b < cfg.batch; ++b) {
        const DepthMap& m = data[order[(static_cast<std::size_t>(s) * cfg.batch + b) % order.size()]];
        const std::uint32_t ch = static_cast<std::uint32_t>(cfg.crop_h);
        const std::uint32_t cw = static_cast<std::uint32_t>(cfg.crop_w);
        const std::uint32_t y0 = m.height > ch ? static_cast<std::uint32_t>(rng() % (m.height - ch + 1)) : 0;
        const std::uint32_t x0 = m.width > cw ? static_cast<std::uint32_t>(rng() % (m.width - cw + 1)) : 0;
        crops.push_back(crop_map(m, x0, y0, cw, ch));
      }
      const auto batch = make_batch<float>(crops, cfg.d);
      model.params().zero_grad();
      const auto terms = compute_loss(model, batch, cfg.alpha, cfg.beta, noise, cfg.detach_second_pass);
      if (!std::isfinite(terms.value))
        throw TrainingError("non-finite loss at step " + std::to_string(step) + ": R_y=" +
                            std::to_string(terms.rate_y) + " R_z=" + std::to_string(terms.rate_z) +
                            " R_res=" + std::to_string(terms.rate_res) + " D_x=" + std::to_string(terms.dist_x) +
                            " D_r=" + std::to_string(terms.dist_r));
      nn::backward(terms.total);
      adam.step(model.params(), lr);
      if (step == 0) initial = terms.value;
      StepLog log{step, epoch, lr, terms.rate_y, terms.rate_z, terms.rate_res, terms.dist_x, terms.dist_r,
                  terms.value};
      res.steps.push_back(log);
      mean.rate_y += log.rate_y;
      mean.rate_z += log.rate_z;
      mean.rate_res += log.rate_res;
      mean.dist_x += log.dist_x;
      mean.dist_r += log.dist_r;
      mean.loss += log.loss;
      ++in_epoch;
      ++step;
      ++res.state.step;
    }
    if (in_epoch == 0) break;
    for (double* v : {&mean.rate_y, &mean.rate_z, &mean.rate_res, &mean.dist_x, &mean.dist_r, &mean.loss})
      *v /= in_epoch;
    mean.step = step;
    res.epochs.push_back(mean);
    if (metrics) write_metrics_row(*metrics, mean);
    diverged_epochs = mean.loss > 10 * initial ? diverged_epochs + 1 : 0;
    if (diverged_epochs >= 3)
      throw TrainingError("training diverged: epoch loss " + std::to_string(mean.loss) + " exceeded 10x the initial " +
                          std::to_string(initial) + " for 3 epochs");
    res.state.lr = lr;
    res.state.epoch = epoch + 1;
  }
  res.state.moments.clear();
  for (const auto& [name, mom] : adam.moments()) res.state.moments[name] = mom;
  return res;
}

/// Piecewise-planar range image: a few regions with sharp boundaries,
/// smooth slopes, mild sensor noise and small invalid holes.
inline DepthMap synthetic_depth(std::uint32_t width, std::uint32_t height, int bit_depth, std::uint64_t seed,
                                std::uint32_t precision_um = 1000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double top_m = std::ldexp(1.0, bit_depth) * precision_um * 1e-6;
  const double far = std::min(0.9 * top_m, 80.0);
  const double near = std::min(0.05 * top_m, 2.0);
  struct Region {
    double cx, cy, base, gx, gy;
  };
  const int regions = 3 + static_cast<int>(rng() % 5);
  std::vector<Region> rs;
  for (int i = 0; i < regions; ++i) {
    const double base = near + (far - near) * uni(rng);
    rs.push_back({uni(rng) * width, uni(rng) * height, base, (uni(rng) - 0.5) * 0.02 * base,
                  (uni(rng) - 0.5) * 0.05 * base});
  }
  std::normal_distribution<double> noise(0.0, 0.003);
  DepthMap m = DepthMap::zeros(width, height, bit_depth, precision_um);
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rs.size(); ++i) {
        const double dx = x - rs[i].cx;
        const double dy = (y - rs[i].cy) * 4.0;
        const double dd = dx * dx + dy * dy;
        if (dd < best_d) {
          best_d = dd;
          best = i;
        }
      }
      const auto& r = rs[best];
      const double depth = r.base + r.gx * (x - r.cx) / std::max(1u, width) + r.gy * (y - r.cy) / std::max(1u, height) +
                           noise(rng);
      m.at(y, x) = quantize(std::clamp(depth, near, far), precision_um, bit_depth);
    }
  const int holes = static_cast<int>(rng() % 6);
  for (int i = 0; i < holes; ++i) {
    const std::uint32_t hw = 1 + static_cast<std::uint32_t>(rng() % 6);
    const std::uint32_t hh = 1 + static_cast<std::uint32_t>(rng() % 3);
    const std::uint32_t x0 = static_cast<std::uint32_t>(rng() % width);
    const std::uint32_t y0 = static_cast<std::uint32_t>(rng() % height);
    for (std::uint32_t y = y0; y < std::min(height, y0 + hh); ++y)
      for (std::uint32_t x = x0; x < std::min(width, x0 + hw); ++x) m.at(y, x) = 0;
  }
  m.recompute_mask();
  return m;
}

/// Thread budget from HPDC_THREADS (default: hardware concurrency).
inline unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HPDC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

struct EvalRow {
  std::string name;
  CodecReport report;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Pixel-weighted bpp over all rows: {R_y, R_z, R_lossless, overall}.
  std::array<double, 4> mean_bpp() const {
    double px = 0, y = 0, z = 0, r = 0, t = 0;
    for (const auto& row : rows) {
      px += row.report.pixels;
      y += 8.0 * row.report.y_bytes;
      z += 8.0 * row.report.z_bytes;
      r += 8.0 * row.report.r_bytes;
      t += 8.0 * row.report.total_bytes;
    }
    if (px == 0) return {0, 0, 0, 0};
    return {y / px, z / px, r / px, t / px};
  }
};

/// Compresses and decompresses every map. A lossy round trip raises
/// VerificationError; any other failure raises DataError.
inline EvalReport evaluate(const Model<float>& model, const std::vector<std::pair<std::string, DepthMap>>& maps,
                           std::uint32_t d, unsigned threads = thread_budget()) {
  const Codec codec(model);
  EvalReport rep;
  rep.rows.resize(maps.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::string error;
  bool mismatch = false;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= maps.size()) return;
      try {
        CodecReport r;
        const auto bytes = codec.compress(maps[i].second, d, &r);
        if (codec.decompress(bytes) != maps[i].second) {
          std::lock_guard<std::mutex> lock(err_mu);
          mismatch = true;
          if (error.empty()) error = maps[i].first + ": round trip mismatch";
          continue;
        }
        rep.rows[i] = {maps[i].first, r};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (error.empty()) error = maps[i].first + ": " + e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(maps.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (mismatch) throw VerificationError("evaluation failed: " + error);
  if (!error.empty()) throw DataError("evaluation failed: " + error);
  return rep;
}

inline void write_eval_report(std::ostream& os, const EvalReport& rep) {
  os << "image,pixels,R_y,R_z,R_lossless,overall,est_R_lossless,bytes\n";
  for (const auto& row : rep.rows) {
    const auto& r = row.report;
    os << row.name << ',' << r.pixels << ',' << r.bpp_y() << ',' << r.bpp_z() << ',' << r.bpp_r() << ','
       << r.bpp_total() << ',' << r.est_r_bits / std::max<std::size_t>(1, r.pixels) << ',' << r.total_bytes << '\n';
  }
  const auto m = rep.mean_bpp();
  os << "mean,," << m[0] << ',' << m[1] << ',' << m[2] << ',' << m[3] << ",,\n";
}

}  // namespace hpdc
