// hpdc: lossless depth-map codec command line.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 verification failure.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpdc/hpdc.hpp"

namespace {

using namespace hpdc;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

DepthMap read_depth(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode_depth(bytes, detect_depth_format(bytes));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const RangeError& e) {
    throw RangeError(path + ": " + e.what());
  }
}

DepthFormat output_format(const std::string& path, const std::string& flag, int bit_depth) {
  if (!flag.empty()) return parse_depth_format(flag);
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0) return DepthFormat::pgm16;
  return bit_depth <= 16 ? DepthFormat::raw16 : DepthFormat::raw32;
}

void print_report(std::ostream& os, const CodecReport& r) {
  os << std::fixed << std::setprecision(4) << "pixels " << r.pixels << "  bytes " << r.total_bytes << "  R_y "
     << r.bpp_y() << "  R_z " << r.bpp_z() << "  R_lossless " << r.bpp_r() << "  overall " << r.bpp_total()
     << " bpp\n";
}

struct ModelFlags {
  int lossy_channels = 0;
  int lossless_channels = 0;
  int K = 0;
  std::string mixture;
  std::string fusion;
  std::uint32_t d = 0;
  std::uint64_t seed = 1;
  bool full_scale = false;

  void add(CLI::App* app) {
    app->add_option("--channels-lossy", lossy_channels, "lossy coder channels N");
    app->add_option("--channels-lossless", lossless_channels, "lossless branch channels M");
    app->add_option("--K", K, "mixture components per pixel");
    app->add_option("--mixture", mixture, "residual mixture family")->check(CLI::IsMember({"laplace", "logistic"}));
    app->add_option("--fusion", fusion, "feature fusion")->check(CLI::IsMember({"gated", "concat"}));
    app->add_option("--d", d, "split divisor");
    app->add_option("--seed", seed, "random seed");
    app->add_flag("--full-scale", full_scale, "196/64 channels, 256x64 crops, batch 16");
  }

  void apply(TrainConfig& c) const {
    if (full_scale) {
      const auto p = TrainConfig::full_scale();
      c.lossy_channels = p.lossy_channels;
      c.lossless_channels = p.lossless_channels;
      c.crop_h = p.crop_h;
      c.crop_w = p.crop_w;
      c.batch = p.batch;
    }
    if (lossy_channels) c.lossy_channels = lossy_channels;
    if (lossless_channels) c.lossless_channels = lossless_channels;
    if (K) c.K = K;
    if (!mixture.empty()) c.mixture = parse_family(mixture);
    if (!fusion.empty()) c.fusion = parse_fusion(fusion);
    if (d) c.d = d;
    c.seed = seed;
  }
};

int run_init(const ModelFlags& flags, const std::string& out) {
  TrainConfig cfg;
  flags.apply(cfg);
  const Model<float> model(cfg.model_config(), cfg.seed);
  save_checkpoint(out, model);
  std::cout << "wrote " << out << " (" << model.params().numel() << " parameters, hash "
            << entropy::hash_hex(model_hash(model)) << ")\n";
  return kExitOk;
}

int run_compress(const std::string& in, const std::string& out, const std::string& ckpt, std::uint32_t d,
                 bool no_verify) {
  const auto loaded = load_checkpoint(ckpt);
  const Codec codec(*loaded.model);
  const DepthMap map = read_depth(in);
  const std::uint32_t divisor = d ? d : loaded.model->config().d;
  CodecReport rep;
  const auto bytes = codec.compress(map, divisor, &rep);
  if (!no_verify) {
    DepthMap back;
    try {
      back = codec.decompress(bytes);
    } catch (const Error& e) {
      std::cerr << "verification failed: " << e.what() << '\n';
      return kExitVerify;
    }
    if (back != map) {
      std::cerr << "verification failed: decoded map differs from input\n";
      return kExitVerify;
    }
  }
  write_file(out, bytes);
  print_report(std::cout, rep);
  return kExitOk;
}

int run_decompress(const std::string& in, const std::string& out, const std::string& ckpt, const std::string& fmt) {
  const auto loaded = load_checkpoint(ckpt);
  const Codec codec(*loaded.model);
  CodecReport rep;
  const DepthMap map = codec.decompress(read_file(in), &rep);
  save_depth(out, map, output_format(out, fmt, map.bit_depth));
  std::cout << "decoded " << map.width << "x" << map.height << " B=" << map.bit_depth << " -> " << out << '\n';
  return kExitOk;
}

struct TrainFlags {
  std::vector<std::string> data;
  int synthetic = 0;
  int synthetic_bits = 18;
  std::string out;
  std::string metrics;
  std::string resume;
  double alpha = -1, beta = -1, lr = 0;
  int epochs = 0, max_steps = 0, batch = 0, crop_h = 0, crop_w = 0;
  bool detach = false;
};

int run_train(const ModelFlags& mflags, const TrainFlags& t) {
  TrainConfig cfg;
  std::optional<LoadedCheckpoint> loaded;
  if (!t.resume.empty()) {
    // Architecture defaults come from the checkpoint; explicit flags must agree with it.
    loaded = load_checkpoint(t.resume);
    const ModelConfig& m = loaded->model->config();
    cfg.lossy_channels = m.lossy_channels;
    cfg.lossless_channels = m.lossless_channels;
    cfg.K = m.K;
    cfg.mixture = m.mixture;
    cfg.fusion = m.fusion;
    cfg.d = m.d;
  }
  mflags.apply(cfg);
  if (t.alpha >= 0) cfg.alpha = t.alpha;
  if (t.beta >= 0) cfg.beta = t.beta;
  if (t.lr > 0) cfg.lr = t.lr;
  if (t.epochs) cfg.epochs = t.epochs;
  if (t.max_steps) cfg.max_steps = t.max_steps;
  if (t.batch) cfg.batch = t.batch;
  if (t.crop_h) cfg.crop_h = t.crop_h;
  if (t.crop_w) cfg.crop_w = t.crop_w;
  cfg.detach_second_pass = t.detach;

  std::vector<DepthMap> data;
  for (const auto& p : t.data) data.push_back(read_depth(p));
  for (int i = 0; i < t.synthetic; ++i)
    data.push_back(synthetic_depth(256, 64, t.synthetic_bits, cfg.seed * 1000003ull + static_cast<std::uint64_t>(i)));
  if (data.empty()) throw ArgumentError("no training data: pass files or --synthetic N");

  std::unique_ptr<Model<float>> model;
  std::optional<TrainState> state;
  if (loaded) {
    if (!(loaded->model->config() == cfg.model_config()))
      throw ArgumentError("--resume checkpoint configuration differs from the requested one");
    model = std::move(loaded->model);
    state = std::move(loaded->state);
  } else {
    model = std::make_unique<Model<float>>(cfg.model_config(), cfg.seed);
  }

  std::ofstream metrics_file;
  std::ostream* metrics = &std::cout;
  if (!t.metrics.empty()) {
    metrics_file.open(t.metrics);
    if (!metrics_file) throw FormatError("cannot create '" + t.metrics + "'");
    metrics = &metrics_file;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(*model, data, cfg, metrics, state ? &*state : nullptr);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(t.out, *model, &res.state);
  std::cerr << "trained " << res.steps.size() << " steps in " << secs << " s; first loss " << res.steps.front().loss
            << ", last " << res.steps.back().loss << "; wrote " << t.out << '\n';
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::vector<std::string>& inputs, std::uint32_t d,
             const std::string& report) {
  const auto loaded = load_checkpoint(ckpt);
  std::vector<std::pair<std::string, DepthMap>> maps;
  for (const auto& p : inputs) maps.emplace_back(p, read_depth(p));
  const EvalReport rep = evaluate(*loaded.model, maps, d ? d : loaded.model->config().d);
  if (report.empty()) {
    write_eval_report(std::cout, rep);
  } else {
    std::ofstream os(report);
    if (!os) throw FormatError("cannot create '" + report + "'");
    write_eval_report(os, rep);
    const auto m = rep.mean_bpp();
    std::cout << std::fixed << std::setprecision(4) << "R_y " << m[0] << "  R_z " << m[1] << "  R_lossless " << m[2]
              << "  overall " << m[3] << " bpp over " << rep.rows.size() << " maps\n";
  }
  return kExitOk;
}

struct ProjectFlags {
  std::string in, out;
  std::uint32_t precision = 1000;
  std::uint32_t rows = 64, cols = 2048;
  int bits = 18;
  int median = 0;
};

int run_project(const ProjectFlags& p) {
  ProjectionConfig cfg;
  cfg.rows = p.rows;
  cfg.cols = p.cols;
  const auto points = load_pointcloud(p.in);
  DepthMap m = project_pointcloud(points, cfg, p.precision, p.bits);
  if (p.median) m = median_fill(m, p.median);
  save_depth(p.out, m, output_format(p.out, "", m.bit_depth));
  std::cout << "projected " << points.size() << " points -> " << p.out << '\n';
  return kExitOk;
}

int run_synth(const std::string& prefix, int count, std::uint32_t w, std::uint32_t h, int bits, std::uint64_t seed) {
  for (int i = 0; i < count; ++i) {
    const DepthMap m = synthetic_depth(w, h, bits, seed + static_cast<std::uint64_t>(i));
    const std::string path = prefix + std::to_string(i) + ".hpdm";
    save_depth(path, m, bits <= 16 ? DepthFormat::raw16 : DepthFormat::raw32);
    std::cout << path << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lossless codec for high-precision depth maps"};
  app.require_subcommand(1);

  ModelFlags init_flags;
  std::string init_out;
  auto* init = app.add_subcommand("init", "write a randomly initialized checkpoint");
  init_flags.add(init);
  init->add_option("-o,--output", init_out, "checkpoint path")->required();

  std::string c_in, c_out, c_ckpt;
  std::uint32_t c_d = 0;
  bool c_no_verify = false;
  auto* compress = app.add_subcommand("compress", "depth map (.hpdm/.pgm) -> .hpdc");
  compress->add_option("input", c_in)->required();
  compress->add_option("output", c_out)->required();
  compress->add_option("-c,--checkpoint", c_ckpt)->required();
  compress->add_option("--d", c_d, "split divisor (default: the checkpoint's)");
  compress->add_flag("--no-verify", c_no_verify, "skip the self-decode check");

  std::string x_in, x_out, x_ckpt, x_fmt;
  auto* decompress = app.add_subcommand("decompress", ".hpdc -> depth map");
  decompress->add_option("input", x_in)->required();
  decompress->add_option("output", x_out)->required();
  decompress->add_option("-c,--checkpoint", x_ckpt)->required();
  decompress->add_option("--format", x_fmt, "raw16, raw32 or pgm16 (default: from extension and B)")
      ->check(CLI::IsMember({"raw16", "raw32", "pgm16", "pgm"}));

  ModelFlags t_model;
  TrainFlags t;
  auto* trainer = app.add_subcommand("train", "train a checkpoint");
  t_model.add(trainer);
  trainer->add_option("data", t.data, "training maps");
  trainer->add_option("--synthetic", t.synthetic, "add N synthetic 256x64 maps");
  trainer->add_option("--synthetic-bits", t.synthetic_bits, "bit depth of synthetic maps");
  trainer->add_option("-o,--output", t.out, "checkpoint path")->required();
  trainer->add_option("--metrics", t.metrics, "per-epoch CSV (default: stdout)");
  trainer->add_option("--resume", t.resume, "continue from a checkpoint with optimizer state");
  trainer->add_option("--alpha", t.alpha, "weight of D(x, x_tilde)");
  trainer->add_option("--beta", t.beta, "weight of D(r, r_est)");
  trainer->add_option("--lr", t.lr, "initial learning rate");
  trainer->add_option("--epochs", t.epochs);
  trainer->add_option("--max-steps", t.max_steps, "stop after this many optimizer steps");
  trainer->add_option("--batch", t.batch);
  trainer->add_option("--crop-h", t.crop_h);
  trainer->add_option("--crop-w", t.crop_w);
  trainer->add_flag("--detach-second-pass", t.detach, "no gradient through the pseudo-residual pass");

  std::string e_ckpt, e_report;
  std::vector<std::string> e_inputs;
  std::uint32_t e_d = 0;
  auto* eval = app.add_subcommand("eval", "coded bpp report (R_y, R_z, R_lossless, overall)");
  eval->add_option("inputs", e_inputs)->required();
  eval->add_option("-c,--checkpoint", e_ckpt)->required();
  eval->add_option("--d", e_d, "split divisor (default: the checkpoint's)");
  eval->add_option("--report", e_report, "CSV path (default: stdout)");

  ProjectFlags pf;
  auto* project = app.add_subcommand("project", "LiDAR .bin scan -> range image");
  project->add_option("input", pf.in)->required();
  project->add_option("output", pf.out)->required();
  project->add_option("--precision", pf.precision, "micrometers per unit");
  project->add_option("--rows", pf.rows);
  project->add_option("--cols", pf.cols);
  project->add_option("--bits", pf.bits);
  project->add_option("--median", pf.median, "median-fill window (odd, >= 3)");

  std::string s_prefix;
  int s_count = 1, s_bits = 18;
  std::uint32_t s_w = 256, s_h = 64;
  std::uint64_t s_seed = 1;
  auto* synth = app.add_subcommand("synth", "write synthetic piecewise-planar maps");
  synth->add_option("prefix", s_prefix)->required();
  synth->add_option("--count", s_count);
  synth->add_option("--width", s_w);
  synth->add_option("--height", s_h);
  synth->add_option("--bits", s_bits);
  synth->add_option("--seed", s_seed);

  SelftestOptions st;
  auto* selftest = app.add_subcommand("selftest", "gradient, split, coder and pmf checks");
  selftest->add_flag("--inject-cdf-fault", st.inject_cdf_fault, "decode with an off-by-one table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*init) return run_init(init_flags, init_out);
    if (*compress) return run_compress(c_in, c_out, c_ckpt, c_d, c_no_verify);
    if (*decompress) return run_decompress(x_in, x_out, x_ckpt, x_fmt);
    if (*trainer) return run_train(t_model, t);
    if (*eval) return run_eval(e_ckpt, e_inputs, e_d, e_report);
    if (*project) return run_project(pf);
    if (*synth) return run_synth(s_prefix, s_count, s_w, s_h, s_bits, s_seed);
    if (*selftest) return run_selftest(st, std::cout) ? kExitOk : kExitVerify;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kExitVerify;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
