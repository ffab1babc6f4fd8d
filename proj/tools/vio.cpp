// Command-line front end: synthetic data generation, dataset ingest,
// degradation suites, training, posterior fitting, prediction, metric
// evaluation, and report export.
//
// Exit codes: 0 on success, 2 for configuration/format/shape errors
// (including bad flags), 1 for I/O and internal failures.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <vio/vio.hpp>

namespace fs = std::filesystem;

namespace {

void write_resolved_config(const std::string& dir, const nlohmann::json& j) {
  std::string path = (fs::path(dir) / "resolved_config.json").string();
  std::ofstream out(path);
  if (!out) throw vio::IoError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw vio::IoError("write failed: " + path);
}

void copy_file_over(const fs::path& src, const fs::path& dst) {
  if (!fs::exists(src)) throw vio::IoError("missing file: " + src.string());
  fs::create_directories(dst.parent_path());
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
}

void copy_images_dir(const fs::path& src_dir, const fs::path& dst_dir) {
  if (!fs::is_directory(src_dir)) throw vio::IoError("missing directory: " + src_dir.string());
  fs::create_directories(dst_dir);
  for (const auto& entry : fs::directory_iterator(src_dir))
    if (entry.is_regular_file())
      fs::copy_file(entry.path(), dst_dir / entry.path().filename(),
                    fs::copy_options::overwrite_existing);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

vio::ModelConfig make_model_config(const vio::DatasetConfig& data, const std::string& strategy,
                                   const std::string& scale) {
  if (scale == "toy") return vio::toy_model_config(data, strategy);
  if (scale == "full") {
    vio::ModelConfig cfg = vio::full_model_config(strategy);
    cfg.vision =
        vio::full_vision_config(data.image_channels, data.image_height, data.image_width);
    cfg.fusion.vision_width = cfg.vision.feature_width();
    int fused = cfg.fusion.fused_width();
    if (fused % 2 != 0)
      throw vio::ConfigError("full model: fused width must be even to split into two tokens");
    cfg.fusion.attention.model_width = fused / 2;
    return cfg;
  }
  throw vio::ConfigError("unknown model scale '" + scale + "' (expected toy or full)");
}

// Loads a model whose weights were written by the train command.
vio::OdometryModel load_model(const vio::DatasetConfig& data, const std::string& strategy,
                              const std::string& scale, const std::string& weights_path) {
  vio::OdometryModel model(make_model_config(data, strategy, scale), 0);
  vio::ParamMap params = model.params();
  vio::load_checkpoint(weights_path, params);
  return model;
}

void write_relative_csv(const std::string& path, const vio::SequenceDataset& ds,
                        const vio::TrajectoryEstimate& est) {
  if (est.relative.size() != ds.windows.size())
    throw vio::ContractError("relative csv: window count mismatch");
  std::ofstream out(path);
  if (!out) throw vio::IoError("cannot write " + path);
  out << "window,frame_a,frame_b,tx,ty,tz,yaw,pitch,roll";
  if (est.has_variance()) out << ",var_tx,var_ty,var_tz,var_yaw,var_pitch,var_roll";
  out << '\n';
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (std::size_t i = 0; i < est.relative.size(); ++i) {
    out << i << ',' << ds.windows[i].frame_a << ',' << ds.windows[i].frame_b;
    std::snprintf(buf, sizeof(buf), "%.17g", est.relative[i].translation[0]);
    out << ',' << buf;
    emit(est.relative[i].translation[1]);
    emit(est.relative[i].translation[2]);
    for (int k = 0; k < 3; ++k) emit(est.relative[i].angles[static_cast<std::size_t>(k)]);
    if (est.has_variance())
      for (int k = 0; k < 6; ++k) emit(est.variance[i][static_cast<std::size_t>(k)]);
    out << '\n';
  }
  if (!out) throw vio::IoError("write failed: " + path);
}

// Reads back what write_relative_csv produced (poses plus optional variance).
void read_relative_csv(const std::string& path, vio::TrajectoryEstimate& est) {
  std::ifstream in(path);
  if (!in) throw vio::IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw vio::FormatError("relative csv is empty: " + path);
  bool has_var = line.find("var_tx") != std::string::npos;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> fields;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      fields.push_back(std::strtod(line.substr(pos, next - pos).c_str(), nullptr));
      pos = next + 1;
    }
    std::size_t expect = has_var ? 15 : 9;
    if (fields.size() != expect)
      throw vio::FormatError("relative csv: expected " + std::to_string(expect) +
                             " fields, got " + std::to_string(fields.size()));
    vio::Pose6D p;
    for (int k = 0; k < 3; ++k) {
      p.translation[static_cast<std::size_t>(k)] = fields[static_cast<std::size_t>(3 + k)];
      p.angles[static_cast<std::size_t>(k)] = fields[static_cast<std::size_t>(6 + k)];
    }
    est.relative.push_back(p);
    if (has_var) {
      std::array<double, 6> v{};
      for (int k = 0; k < 6; ++k) v[static_cast<std::size_t>(k)] = fields[static_cast<std::size_t>(9 + k)];
      est.variance.push_back(v);
    }
  }
}

// Accepts either a pose file or a dataset/prediction directory.
std::vector<vio::RigidTransform> resolve_poses(const std::string& path) {
  if (fs::is_directory(path)) {
    fs::path traj = fs::path(path) / "trajectory.txt";
    if (fs::exists(traj)) return vio::read_poses(traj.string());
    fs::path gt = fs::path(path) / "poses.txt";
    if (fs::exists(gt)) return vio::read_poses(gt.string());
    throw vio::IoError("no trajectory.txt or poses.txt in " + path);
  }
  return vio::read_poses(path);
}

// ---------------------------------------------------------------------------
// Subcommand options
// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  vio::SynthConfig cfg;
  std::uint64_t seed = 0;
};

struct IngestOpts {
  std::string images, imu, poses, out;
  vio::DatasetConfig cfg = [] {
    vio::DatasetConfig c;
    c.image_channels = 0;  // 0 = adopt the first frame's dimensions
    c.image_height = 0;
    c.image_width = 0;
    return c;
  }();
};

struct DegradeOpts {
  std::string in, out, suite = "nominal";
  std::uint64_t seed = 0;
  vio::SuiteDefaults defs;
};

struct TrainOpts {
  std::string data, out, strategy = "mha", scale = "toy";
  vio::TrainConfig cfg;
};

struct LaplaceOpts {
  std::string data, val, model, out, strategy = "mha", scale = "toy";
  std::vector<double> multipliers, taus;
  std::vector<std::string> stochastic;
  int samples = 10;
  double beta = 1000.0;
  std::uint64_t seed = 0;
};

struct PredictOpts {
  std::string data, model, out, strategy = "mha", scale = "toy", posterior;
  bool bayesian = false;
  int samples = 30;
  std::uint64_t seed = 0;
};

struct EvalOpts {
  std::string pred, gt, out, format = "json";
};

struct ReportOpts {
  std::string pred, data, out;
  int bins = 5;
};

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

void run_synth(const SynthOpts& o) {
  vio::SequenceDataset ds = vio::synthesize(o.cfg, o.seed);
  print_warnings(ds.warnings);
  nlohmann::json prov{{"command", "synth"},
                      {"shape", o.cfg.path_shape},
                      {"frames", o.cfg.num_frames},
                      {"speed", o.cfg.speed},
                      {"turn_radius", o.cfg.turn_radius},
                      {"figure_scale", o.cfg.figure_scale},
                      {"imu_noise_std", o.cfg.imu_noise_std},
                      {"image_noise", o.cfg.image_noise},
                      {"channels", o.cfg.image_channels},
                      {"height", o.cfg.image_height},
                      {"width", o.cfg.image_width},
                      {"imu_per_frame", o.cfg.imu_per_frame},
                      {"frame_rate_hz", o.cfg.frame_rate_hz},
                      {"seed", o.seed}};
  vio::save_dataset(o.out, ds, prov);
  write_resolved_config(o.out, prov);
  std::cout << "wrote " << ds.frames.size() << " frames, " << ds.windows.size()
            << " windows, path length " << vio::path_length(ds.absolute) << " m to " << o.out
            << '\n';
}

void run_ingest(const IngestOpts& o) {
  vio::SequenceDataset ds = vio::load_sequence(o.images, o.imu, o.poses, o.cfg);
  print_warnings(ds.warnings);
  nlohmann::json prov{{"command", "ingest"},
                      {"images", o.images},
                      {"imu", o.imu},
                      {"poses", o.poses},
                      {"channels", ds.config.image_channels},
                      {"height", ds.config.image_height},
                      {"width", ds.config.image_width},
                      {"imu_per_frame", ds.config.imu_per_frame},
                      {"frame_rate_hz", ds.config.frame_rate_hz}};
  vio::save_dataset(o.out, ds, prov);
  write_resolved_config(o.out, prov);
  std::cout << "ingested " << ds.frames.size() << " frames, " << ds.windows.size()
            << " windows, path length " << vio::path_length(ds.absolute) << " m to " << o.out
            << '\n';
}

void run_degrade(const DegradeOpts& o) {
  vio::SequenceDataset ds = vio::load_dataset(o.in);
  vio::SequenceDataset degraded = vio::build_degraded_suite(ds, o.suite, o.seed, o.defs);
  fs::create_directories(o.out);
  nlohmann::json prov{{"command", "degrade"}, {"suite", o.suite}, {"seed", o.seed},
                      {"source", o.in}};

  fs::path in(o.in), out(o.out);
  if (o.suite == "nominal") {
    // Unchanged data is copied byte for byte, manifest included.
    copy_images_dir(in / "images", out / "images");
    copy_file_over(in / "imu.csv", out / "imu.csv");
    copy_file_over(in / "poses.txt", out / "poses.txt");
    copy_file_over(in / "manifest.json", out / "manifest.json");
  } else if (o.suite == "vision") {
    vio::save_dataset(o.out, degraded, prov);
    // Inertial data and ground truth are untouched: keep the source bytes.
    copy_file_over(in / "imu.csv", out / "imu.csv");
    copy_file_over(in / "poses.txt", out / "poses.txt");
  } else if (o.suite == "inertial") {
    vio::save_dataset(o.out, degraded, prov);
    copy_images_dir(in / "images", out / "images");
    copy_file_over(in / "poses.txt", out / "poses.txt");
  } else {
    vio::save_dataset(o.out, degraded, prov);
  }
  write_resolved_config(o.out, prov);
  std::cout << "wrote suite '" << o.suite << "' to " << o.out << '\n';
}

void run_train(const TrainOpts& o) {
  vio::SequenceDataset ds = vio::load_dataset(o.data);
  vio::TrainConfig cfg = o.cfg;
  cfg.strategy = o.strategy;
  vio::OdometryModel model(make_model_config(ds.config, o.strategy, o.scale), cfg.seed);
  fs::create_directories(o.out);
  if (cfg.checkpoint_every > 0 && cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = o.out;

  vio::TrainResult result = vio::train(model, ds, cfg);
  vio::save_checkpoint((fs::path(o.out) / "model.json").string(), model.params());
  vio::write_train_log((fs::path(o.out) / "train_log.jsonl").string(), result.log);
  write_resolved_config(o.out, nlohmann::json{{"command", "train"},
                                              {"data", o.data},
                                              {"strategy", o.strategy},
                                              {"model_scale", o.scale},
                                              {"beta", cfg.beta},
                                              {"lr", cfg.lr},
                                              {"batch_size", cfg.batch_size},
                                              {"max_epochs", cfg.max_epochs},
                                              {"min_segment", cfg.min_segment},
                                              {"max_segment", cfg.max_segment},
                                              {"target_loss", cfg.target_loss},
                                              {"seed", cfg.seed}});
  std::cout << "trained " << result.epochs_run << " epochs, loss " << result.initial_loss
            << " -> " << result.final_loss << '\n';
}

void run_laplace(const LaplaceOpts& o) {
  vio::SequenceDataset ds = vio::load_dataset(o.data);
  vio::SequenceDataset val = (o.val.empty() || o.val == o.data) ? ds : vio::load_dataset(o.val);
  vio::OdometryModel model = load_model(ds.config, o.strategy, o.scale, o.model);
  vio::ParamMap params = model.params();

  int count = static_cast<int>(ds.windows.size());
  vio::ParamMap fisher = vio::fit_fisher(params, count, [&](int i) {
    vio::Segment seg{i, 1};
    vio::Tensor pred = model.forward_segment(ds, seg);
    return vio::pose_loss(pred, vio::target_tensor(ds, seg), o.beta);
  });

  vio::LaplaceGrid grid;
  grid.multipliers = o.multipliers.empty() ? std::vector<double>{static_cast<double>(count)}
                                           : o.multipliers;
  grid.taus = o.taus.empty() ? std::vector<double>{0.01, 1.0, 100.0} : o.taus;
  vio::TuneResult best = vio::tune_posterior(model, val, params, fisher, grid, o.samples,
                                             o.seed, o.stochastic);

  vio::PosteriorApprox post =
      vio::make_posterior(params, fisher, best.fisher_multiplier, best.tau, o.stochastic);
  fs::create_directories(o.out);
  vio::save_posterior(o.out, post);
  write_resolved_config(o.out, nlohmann::json{{"command", "fit-laplace"},
                                              {"data", o.data},
                                              {"val", o.val.empty() ? o.data : o.val},
                                              {"model", o.model},
                                              {"strategy", o.strategy},
                                              {"model_scale", o.scale},
                                              {"beta", o.beta},
                                              {"samples", o.samples},
                                              {"seed", o.seed},
                                              {"grid_multipliers", grid.multipliers},
                                              {"grid_taus", grid.taus},
                                              {"selected_multiplier", best.fisher_multiplier},
                                              {"selected_tau", best.tau},
                                              {"selected_nll", best.nll}});
  std::cout << "posterior: multiplier " << best.fisher_multiplier << ", tau " << best.tau
            << ", nll " << best.nll << '\n';
}

void run_predict(const PredictOpts& o) {
  vio::SequenceDataset ds = vio::load_dataset(o.data);
  vio::OdometryModel model = load_model(ds.config, o.strategy, o.scale, o.model);
  vio::TrajectoryEstimate est;
  if (o.bayesian) {
    if (o.posterior.empty())
      throw vio::ConfigError("predict: --bayesian requires --posterior");
    vio::PosteriorApprox post = vio::load_posterior(o.posterior);
    est = vio::predict_bayesian(model, ds, post, o.samples, o.seed);
  } else {
    est = vio::predict_trajectory(model, ds);
  }
  fs::create_directories(o.out);
  vio::write_poses((fs::path(o.out) / "trajectory.txt").string(), est.poses);
  write_relative_csv((fs::path(o.out) / "relative.csv").string(), ds, est);
  write_resolved_config(o.out, nlohmann::json{{"command", "predict"},
                                              {"data", o.data},
                                              {"model", o.model},
                                              {"strategy", o.strategy},
                                              {"model_scale", o.scale},
                                              {"bayesian", o.bayesian},
                                              {"posterior", o.posterior},
                                              {"samples", o.bayesian ? o.samples : 0},
                                              {"seed", o.seed}});
  std::cout << "wrote trajectory of " << est.poses.size() << " poses to " << o.out << '\n';
}

void run_eval(const EvalOpts& o) {
  if (o.format != "json" && o.format != "csv")
    throw vio::ConfigError("eval: format must be json or csv");
  vio::TrajectoryEstimate pred, gt;
  pred.poses = resolve_poses(o.pred);
  gt.poses = resolve_poses(o.gt);
  vio::MetricReport report = vio::evaluate(pred, gt);
  fs::create_directories(o.out);
  vio::export_report(report, (fs::path(o.out) / ("report." + o.format)).string(), o.format);
  write_resolved_config(o.out, nlohmann::json{{"command", "eval"},
                                              {"pred", o.pred},
                                              {"gt", o.gt},
                                              {"format", o.format}});
  char line[128];
  std::snprintf(line, sizeof(line), "t_rel %.6g %% | r_rel %.6g deg/100m", report.t_rel,
                report.r_rel);
  std::cout << line << '\n';
}

void run_report(const ReportOpts& o) {
  vio::SequenceDataset ds = vio::load_dataset(o.data);
  vio::TrajectoryEstimate gt = vio::ground_truth_trajectory(ds);
  vio::TrajectoryEstimate pred;
  pred.poses = vio::read_poses((fs::path(o.pred) / "trajectory.txt").string());
  read_relative_csv((fs::path(o.pred) / "relative.csv").string(), pred);

  fs::create_directories(o.out);
  vio::export_trajectory_csv((fs::path(o.out) / "trajectory_xy.csv").string(), pred, gt);
  nlohmann::json resolved{{"command", "report"}, {"pred", o.pred}, {"data", o.data},
                          {"bins", o.bins}};
  if (pred.has_variance()) {
    vio::UncertaintyReport unc = vio::summarize_uncertainty(pred, gt, o.bins);
    vio::export_uncertainty_bins_csv((fs::path(o.out) / "uncertainty_bins.csv").string(), unc);
    nlohmann::json sp;
    for (int c = 0; c < 6; ++c) {
      sp["components"][vio::pose_component_names()[static_cast<std::size_t>(c)]] = {
          {"spearman_rho", unc.components[static_cast<std::size_t>(c)].spearman_rho},
          {"degenerate", unc.components[static_cast<std::size_t>(c)].degenerate}};
    }
    sp["mean_spearman"] = unc.mean_spearman;
    std::ofstream out((fs::path(o.out) / "spearman.json").string());
    if (!out) throw vio::IoError("cannot write spearman.json");
    out << sp.dump(2) << '\n';
  }
  write_resolved_config(o.out, resolved);
  std::cout << "wrote report files to " << o.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual-inertial odometry toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file with [subcommand] sections of long-option values");

  // Global fallbacks applied when a subcommand does not set its own.
  std::uint64_t global_seed = 0;
  std::string global_out;
  auto* g_seed = app.add_option("--seed", global_seed, "default master seed for the subcommand");
  auto* g_out = app.add_option("--out", global_out, "default output directory for the subcommand");

  auto fallback_out = [&](CLI::Option* local, std::string& value) {
    if (local->count() == 0 && g_out->count() > 0) value = global_out;
    if (value.empty())
      throw vio::ConfigError("missing output directory (--out on the subcommand or globally)");
  };
  auto fallback_seed = [&](CLI::Option* local, std::uint64_t& value) {
    if (local->count() == 0 && g_seed->count() > 0) value = global_seed;
  };

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* s_out = s->add_option("--out", synth.out, "output dataset directory");
  s->add_option("--shape", synth.cfg.path_shape, "path shape: line, arc, figure8");
  s->add_option("--frames", synth.cfg.num_frames, "number of frames");
  s->add_option("--speed", synth.cfg.speed, "speed along the path, m/s");
  s->add_option("--turn-radius", synth.cfg.turn_radius, "arc radius, m");
  s->add_option("--figure-scale", synth.cfg.figure_scale, "figure-eight lobe scale, m");
  s->add_option("--imu-noise", synth.cfg.imu_noise_std, "imu noise std");
  s->add_option("--image-noise", synth.cfg.image_noise, "image noise amplitude");
  s->add_option("--channels", synth.cfg.image_channels, "image channels");
  s->add_option("--height", synth.cfg.image_height, "image height");
  s->add_option("--width", synth.cfg.image_width, "image width");
  s->add_option("--imu-per-frame", synth.cfg.imu_per_frame, "imu readings per window");
  s->add_option("--rate", synth.cfg.frame_rate_hz, "frame rate, Hz");
  auto* s_seed = s->add_option("--seed", synth.seed, "master seed");
  s->callback([&] {
    fallback_out(s_out, synth.out);
    fallback_seed(s_seed, synth.seed);
    run_synth(synth);
  });

  IngestOpts ingest;
  auto* g = app.add_subcommand("ingest", "package raw files into a dataset directory");
  g->add_option("--images", ingest.images, "directory of PNG frames")->required();
  g->add_option("--imu", ingest.imu, "imu csv file")->required();
  g->add_option("--poses", ingest.poses, "ground-truth pose file")->required();
  auto* g_outopt = g->add_option("--out", ingest.out, "output dataset directory");
  g->add_option("--channels", ingest.cfg.image_channels,
                "image channels (default: from the first image)");
  g->add_option("--height", ingest.cfg.image_height, "image height (default: from the first image)");
  g->add_option("--width", ingest.cfg.image_width, "image width (default: from the first image)");
  g->add_option("--imu-per-frame", ingest.cfg.imu_per_frame, "imu readings per window");
  g->add_option("--rate", ingest.cfg.frame_rate_hz, "frame rate, Hz");
  g->callback([&] {
    fallback_out(g_outopt, ingest.out);
    run_ingest(ingest);
  });

  DegradeOpts degrade;
  auto* d = app.add_subcommand("degrade", "apply a corruption suite to a dataset");
  d->add_option("--in", degrade.in, "input dataset directory")->required();
  auto* d_out = d->add_option("--out", degrade.out, "output dataset directory");
  d->add_option("--suite", degrade.suite, "nominal, vision, inertial, or all");
  auto* d_seed = d->add_option("--seed", degrade.seed, "master seed");
  d->add_option("--occlusion-rate", degrade.defs.occlusion_rate, "fraction of frames occluded");
  d->add_option("--noise-blur-rate", degrade.defs.noise_blur_rate,
                "fraction of frames with noise and blur");
  d->add_option("--sp-fraction", degrade.defs.sp_fraction, "salt-and-pepper pixel fraction");
  d->add_option("--blur-sigma", degrade.defs.blur_sigma, "gaussian blur sigma");
  d->add_option("--missing-image-rate", degrade.defs.missing_image_rate,
                "fraction of windows with a repeated frame");
  d->add_option("--imu-noise-rate", degrade.defs.imu_noise_rate,
                "fraction of windows with imu noise and bias");
  d->add_option("--accel-noise-std", degrade.defs.accel_noise_std, "accelerometer noise std");
  d->add_option("--gyro-bias", degrade.defs.gyro_bias, "gyroscope bias per axis");
  d->add_option("--missing-imu-rate", degrade.defs.missing_imu_rate,
                "fraction of windows with dropped imu readings");
  d->add_option("--imu-drop-count", degrade.defs.imu_drop_count, "readings dropped per window");
  d->callback([&] {
    fallback_out(d_out, degrade.out);
    fallback_seed(d_seed, degrade.seed);
    run_degrade(degrade);
  });

  TrainOpts train;
  auto* t = app.add_subcommand("train", "train a model on a dataset");
  t->add_option("--data", train.data, "dataset directory")->required();
  auto* t_out = t->add_option("--out", train.out, "output directory");
  t->add_option("--strategy", train.strategy, "fusion strategy: mha, concat, soft");
  t->add_option("--model-scale", train.scale, "toy or full");
  t->add_option("--beta", train.cfg.beta, "orientation loss weight");
  t->add_option("--lr", train.cfg.lr, "learning rate");
  t->add_option("--batch-size", train.cfg.batch_size, "segments per optimizer step");
  t->add_option("--epochs", train.cfg.max_epochs, "maximum epochs");
  t->add_option("--min-segment", train.cfg.min_segment, "minimum segment length");
  t->add_option("--max-segment", train.cfg.max_segment, "maximum segment length");
  t->add_option("--target-loss", train.cfg.target_loss, "stop early at this epoch loss");
  t->add_option("--checkpoint-every", train.cfg.checkpoint_every,
                "write a checkpoint every N epochs (0 disables)");
  auto* t_seed = t->add_option("--seed", train.cfg.seed, "master seed");
  t->callback([&] {
    fallback_out(t_out, train.out);
    fallback_seed(t_seed, train.cfg.seed);
    run_train(train);
  });

  LaplaceOpts laplace;
  auto* l = app.add_subcommand("fit-laplace", "fit a diagonal posterior around trained weights");
  l->add_option("--data", laplace.data, "training dataset directory")->required();
  l->add_option("--val-data", laplace.val, "validation dataset (defaults to --data)");
  l->add_option("--model", laplace.model, "trained weights file")->required();
  auto* l_out = l->add_option("--out", laplace.out, "output posterior directory");
  l->add_option("--strategy", laplace.strategy, "fusion strategy used at training");
  l->add_option("--model-scale", laplace.scale, "toy or full");
  l->add_option("--beta", laplace.beta, "orientation loss weight");
  l->add_option("--multiplier", laplace.multipliers,
                "candidate curvature multipliers (repeatable)");
  l->add_option("--tau", laplace.taus, "candidate prior precisions (repeatable)");
  l->add_option("--samples", laplace.samples, "monte-carlo samples per grid point");
  l->add_option("--stochastic-prefix", laplace.stochastic,
                "restrict sampling to parameters with these name prefixes (repeatable)");
  auto* l_seed = l->add_option("--seed", laplace.seed, "master seed");
  l->callback([&] {
    fallback_out(l_out, laplace.out);
    fallback_seed(l_seed, laplace.seed);
    run_laplace(laplace);
  });

  PredictOpts predict;
  auto* p = app.add_subcommand("predict", "predict a trajectory with a trained model");
  p->add_option("--data", predict.data, "dataset directory")->required();
  p->add_option("--model", predict.model, "trained weights file")->required();
  auto* p_out = p->add_option("--out", predict.out, "output directory");
  p->add_option("--strategy", predict.strategy, "fusion strategy used at training");
  p->add_option("--model-scale", predict.scale, "toy or full");
  p->add_flag("--bayesian", predict.bayesian, "monte-carlo prediction with variance");
  p->add_option("--posterior", predict.posterior, "posterior directory (with --bayesian)");
  p->add_option("--samples", predict.samples, "monte-carlo samples");
  auto* p_seed = p->add_option("--seed", predict.seed, "master seed");
  p->callback([&] {
    fallback_out(p_out, predict.out);
    fallback_seed(p_seed, predict.seed);
    run_predict(predict);
  });

  EvalOpts eval_opts;
  auto* e = app.add_subcommand("eval", "score a predicted trajectory against ground truth");
  e->add_option("--pred", eval_opts.pred, "pose file or prediction directory")->required();
  e->add_option("--gt", eval_opts.gt, "pose file or dataset directory")->required();
  auto* e_out = e->add_option("--out", eval_opts.out, "output directory");
  e->add_option("--format", eval_opts.format, "report format: json or csv");
  e->callback([&] {
    fallback_out(e_out, eval_opts.out);
    run_eval(eval_opts);
  });

  ReportOpts report;
  auto* r = app.add_subcommand("report", "export plot-ready csv summaries of a prediction");
  r->add_option("--pred", report.pred, "prediction directory")->required();
  r->add_option("--data", report.data, "dataset directory")->required();
  auto* r_out = r->add_option("--out", report.out, "output directory");
  r->add_option("--bins", report.bins, "error quantile bins");
  r->callback([&] {
    fallback_out(r_out, report.out);
    run_report(report);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  } catch (const vio::ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const vio::FormatError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const vio::DimensionError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
