#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "vio/dataset.hpp"
#include "vio/encoders.hpp"
#include "vio/eval.hpp"
#include "vio/fusion.hpp"
#include "vio/optim.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  VisionEncoderConfig vision;
  InertialEncoderConfig inertial;
  FusionConfig fusion;
  int core_hidden = 1000;
  int core_layers = 2;
  bool core_bidirectional = true;

  void validate() const {
    fusion.validate();
    if (fusion.vision_width != vision.feature_width())
      throw ConfigError("model: fusion vision width " + std::to_string(fusion.vision_width) +
                        " does not match encoder feature width " +
                        std::to_string(vision.feature_width()));
    if (fusion.inertial_width != inertial.feature_width())
      throw ConfigError("model: fusion inertial width " + std::to_string(fusion.inertial_width) +
                        " does not match encoder feature width " +
                        std::to_string(inertial.feature_width()));
    if (core_hidden < 1 || core_layers < 1) throw ConfigError("model: core dimensions must be positive");
  }
};

// Miniature configuration sized for tests and synthetic data. The core runs
// one unidirectional layer so that hidden-state threading across segment
// splits is exactly equivalent to an unsplit pass.
inline ModelConfig toy_model_config(const DatasetConfig& data, const std::string& strategy) {
  ModelConfig cfg;
  cfg.vision = toy_vision_config(data.image_channels, data.image_height, data.image_width);
  cfg.inertial.hidden = 8;
  cfg.inertial.layers = 1;
  cfg.inertial.bidirectional = true;
  cfg.fusion.strategy = strategy;
  cfg.fusion.vision_width = cfg.vision.feature_width();
  cfg.fusion.inertial_width = cfg.inertial.feature_width();
  int fused = cfg.fusion.fused_width();
  cfg.fusion.attention.tokens = 2;
  cfg.fusion.attention.model_width = fused / 2;
  cfg.fusion.attention.num_heads = 4;
  cfg.fusion.attention.head_width = std::max(1, fused / 8);
  cfg.core_hidden = 32;
  cfg.core_layers = 1;
  cfg.core_bidirectional = false;
  return cfg;
}

// Full-scale architecture as configuration only: nine-convolution vision
// stack at 184x608, 15-wide two-layer bidirectional inertial encoder, and a
// 1000-wide two-layer bidirectional core.
inline ModelConfig full_model_config(const std::string& strategy) {
  ModelConfig cfg;
  cfg.vision = full_vision_config();
  cfg.inertial.hidden = 15;
  cfg.inertial.layers = 2;
  cfg.inertial.bidirectional = true;
  cfg.fusion.strategy = strategy;
  cfg.fusion.vision_width = cfg.vision.feature_width();
  cfg.fusion.inertial_width = cfg.inertial.feature_width();
  int fused = cfg.fusion.fused_width();
  cfg.fusion.attention.tokens = 2;
  cfg.fusion.attention.model_width = fused / 2;
  cfg.fusion.attention.num_heads = 8;
  cfg.fusion.attention.head_width = 128;
  cfg.core_hidden = 1000;
  cfg.core_layers = 2;
  cfg.core_bidirectional = true;
  return cfg;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Sum over time of squared translation error plus beta times squared
// orientation error, with angle residuals wrapped to (-pi, pi] before
// squaring. pred/target: (T, 6) rows [tx, ty, tz, yaw, pitch, roll].
inline Tensor pose_loss(const Tensor& pred, const Tensor& target, double beta) {
  if (pred.shape() != target.shape())
    throw ContractError("loss: prediction " + shape_str(pred.shape()) + " vs target " +
                        shape_str(target.shape()));
  if (beta <= 0.0) throw ConfigError("loss: beta must be positive");
  Tensor diff = sub(pred, target);
  Tensor t_err = slice(diff, 1, 0, 3);
  Tensor r_err = wrap_angles(slice(diff, 1, 3, 3));
  return add(sum(square(t_err)), scale(sum(square(r_err)), beta));
}

// Scalar convenience over pose lists (one sample, sum over steps).
inline double loss(const std::vector<Pose6D>& pred, const std::vector<Pose6D>& target,
                   double beta) {
  if (pred.size() != target.size())
    throw ContractError("loss: length mismatch: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(target.size()));
  if (beta <= 0.0) throw ConfigError("loss: beta must be positive");
  double t_sq = 0.0, r_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      double dt = pred[i].translation[static_cast<std::size_t>(k)] - target[i].translation[static_cast<std::size_t>(k)];
      t_sq += dt * dt;
      double dr = wrap_angle(pred[i].angles[static_cast<std::size_t>(k)] - target[i].angles[static_cast<std::size_t>(k)]);
      r_sq += dr * dr;
    }
  }
  return t_sq + r_sq * beta;
}

// Summed squared wrapped orientation error; the loss is linear in beta with
// exactly this slope.
inline double orientation_error_sq(const std::vector<Pose6D>& pred,
                                   const std::vector<Pose6D>& target) {
  double r_sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      double dr = wrap_angle(pred[i].angles[static_cast<std::size_t>(k)] - target[i].angles[static_cast<std::size_t>(k)]);
      r_sq += dr * dr;
    }
  return r_sq;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class OdometryModel {
 public:
  OdometryModel() = default;
  OdometryModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x1417));
    vision_ = VisionEncoder(cfg.vision, rng);
    inertial_ = InertialEncoder(cfg.inertial, rng);
    fusion_ = FusionStrategy(cfg.fusion, rng);
    core_ = Lstm(cfg.fusion.fused_width(), cfg.core_hidden, cfg.core_layers,
                 cfg.core_bidirectional, rng);
    head_ = Linear(core_.output_size(), 6, true, rng);
  }

  // Runs the windows of one segment through encoders, fusion, the core
  // recurrence, and the regression head. Returns (length, 6) predictions.
  // The initial state seeds the core's forward direction (backward restarts
  // per segment); `final_state` receives the forward state after the last
  // step for cross-segment threading.
  Tensor forward_segment(const SequenceDataset& ds, const Segment& seg,
                         const LstmState* initial = nullptr, LstmState* final_state = nullptr,
                         bool training = false, Rng* rng = nullptr) {
    if (seg.length < 1 || seg.start < 0 ||
        seg.start + seg.length > static_cast<int>(ds.windows.size()))
      throw ContractError("forward_segment: segment [" + std::to_string(seg.start) + ", " +
                          std::to_string(seg.start + seg.length) + ") out of range");
    std::vector<Tensor> fused;
    fused.reserve(static_cast<std::size_t>(seg.length));
    for (int t = 0; t < seg.length; ++t) {
      const SampleWindow& w = ds.windows[static_cast<std::size_t>(seg.start + t)];
      Tensor b_v = vision_.encode(ds.frame_a(w), ds.frame_b(w), training, rng);
      Tensor b_i = inertial_.encode(w);
      fused.push_back(fusion_.forward(b_v, b_i));
    }
    Tensor y_seq = stack0(fused);  // (T, 1, fused_width)
    Tensor core_out = core_.forward(y_seq, initial, final_state);
    Tensor flat = reshape(core_out, {seg.length, core_.output_size()});
    return head_.forward(flat);
  }

  ParamMap params() const {
    ParamMap out;
    vision_.collect("vision", out);
    inertial_.collect("inertial", out);
    fusion_.collect("fusion", out);
    core_.collect("core", out);
    head_.collect("head", out);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  VisionEncoder& vision() { return vision_; }
  InertialEncoder& inertial() { return inertial_; }
  FusionStrategy& fusion() { return fusion_; }
  Lstm& core() { return core_; }
  Linear& head() { return head_; }

 private:
  ModelConfig cfg_;
  VisionEncoder vision_;
  InertialEncoder inertial_;
  FusionStrategy fusion_;
  Lstm core_;
  Linear head_;
};

inline std::vector<Pose6D> predictions_to_poses(const Tensor& pred) {
  if (pred.rank() != 2 || pred.dim(1) != 6)
    throw ContractError("predictions_to_poses: expected (T, 6), got " + shape_str(pred.shape()));
  std::vector<Pose6D> out(static_cast<std::size_t>(pred.dim(0)));
  for (int i = 0; i < pred.dim(0); ++i) {
    for (int k = 0; k < 3; ++k) {
      out[static_cast<std::size_t>(i)].translation[static_cast<std::size_t>(k)] = pred.data()[i * 6 + k];
      out[static_cast<std::size_t>(i)].angles[static_cast<std::size_t>(k)] = wrap_angle(pred.data()[i * 6 + 3 + k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory prediction
// ---------------------------------------------------------------------------

// Deterministic point prediction: the full sequence is evaluated as a single
// segment (state threads across every step), relative outputs are composed
// into an absolute trajectory starting from the dataset's first ground-truth
// pose.
inline TrajectoryEstimate predict_trajectory(OdometryModel& model, const SequenceDataset& ds) {
  if (ds.windows.empty()) throw ContractError("predict_trajectory: dataset has no windows");
  Segment all{0, static_cast<int>(ds.windows.size())};
  Tensor pred = model.forward_segment(ds, all);
  TrajectoryEstimate est;
  est.relative = predictions_to_poses(pred);
  RigidTransform current = ds.absolute.empty() ? RigidTransform::identity() : ds.absolute.front();
  est.poses.push_back(current);
  for (const Pose6D& p : est.relative) {
    current = relative_to_absolute(current, p);
    est.poses.push_back(current);
  }
  return est;
}

inline TrajectoryEstimate ground_truth_trajectory(const SequenceDataset& ds) {
  TrajectoryEstimate est;
  est.poses = ds.absolute;
  est.relative.reserve(ds.windows.size());
  for (const SampleWindow& w : ds.windows) est.relative.push_back(w.target);
  return est;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double beta = 1000.0;
  double lr = 5e-5;
  int batch_size = 8;
  int max_epochs = 80;
  std::uint64_t seed = 0;
  std::string strategy = "mha";
  int min_segment = 4;
  int max_segment = 8;
  double target_loss = -1.0;  // early stop when epoch loss falls below, if > 0
  int checkpoint_every = 0;   // epochs; 0 disables periodic checkpoints
  std::string checkpoint_dir;

  void validate() const {
    if (beta <= 0.0) throw ConfigError("train: beta must be positive");
    if (lr < 0.0) throw ConfigError("train: learning rate must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max epochs must be >= 1");
  }
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int epochs_run = 0;
};

inline void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train log: " + path);
  for (const EpochLog& e : log) {
    nlohmann::json j{{"epoch", e.epoch}, {"loss", e.loss}, {"wall_seconds", e.wall_seconds}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Seeded mini-batch training over segment draws. Per epoch the segment order
// is reshuffled; each batch averages its segments' losses, backpropagates
// once, and applies one optimizer step. Epoch loss is the mean per-segment
// loss. A non-finite loss aborts with the epoch and segment named.
inline TrainResult train(OdometryModel& model, const SequenceDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.windows.empty()) throw ContractError("train: dataset has no windows");
  std::vector<Segment> segs =
      segment(ds, cfg.min_segment, std::min(cfg.max_segment, static_cast<int>(ds.windows.size())),
              derive_seed(cfg.seed, 0x5e64));
  if (segs.empty()) throw ContractError("train: dataset yields no segments");

  ParamMap params = model.params();
  Adam opt(cfg.lr);
  TrainResult result;
  auto start = std::chrono::steady_clock::now();

  std::vector<int> order(segs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c00 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    Rng dropout_rng(derive_seed(cfg.seed, 0xd70000 + static_cast<std::uint64_t>(epoch)));

    double epoch_loss_sum = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - done);
      std::vector<Tensor> losses;
      losses.reserve(take);
      for (std::size_t b = 0; b < take; ++b) {
        const Segment& seg = segs[static_cast<std::size_t>(order[done + b])];
        Tensor pred = model.forward_segment(ds, seg, nullptr, nullptr, true, &dropout_rng);
        Tensor l = pose_loss(pred, target_tensor(ds, seg), cfg.beta);
        if (!std::isfinite(l.value()))
          throw ContractError("train: loss is not finite at epoch " + std::to_string(epoch) +
                              ", segment starting at window " + std::to_string(seg.start));
        epoch_loss_sum += l.value();
        losses.push_back(l);
      }
      Tensor batch_loss = losses.size() == 1 ? losses[0] : concat(losses, 0);
      Tensor objective = scale(sum(batch_loss), 1.0 / static_cast<double>(take));
      objective.backward();
      opt.step(params);
      done += take;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = epoch_loss_sum / static_cast<double>(segs.size());
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (epoch == 0) result.initial_loss = entry.loss;
    result.final_loss = entry.loss;
    result.epochs_run = epoch + 1;

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(cfg.checkpoint_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".json",
                      params);
    if (cfg.target_loss > 0.0 && entry.loss <= cfg.target_loss) break;
  }
  return result;
}

}  // namespace vio
