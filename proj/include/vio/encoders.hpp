#pragma once

#include <string>
#include <vector>

#include "vio/checkpoint.hpp"
#include "vio/dataset.hpp"
#include "vio/nn.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Vision encoder: stacked-convolution feature extractor over an image pair
// ---------------------------------------------------------------------------

struct ConvLayerSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  // Padding fixed at (kernel-1)/2 so output extent depends only on stride.
};

struct VisionEncoderConfig {
  std::vector<ConvLayerSpec> layers;
  int image_channels = 1;
  int image_height = 16;
  int image_width = 32;
  bool batchnorm = false;
  double dropout = 0.0;

  int input_channels() const { return 2 * image_channels; }

  // Feature width implied by the layer schedule: channels x spatial extent
  // after the final convolution.
  int feature_width() const {
    int h = image_height, w = image_width, c = input_channels();
    for (const ConvLayerSpec& l : layers) {
      int pad = (l.kernel - 1) / 2;
      h = (h + 2 * pad - l.kernel) / l.stride + 1;
      w = (w + 2 * pad - l.kernel) / l.stride + 1;
      c = l.out_channels;
    }
    return c * h * w;
  }
};

// Four-convolution miniature with the same stack shape as the full schedule
// (stride-2 downsampling, ReLU after every convolution except the last).
inline VisionEncoderConfig toy_vision_config(int channels = 1, int height = 16, int width = 32) {
  VisionEncoderConfig cfg;
  cfg.image_channels = channels;
  cfg.image_height = height;
  cfg.image_width = width;
  cfg.layers = {{4, 3, 2}, {8, 3, 2}, {16, 3, 2}, {8, 3, 2}};
  return cfg;
}

// Full-scale schedule: nine convolutions, ReLU after each except the last;
// counting convolutions and interleaved activations gives seventeen layers.
inline VisionEncoderConfig full_vision_config(int channels = 1, int height = 184,
                                              int width = 608) {
  VisionEncoderConfig cfg;
  cfg.image_channels = channels;
  cfg.image_height = height;
  cfg.image_width = width;
  cfg.layers = {{64, 7, 2},  {128, 5, 2}, {256, 5, 2}, {256, 3, 1}, {512, 3, 2},
                {512, 3, 1}, {512, 3, 2}, {512, 3, 1}, {1024, 3, 2}};
  return cfg;
}

// Channel-stacks two consecutive frames and runs the convolution stack.
// Output is a (1, feature_width) row vector.
class VisionEncoder {
 public:
  VisionEncoder() = default;
  VisionEncoder(const VisionEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in = cfg.input_channels();
    for (const ConvLayerSpec& l : cfg.layers) {
      convs_.emplace_back(in, l.out_channels, l.kernel, l.stride, (l.kernel - 1) / 2, true, rng);
      if (cfg.batchnorm) norms_.emplace_back(l.out_channels);
      in = l.out_channels;
    }
  }

  Tensor encode(const ImageFrame& a, const ImageFrame& b, bool training = false,
                Rng* dropout_rng = nullptr) {
    if (a.pixels.shape() != b.pixels.shape())
      throw DimensionError("encode_vision: frame shapes disagree: " + shape_str(a.pixels.shape()) +
                           " vs " + shape_str(b.pixels.shape()));
    if (a.pixels.dim(0) != cfg_.image_channels || a.pixels.dim(1) != cfg_.image_height ||
        a.pixels.dim(2) != cfg_.image_width)
      throw DimensionError("encode_vision: frame " + shape_str(a.pixels.shape()) +
                           " does not match configured (" + std::to_string(cfg_.image_channels) +
                           ", " + std::to_string(cfg_.image_height) + ", " +
                           std::to_string(cfg_.image_width) + ")");
    Tensor x = concat({a.pixels, b.pixels}, 0);
    return encode_stacked(x, training, dropout_rng);
  }

  // x: (2*image_channels, H, W) already stacked.
  Tensor encode_stacked(Tensor x, bool training = false, Rng* dropout_rng = nullptr) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = convs_[i].forward(x);
      if (cfg_.batchnorm) x = norms_[i].forward(x, training);
      if (i + 1 < convs_.size()) x = relu(x);
    }
    Tensor flat = reshape(x, {1, x.size()});
    if (cfg_.dropout > 0.0 && training) {
      if (!dropout_rng) throw ContractError("encode_vision: dropout enabled but no rng supplied");
      flat = dropout(flat, cfg_.dropout, training, *dropout_rng);
    }
    return flat;
  }

  void collect(const std::string& prefix, ParamMap& out) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
      if (cfg_.batchnorm) norms_[i].collect(prefix + ".bn" + std::to_string(i), out);
    }
  }

  const VisionEncoderConfig& config() const { return cfg_; }

 private:
  VisionEncoderConfig cfg_;
  std::vector<Conv2dLayer> convs_;
  std::vector<BatchNorm2d> norms_;
};

// ---------------------------------------------------------------------------
// Inertial encoder: recurrent feature extractor over an IMU block
// ---------------------------------------------------------------------------

struct InertialEncoderConfig {
  int hidden = 15;
  int layers = 2;
  bool bidirectional = true;
  int input_width = 6;

  int feature_width() const { return hidden * (bidirectional ? 2 : 1); }
};

// Runs the reading block through the recurrent stack and returns each
// direction's final hidden state: the forward state after the last step
// concatenated with the backward state after its own last step (which
// processed the block back to the first reading). Output is (1, feature_width).
class InertialEncoder {
 public:
  InertialEncoder() = default;
  InertialEncoder(const InertialEncoderConfig& cfg, Rng& rng)
      : cfg_(cfg), lstm_(cfg.input_width, cfg.hidden, cfg.layers, cfg.bidirectional, rng) {}

  // block: (steps, 1, input_width)
  Tensor encode(const Tensor& block) {
    if (block.rank() != 3 || block.dim(2) != cfg_.input_width)
      throw DimensionError("encode_inertial: block " + shape_str(block.shape()) +
                           " does not have reading width " + std::to_string(cfg_.input_width));
    Tensor seq = lstm_.forward(block);  // (T, 1, H*dirs)
    int t_len = seq.dim(0);
    int h = cfg_.hidden;
    Tensor last = reshape(slice(seq, 0, t_len - 1, 1), {1, lstm_.output_size()});
    if (!cfg_.bidirectional) return last;
    Tensor first = reshape(slice(seq, 0, 0, 1), {1, lstm_.output_size()});
    return concat({slice(last, 1, 0, h), slice(first, 1, h, h)}, 1);
  }

  Tensor encode(const SampleWindow& w) { return encode(imu_block_tensor(w)); }

  void collect(const std::string& prefix, ParamMap& out) const { lstm_.collect(prefix, out); }

  const InertialEncoderConfig& config() const { return cfg_; }
  const Lstm& lstm() const { return lstm_; }
  Lstm& lstm() { return lstm_; }

 private:
  InertialEncoderConfig cfg_;
  Lstm lstm_;
};

// Replaces parameters from a checkpoint file. The file is validated in full
// (names and shapes, with per-name diagnostics) before anything is written,
// so a failing load leaves the model unchanged.
inline void load_pretrained(const std::string& checkpoint_path, ParamMap& params) {
  load_checkpoint(checkpoint_path, params);
}

}  // namespace vio
