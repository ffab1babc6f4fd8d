#pragma once

// Shared test utilities: finite-difference gradient checking, temp dirs,
// and small dataset builders. Used by both the unit suite and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include <vio/vio.hpp>

namespace testutil {

// Max relative error between reverse-mode gradients and central finite
// differences, over every entry of every given parameter. `fn` must rebuild
// the computation from the parameter tensors on each call (backward consumes
// the graph).
struct GradCheck {
  double max_err = 0.0;
  std::string worst;  // "param#k[j]" of the worst entry
};

inline GradCheck gradcheck(std::vector<vio::Tensor> params,
                           const std::function<vio::Tensor()>& fn, double step = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  vio::Tensor loss = fn();
  loss.backward();
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto& p : params)
    grads.push_back(p.has_grad() ? p.grad()
                                 : std::vector<double>(static_cast<std::size_t>(p.size()), 0.0));
  for (auto& p : params) p.zero_grad();

  GradCheck result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    double* d = params[pi].data();
    for (int j = 0; j < params[pi].size(); ++j) {
      double orig = d[j];
      d[j] = orig + step;
      double fp = fn().value();
      d[j] = orig - step;
      double fm = fn().value();
      d[j] = orig;
      double fd = (fp - fm) / (2.0 * step);
      double g = grads[pi][static_cast<std::size_t>(j)];
      double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
      double err = std::abs(fd - g) / denom;
      if (err > result.max_err) {
        result.max_err = err;
        result.worst = "param#" + std::to_string(pi) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return result;
}

// Fresh scratch directory under the system temp root.
inline std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / ("vio_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

inline vio::Tensor random_tensor(const vio::Shape& shape, vio::Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(vio::shape_numel(shape)));
  for (double& x : v) x = rng.normal(0.0, scale);
  return vio::Tensor::from_data(shape, v);
}

inline void fill_params(vio::ParamMap& params, double value) {
  for (auto& kv : params) std::fill(kv.second.data(), kv.second.data() + kv.second.size(), value);
}

inline void randomize_params(vio::ParamMap& params, vio::Rng& rng, double scale = 0.1) {
  for (auto& kv : params)
    for (int j = 0; j < kv.second.size(); ++j) kv.second.data()[j] = rng.normal(0.0, scale);
}

inline bool params_equal(const vio::ParamMap& a, const vio::ParamMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& kv : a) {
    auto it = b.find(kv.first);
    if (it == b.end() || it->second.shape() != kv.second.shape()) return false;
    for (int j = 0; j < kv.second.size(); ++j)
      if (kv.second.values()[static_cast<std::size_t>(j)] !=
          it->second.values()[static_cast<std::size_t>(j)])
        return false;
  }
  return true;
}

inline bool tensors_equal(const vio::Tensor& a, const vio::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int j = 0; j < a.size(); ++j)
    if (a.values()[static_cast<std::size_t>(j)] != b.values()[static_cast<std::size_t>(j)])
      return false;
  return true;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vio::IoError("test: cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Small arc dataset used across model/laplace/cli tests.
inline vio::SequenceDataset toy_arc_dataset(int frames = 17, std::uint64_t seed = 7,
                                            int height = 16, int width = 32) {
  vio::SynthConfig cfg;
  cfg.path_shape = "arc";
  cfg.num_frames = frames;
  cfg.speed = 1.0;
  cfg.turn_radius = 20.0;
  cfg.image_noise = 0.05;
  cfg.image_height = height;
  cfg.image_width = width;
  return vio::synthesize(cfg, seed);
}

}  // namespace testutil
