#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "vio/checkpoint.hpp"
#include "vio/model.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Diagonal posterior approximation around a trained weight vector
// ---------------------------------------------------------------------------

struct PosteriorApprox {
  ParamMap theta_map;     // detached copy of the trained weights
  ParamMap fisher_diag;   // mean squared per-sample loss gradient, per entry
  double fisher_multiplier = 1.0;  // effective data count N scaling the curvature
  double tau = 1.0;                // isotropic prior precision
  // Empty: every parameter is stochastic. Otherwise only parameters whose
  // name starts with one of these prefixes are perturbed when sampling
  // (e.g. {"fusion", "head"} for a cheaper posterior over late layers).
  std::vector<std::string> stochastic_prefixes;

  bool is_stochastic(const std::string& name) const {
    if (stochastic_prefixes.empty()) return true;
    for (const std::string& p : stochastic_prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  void validate() const {
    if (fisher_multiplier <= 0.0) throw ConfigError("posterior: fisher multiplier must be > 0");
    if (tau <= 0.0) throw ConfigError("posterior: tau must be > 0");
    if (theta_map.size() != fisher_diag.size())
      throw ContractError("posterior: weight/curvature key count mismatch");
    for (const auto& kv : theta_map) {
      auto it = fisher_diag.find(kv.first);
      if (it == fisher_diag.end())
        throw ContractError("posterior: missing curvature for '" + kv.first + "'");
      if (it->second.shape() != kv.second.shape())
        throw ContractError("posterior: shape mismatch for '" + kv.first + "'");
    }
  }
};

inline ParamMap snapshot_params(const ParamMap& params) {
  ParamMap out;
  for (const auto& kv : params)
    out.emplace(kv.first, Tensor::from_data(kv.second.shape(), kv.second.values()));
  return out;
}

// Copies values into the live parameter tensors (shapes must match).
inline void set_param_values(ParamMap& params, const ParamMap& values) {
  for (auto& kv : params) {
    auto it = values.find(kv.first);
    if (it == values.end())
      throw ContractError("set_param_values: missing value for '" + kv.first + "'");
    if (it->second.shape() != kv.second.shape())
      throw ContractError("set_param_values: shape mismatch for '" + kv.first + "'");
    std::copy(it->second.data(), it->second.data() + it->second.size(), kv.second.data());
  }
}

// ---------------------------------------------------------------------------
// Curvature estimation
// ---------------------------------------------------------------------------

// Empirical diagonal Fisher: the mean over samples of the squared per-sample
// loss gradient. `per_sample_loss(i)` must return a scalar tensor whose graph
// reaches the given parameters. Parameters without a gradient contribute
// zero curvature; any non-finite loss or gradient aborts naming the sample.
template <typename LossFn>
inline ParamMap fit_fisher(ParamMap& params, int count, LossFn&& per_sample_loss) {
  if (count < 1) throw ConfigError("fisher: sample count must be >= 1");
  std::map<std::string, std::vector<double>> acc;
  for (const auto& kv : params)
    acc[kv.first].assign(static_cast<std::size_t>(kv.second.size()), 0.0);

  for (int i = 0; i < count; ++i) {
    for (auto& kv : params) kv.second.zero_grad();
    Tensor l = per_sample_loss(i);
    if (!std::isfinite(l.value()))
      throw ContractError("fisher: per-sample loss is not finite at sample " + std::to_string(i));
    l.backward();
    for (auto& kv : params) {
      if (!kv.second.requires_grad() || !kv.second.has_grad()) continue;
      const std::vector<double>& g = kv.second.grad();
      std::vector<double>& a = acc[kv.first];
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (!std::isfinite(g[j]))
          throw ContractError("fisher: gradient for '" + kv.first +
                              "' is not finite at sample " + std::to_string(i));
        a[j] += g[j] * g[j];
      }
    }
  }
  for (auto& kv : params) kv.second.zero_grad();

  ParamMap fisher;
  double inv = 1.0 / static_cast<double>(count);
  for (const auto& kv : params) {
    std::vector<double>& a = acc[kv.first];
    for (double& v : a) v *= inv;
    fisher.emplace(kv.first, Tensor::from_data(kv.second.shape(), a));
  }
  return fisher;
}

// Regularized posterior precision: N * fisher + tau, elementwise.
inline ParamMap regularize(const ParamMap& fisher, double fisher_multiplier, double tau) {
  if (fisher_multiplier <= 0.0) throw ConfigError("regularize: fisher multiplier must be > 0");
  if (tau <= 0.0) throw ConfigError("regularize: tau must be > 0");
  ParamMap out;
  for (const auto& kv : fisher) {
    std::vector<double> v = kv.second.values();
    for (double& x : v) {
      if (x < 0.0)
        throw ContractError("regularize: negative curvature entry in '" + kv.first + "'");
      x = fisher_multiplier * x + tau;
    }
    out.emplace(kv.first, Tensor::from_data(kv.second.shape(), v));
  }
  return out;
}

inline PosteriorApprox make_posterior(const ParamMap& params, const ParamMap& fisher,
                                      double fisher_multiplier, double tau,
                                      const std::vector<std::string>& stochastic_prefixes = {}) {
  PosteriorApprox post;
  post.theta_map = snapshot_params(params);
  post.fisher_diag = snapshot_params(fisher);
  post.fisher_multiplier = fisher_multiplier;
  post.tau = tau;
  post.stochastic_prefixes = stochastic_prefixes;
  post.validate();
  return post;
}

// ---------------------------------------------------------------------------
// Sampling and Monte-Carlo prediction
// ---------------------------------------------------------------------------

// Draws one weight vector: theta = theta_map + eps / sqrt(N * F + tau) with
// eps standard normal per entry.
inline ParamMap sample_params(const PosteriorApprox& post, Rng& rng) {
  post.validate();
  ParamMap out;
  for (const auto& kv : post.theta_map) {
    std::vector<double> v = kv.second.values();
    if (post.is_stochastic(kv.first)) {
      const Tensor& f = post.fisher_diag.at(kv.first);
      for (std::size_t j = 0; j < v.size(); ++j) {
        double precision = post.fisher_multiplier * f.values()[j] + post.tau;
        v[j] += rng.normal(0.0, 1.0) / std::sqrt(precision);
      }
    }
    out.emplace(kv.first, Tensor::from_data(kv.second.shape(), v));
  }
  return out;
}

// Monte-Carlo trajectory prediction with per-window predictive mean and
// unbiased variance over weight samples. Each sample's generator is derived
// independently from the master seed; the model's live weights are restored
// afterwards. The seeded-vector overload exists so tests can pin the draws.
inline TrajectoryEstimate predict_bayesian_with_seeds(OdometryModel& model,
                                                      const SequenceDataset& ds,
                                                      const PosteriorApprox& post,
                                                      const std::vector<std::uint64_t>& seeds) {
  post.validate();
  if (seeds.size() < 2)
    throw ConfigError("bayesian prediction: needs at least two samples for an unbiased variance");
  if (ds.windows.empty()) throw ContractError("bayesian prediction: dataset has no windows");
  ParamMap live = model.params();
  ParamMap backup = snapshot_params(live);
  Segment all{0, static_cast<int>(ds.windows.size())};
  std::size_t n = ds.windows.size() * 6;
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  for (std::uint64_t s : seeds) {
    Rng rng(s);
    set_param_values(live, sample_params(post, rng));
    Tensor pred = model.forward_segment(ds, all);
    for (std::size_t j = 0; j < n; ++j) {
      double v = pred.data()[j];
      sum[j] += v;
      sum_sq[j] += v * v;
    }
  }
  set_param_values(live, backup);

  double t = static_cast<double>(seeds.size());
  TrajectoryEstimate est;
  est.relative.resize(ds.windows.size());
  est.variance.resize(ds.windows.size());
  for (std::size_t w = 0; w < ds.windows.size(); ++w) {
    for (int k = 0; k < 6; ++k) {
      std::size_t j = w * 6 + static_cast<std::size_t>(k);
      double m = sum[j] / t;
      double var = (sum_sq[j] - t * m * m) / (t - 1.0);
      if (var < 0.0) var = 0.0;  // numeric guard near zero spread
      if (k < 3)
        est.relative[w].translation[static_cast<std::size_t>(k)] = m;
      else
        est.relative[w].angles[static_cast<std::size_t>(k - 3)] = wrap_angle(m);
      est.variance[w][static_cast<std::size_t>(k)] = var;
    }
  }
  RigidTransform current = ds.absolute.empty() ? RigidTransform::identity() : ds.absolute.front();
  est.poses.push_back(current);
  for (const Pose6D& p : est.relative) {
    current = relative_to_absolute(current, p);
    est.poses.push_back(current);
  }
  return est;
}

inline TrajectoryEstimate predict_bayesian(OdometryModel& model, const SequenceDataset& ds,
                                           const PosteriorApprox& post, int samples,
                                           std::uint64_t seed) {
  if (samples < 2)
    throw ConfigError("bayesian prediction: needs at least two samples for an unbiased variance");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(samples));
  for (int t = 0; t < samples; ++t)
    seeds[static_cast<std::size_t>(t)] = derive_seed(seed, 1000 + static_cast<std::uint64_t>(t));
  return predict_bayesian_with_seeds(model, ds, post, seeds);
}

// ---------------------------------------------------------------------------
// Hyper-parameter tuning
// ---------------------------------------------------------------------------

// Mean Gaussian negative log-likelihood of errors under predicted variances,
// with variances floored at 1e-12 to keep the objective finite.
inline double gaussian_nll(const std::vector<double>& errors,
                           const std::vector<double>& variances) {
  if (errors.size() != variances.size() || errors.empty())
    throw ContractError("gaussian_nll: needs matching non-empty error/variance lists");
  constexpr double kFloor = 1e-12;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double total = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    double var = std::max(variances[i], kFloor);
    total += 0.5 * (std::log(kTwoPi * var) + errors[i] * errors[i] / var);
  }
  return total / static_cast<double>(errors.size());
}

struct LaplaceGrid {
  std::vector<double> multipliers;  // candidate effective data counts N
  std::vector<double> taus;         // candidate prior precisions
};

struct TuneResult {
  double fisher_multiplier = 0.0;
  double tau = 0.0;
  double nll = std::numeric_limits<double>::infinity();
  bool valid = false;
};

// Exhaustive grid minimization of a (multiplier, tau) objective. Ties keep
// the earlier grid entry (multipliers outer, taus inner); a grid with no
// finite objective value is an error.
template <typename ObjectiveFn>
inline TuneResult tune_hyperparams(const LaplaceGrid& grid, ObjectiveFn&& objective) {
  if (grid.multipliers.empty() || grid.taus.empty())
    throw ConfigError("tune: grid must contain at least one multiplier and one tau");
  TuneResult best;
  for (double n : grid.multipliers)
    for (double t : grid.taus) {
      if (n <= 0.0 || t <= 0.0)
        throw ConfigError("tune: grid values must be positive");
      double v = objective(n, t);
      if (std::isfinite(v) && v < best.nll) {
        best.fisher_multiplier = n;
        best.tau = t;
        best.nll = v;
        best.valid = true;
      }
    }
  if (!best.valid) throw Error("tune: objective was non-finite over the whole grid");
  return best;
}

// Concrete tuning pipeline: for every grid point, build the posterior, run
// Monte-Carlo prediction on the validation set, and score the per-window
// component errors against the predicted variances.
inline TuneResult tune_posterior(OdometryModel& model, const SequenceDataset& val,
                                 const ParamMap& params, const ParamMap& fisher,
                                 const LaplaceGrid& grid, int samples, std::uint64_t seed,
                                 const std::vector<std::string>& stochastic_prefixes = {}) {
  return tune_hyperparams(grid, [&](double n, double tau) {
    PosteriorApprox post = make_posterior(params, fisher, n, tau, stochastic_prefixes);
    TrajectoryEstimate est = predict_bayesian(model, val, post, samples, seed);
    std::vector<double> errors, variances;
    errors.reserve(val.windows.size() * 6);
    variances.reserve(val.windows.size() * 6);
    for (std::size_t w = 0; w < val.windows.size(); ++w) {
      const Pose6D& gt = val.windows[w].target;
      const Pose6D& pr = est.relative[w];
      for (int k = 0; k < 3; ++k) {
        errors.push_back(pr.translation[static_cast<std::size_t>(k)] - gt.translation[static_cast<std::size_t>(k)]);
        variances.push_back(est.variance[w][static_cast<std::size_t>(k)]);
      }
      for (int k = 0; k < 3; ++k) {
        errors.push_back(wrap_angle(pr.angles[static_cast<std::size_t>(k)] - gt.angles[static_cast<std::size_t>(k)]));
        variances.push_back(est.variance[w][static_cast<std::size_t>(k + 3)]);
      }
    }
    return gaussian_nll(errors, variances);
  });
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr const char* kPosteriorFormat = "vio-posterior";
inline constexpr int kPosteriorVersion = 1;

inline void save_posterior(const std::string& dir, const PosteriorApprox& post) {
  post.validate();
  save_checkpoint(dir + "/theta_map.json", post.theta_map);
  save_checkpoint(dir + "/fisher.json", post.fisher_diag);
  nlohmann::json meta{{"format", kPosteriorFormat},
                      {"version", kPosteriorVersion},
                      {"fisher_multiplier", post.fisher_multiplier},
                      {"tau", post.tau},
                      {"stochastic_prefixes", post.stochastic_prefixes}};
  std::ofstream out(dir + "/meta.json");
  if (!out) throw IoError("cannot write posterior meta: " + dir + "/meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + dir + "/meta.json");
}

inline PosteriorApprox load_posterior(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw IoError("cannot read posterior meta: " + dir + "/meta.json");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("posterior meta is not valid JSON: " + std::string(e.what()));
  }
  if (!meta.is_object() || meta.value("format", "") != kPosteriorFormat)
    throw FormatError("posterior meta: unrecognized format marker");
  if (meta.value("version", -1) != kPosteriorVersion)
    throw FormatError("posterior meta: unsupported version");

  PosteriorApprox post;
  post.fisher_multiplier = meta.value("fisher_multiplier", 0.0);
  post.tau = meta.value("tau", 0.0);
  if (meta.contains("stochastic_prefixes"))
    post.stochastic_prefixes = meta["stochastic_prefixes"].get<std::vector<std::string>>();
  for (const auto& kv : read_checkpoint(dir + "/theta_map.json"))
    post.theta_map.emplace(kv.first, Tensor::from_data(kv.second.first, kv.second.second));
  for (const auto& kv : read_checkpoint(dir + "/fisher.json"))
    post.fisher_diag.emplace(kv.first, Tensor::from_data(kv.second.first, kv.second.second));
  post.validate();
  return post;
}

}  // namespace vio
