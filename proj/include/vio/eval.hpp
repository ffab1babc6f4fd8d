#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vio/dataset.hpp"
#include "vio/geometry.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct TrajectoryEstimate {
  std::vector<RigidTransform> poses;              // absolute, one per frame
  std::vector<Pose6D> relative;                   // one per window (poses.size()-1)
  std::vector<std::array<double, 6>> variance;    // optional, aligned with relative

  bool has_variance() const { return !variance.empty(); }
};

struct LengthBucket {
  double length = 0.0;          // sub-sequence length in meters
  int count = 0;                // (anchor, endpoint) pairs found
  double t_rmse_percent = 0.0;
  double r_rmse_deg_per_100m = 0.0;
};

// Average translational RMSE (percent) and rotational RMSE (degrees per
// 100 m) over sub-sequences of 100..800 m, KITTI-style. Lengths with no valid
// sub-sequence are omitted from the averages.
struct MetricReport {
  double t_rel = 0.0;
  double r_rel = 0.0;
  std::vector<LengthBucket> buckets;

  bool empty() const { return buckets.empty(); }
};

inline const std::array<double, 8>& metric_lengths() {
  static const std::array<double, 8> lengths{100, 200, 300, 400, 500, 600, 700, 800};
  return lengths;
}

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

// For every anchor frame and every length L, the endpoint is the first frame
// whose ground-truth path distance from the anchor reaches L. The error span
// compares predicted against ground-truth relative motion over that span;
// translation error is normalized by the nominal L (percent), rotation error
// by L/100 (degrees per 100 m). Buckets aggregate by RMSE, the headline
// numbers average the buckets.
inline MetricReport evaluate(const TrajectoryEstimate& pred, const TrajectoryEstimate& gt) {
  if (pred.poses.size() != gt.poses.size())
    throw ContractError("evaluate: pose counts disagree: " + std::to_string(pred.poses.size()) +
                        " vs " + std::to_string(gt.poses.size()));
  int n = static_cast<int>(gt.poses.size());
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int i = 1; i < n; ++i) {
    double dx = gt.poses[static_cast<std::size_t>(i)].t[0] - gt.poses[static_cast<std::size_t>(i - 1)].t[0];
    double dy = gt.poses[static_cast<std::size_t>(i)].t[1] - gt.poses[static_cast<std::size_t>(i - 1)].t[1];
    double dz = gt.poses[static_cast<std::size_t>(i)].t[2] - gt.poses[static_cast<std::size_t>(i - 1)].t[2];
    dist[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i - 1)] + std::sqrt(dx * dx + dy * dy + dz * dz);
  }

  MetricReport report;
  double t_sum = 0.0, r_sum = 0.0;
  for (double length : metric_lengths()) {
    double t_sq = 0.0, r_sq = 0.0;
    int count = 0;
    int j = 0;
    for (int a = 0; a < n; ++a) {
      if (j < a) j = a;
      while (j < n && dist[static_cast<std::size_t>(j)] - dist[static_cast<std::size_t>(a)] < length) ++j;
      if (j >= n) break;
      RigidTransform rel_gt = compose(inverse(gt.poses[static_cast<std::size_t>(a)]), gt.poses[static_cast<std::size_t>(j)]);
      RigidTransform rel_pred =
          compose(inverse(pred.poses[static_cast<std::size_t>(a)]), pred.poses[static_cast<std::size_t>(j)]);
      RigidTransform err = compose(inverse(rel_gt), rel_pred);
      double t_err = std::sqrt(err.t[0] * err.t[0] + err.t[1] * err.t[1] + err.t[2] * err.t[2]);
      double r_err = rotation_angle(err.r) * 180.0 / kPi;
      double t_pct = 100.0 * t_err / length;
      double r_per100 = r_err / (length / 100.0);
      t_sq += t_pct * t_pct;
      r_sq += r_per100 * r_per100;
      ++count;
    }
    if (count > 0) {
      LengthBucket b;
      b.length = length;
      b.count = count;
      b.t_rmse_percent = std::sqrt(t_sq / count);
      b.r_rmse_deg_per_100m = std::sqrt(r_sq / count);
      t_sum += b.t_rmse_percent;
      r_sum += b.r_rmse_deg_per_100m;
      report.buckets.push_back(b);
    }
  }
  if (!report.buckets.empty()) {
    report.t_rel = t_sum / static_cast<double>(report.buckets.size());
    report.r_rel = r_sum / static_cast<double>(report.buckets.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Uncertainty-error correlation
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  int n = static_cast<int>(v.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)]; });
  std::vector<double> ranks(static_cast<std::size_t>(n));
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])] == v[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) ++j;
    double r = 0.5 * (i + j) + 1.0;  // average rank, 1-based
    for (int k = i; k <= j; ++k) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Spearman rank correlation. Returns 0 and sets `degenerate` when either
// input is constant (no ranking information).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b,
                       bool* degenerate = nullptr) {
  if (a.size() != b.size() || a.size() < 2)
    throw ContractError("spearman: need two equal-length series of at least 2 points");
  if (degenerate) *degenerate = false;
  std::vector<double> ra = detail::average_ranks(a);
  std::vector<double> rb = detail::average_ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return num / std::sqrt(da * db);
}

struct UncertaintyBin {
  double error_lo = 0.0, error_hi = 0.0;
  double sigma_min = 0.0, sigma_q25 = 0.0, sigma_median = 0.0, sigma_q75 = 0.0, sigma_max = 0.0;
  int count = 0;
};

struct ComponentCorrelation {
  double spearman_rho = 0.0;
  bool degenerate = false;
  std::vector<UncertaintyBin> bins;
};

struct UncertaintyReport {
  std::array<ComponentCorrelation, 6> components;  // tx ty tz yaw pitch roll
  double mean_spearman = 0.0;
};

inline const std::array<const char*, 6>& pose_component_names() {
  static const std::array<const char*, 6> names{"tx", "ty", "tz", "yaw", "pitch", "roll"};
  return names;
}

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Per pose component: Spearman rank correlation between per-window absolute
// error and predicted sigma, plus box-plot data over error-quantile bins.
// Angle errors are wrapped before taking magnitudes.
inline UncertaintyReport summarize_uncertainty(const TrajectoryEstimate& pred,
                                               const TrajectoryEstimate& gt, int num_bins = 5) {
  if (!pred.has_variance())
    throw ContractError("summarize_uncertainty: estimate carries no variance");
  if (pred.relative.size() != gt.relative.size() || pred.relative.size() < 2)
    throw ContractError("summarize_uncertainty: need matching relative-pose series");
  if (pred.variance.size() != pred.relative.size())
    throw ContractError("summarize_uncertainty: variance misaligned with poses");

  UncertaintyReport report;
  int n = static_cast<int>(pred.relative.size());
  double rho_sum = 0.0;
  for (int c = 0; c < 6; ++c) {
    std::vector<double> err(static_cast<std::size_t>(n)), sig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Pose6D& p = pred.relative[static_cast<std::size_t>(i)];
      const Pose6D& g = gt.relative[static_cast<std::size_t>(i)];
      double e = c < 3 ? p.translation[static_cast<std::size_t>(c)] - g.translation[static_cast<std::size_t>(c)]
                       : wrap_angle(p.angles[static_cast<std::size_t>(c - 3)] - g.angles[static_cast<std::size_t>(c - 3)]);
      err[static_cast<std::size_t>(i)] = std::abs(e);
      sig[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, pred.variance[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]));
    }
    ComponentCorrelation& cc = report.components[static_cast<std::size_t>(c)];
    cc.spearman_rho = spearman(err, sig, &cc.degenerate);
    rho_sum += cc.spearman_rho;

    // Error-quantile bins with sigma distribution summaries.
    std::vector<double> sorted_err = err;
    std::sort(sorted_err.begin(), sorted_err.end());
    for (int b = 0; b < num_bins; ++b) {
      double lo = detail::quantile_sorted(sorted_err, static_cast<double>(b) / num_bins);
      double hi = detail::quantile_sorted(sorted_err, static_cast<double>(b + 1) / num_bins);
      std::vector<double> in_bin;
      for (int i = 0; i < n; ++i) {
        bool last = b == num_bins - 1;
        if (err[static_cast<std::size_t>(i)] >= lo && (err[static_cast<std::size_t>(i)] < hi || (last && err[static_cast<std::size_t>(i)] <= hi)))
          in_bin.push_back(sig[static_cast<std::size_t>(i)]);
      }
      std::sort(in_bin.begin(), in_bin.end());
      UncertaintyBin bin;
      bin.error_lo = lo;
      bin.error_hi = hi;
      bin.count = static_cast<int>(in_bin.size());
      if (!in_bin.empty()) {
        bin.sigma_min = in_bin.front();
        bin.sigma_q25 = detail::quantile_sorted(in_bin, 0.25);
        bin.sigma_median = detail::quantile_sorted(in_bin, 0.5);
        bin.sigma_q75 = detail::quantile_sorted(in_bin, 0.75);
        bin.sigma_max = in_bin.back();
      }
      cc.bins.push_back(bin);
    }
  }
  report.mean_spearman = rho_sum / 6.0;
  return report;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

inline nlohmann::json metric_report_json(const MetricReport& report) {
  nlohmann::json j;
  j["t_rel_percent"] = report.t_rel;
  j["r_rel_deg_per_100m"] = report.r_rel;
  nlohmann::json buckets = nlohmann::json::array();
  for (const LengthBucket& b : report.buckets)
    buckets.push_back({{"length_m", b.length},
                       {"count", b.count},
                       {"t_rmse_percent", b.t_rmse_percent},
                       {"r_rmse_deg_per_100m", b.r_rmse_deg_per_100m}});
  j["buckets"] = std::move(buckets);
  return j;
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.t_rel = j.at("t_rel_percent").get<double>();
  r.r_rel = j.at("r_rel_deg_per_100m").get<double>();
  for (const auto& b : j.at("buckets")) {
    LengthBucket lb;
    lb.length = b.at("length_m").get<double>();
    lb.count = b.at("count").get<int>();
    lb.t_rmse_percent = b.at("t_rmse_percent").get<double>();
    lb.r_rmse_deg_per_100m = b.at("r_rmse_deg_per_100m").get<double>();
    r.buckets.push_back(lb);
  }
  return r;
}

// format: "json" or "csv". The CSV schema is
// length_m,count,t_rmse_percent,r_rmse_deg_per_100m with a trailing summary
// row (length_m = "mean"); an empty report emits headers only.
inline void export_report(const MetricReport& report, const std::string& path,
                          const std::string& format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  if (format == "json") {
    out << metric_report_json(report).dump(2) << '\n';
  } else if (format == "csv") {
    out << "length_m,count,t_rmse_percent,r_rmse_deg_per_100m\n";
    for (const LengthBucket& b : report.buckets)
      out << b.length << ',' << b.count << ',' << detail::fmt_double(b.t_rmse_percent) << ','
          << detail::fmt_double(b.r_rmse_deg_per_100m) << '\n';
    if (!report.empty())
      out << "mean," << 0 << ',' << detail::fmt_double(report.t_rel) << ','
          << detail::fmt_double(report.r_rel) << '\n';
  } else {
    throw ConfigError("export_report: unknown format '" + format + "'");
  }
  if (!out) throw IoError("write failed: " + path);
}

// Plot-ready series: per frame the predicted and ground-truth planar path,
// with the predicted per-window translation sigma (sqrt of summed translation
// variance) attached to each window's end frame when present.
// Schema: frame,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z[,sigma_t]
inline void export_trajectory_csv(const std::string& path, const TrajectoryEstimate& pred,
                                  const TrajectoryEstimate& gt) {
  if (pred.poses.size() != gt.poses.size())
    throw ContractError("export_trajectory_csv: pose counts disagree");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory csv: " + path);
  bool with_sigma = pred.has_variance();
  out << "frame,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z";
  if (with_sigma) out << ",sigma_t";
  out << '\n';
  for (std::size_t i = 0; i < pred.poses.size(); ++i) {
    out << i;
    for (int k = 0; k < 3; ++k) out << ',' << detail::fmt_double(pred.poses[i].t[static_cast<std::size_t>(k)]);
    for (int k = 0; k < 3; ++k) out << ',' << detail::fmt_double(gt.poses[i].t[static_cast<std::size_t>(k)]);
    if (with_sigma) {
      double s2 = 0.0;
      if (i > 0 && i - 1 < pred.variance.size())
        s2 = pred.variance[i - 1][0] + pred.variance[i - 1][1] + pred.variance[i - 1][2];
      out << ',' << detail::fmt_double(std::sqrt(std::max(0.0, s2)));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Schema: component,bin,error_lo,error_hi,sigma_min,sigma_q25,sigma_median,
// sigma_q75,sigma_max,count
inline void export_uncertainty_bins_csv(const std::string& path, const UncertaintyReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bins csv: " + path);
  out << "component,bin,error_lo,error_hi,sigma_min,sigma_q25,sigma_median,sigma_q75,sigma_max,count\n";
  for (int c = 0; c < 6; ++c) {
    const ComponentCorrelation& cc = report.components[static_cast<std::size_t>(c)];
    for (std::size_t b = 0; b < cc.bins.size(); ++b) {
      const UncertaintyBin& bin = cc.bins[b];
      out << pose_component_names()[static_cast<std::size_t>(c)] << ',' << b << ','
          << detail::fmt_double(bin.error_lo) << ',' << detail::fmt_double(bin.error_hi) << ','
          << detail::fmt_double(bin.sigma_min) << ',' << detail::fmt_double(bin.sigma_q25) << ','
          << detail::fmt_double(bin.sigma_median) << ',' << detail::fmt_double(bin.sigma_q75) << ','
          << detail::fmt_double(bin.sigma_max) << ',' << bin.count << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace vio
