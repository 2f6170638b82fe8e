#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ctrw/error.hpp"
#include "ctrw/geometry.hpp"

namespace ctrw {

// A frame's SfM depth map paired with a metric depth map (meters). validity
// marks pixels where both depths are positive and finite.
struct DepthPair {
  Eigen::ArrayXXf sfm_depth;
  Eigen::ArrayXXf metric_depth;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> validity;
};

inline DepthPair make_depth_pair(const Eigen::ArrayXXf& sfm,
                                 const Eigen::ArrayXXf& metric) {
  if (sfm.rows() != metric.rows() || sfm.cols() != metric.cols()) {
    throw ValidationError("depth pair: shape mismatch");
  }
  DepthPair pair;
  pair.sfm_depth = sfm;
  pair.metric_depth = metric;
  pair.validity.resize(sfm.rows(), sfm.cols());
  for (Eigen::Index c = 0; c < sfm.cols(); ++c) {
    for (Eigen::Index r = 0; r < sfm.rows(); ++r) {
      const float s = sfm(r, c);
      const float m = metric(r, c);
      pair.validity(r, c) = std::isfinite(s) && std::isfinite(m) && s > 0.0f && m > 0.0f;
    }
  }
  return pair;
}

struct RansacParams {
  int iterations = 1024;
  double inlier_threshold_rel = 0.05;  // fraction of metric depth
  double huber_delta = 0.5;            // meters
  double min_inlier_ratio = 0.3;
  std::uint64_t rng_seed = 0;
  int max_pixels = 20000;  // valid pixels are subsampled past this count
};

inline void validate_ransac_params(const RansacParams& p) {
  if (p.iterations < 1) throw ValidationError("ransac: iterations must be >= 1");
  if (!(p.inlier_threshold_rel > 0.0 && p.inlier_threshold_rel < 1.0)) {
    throw ValidationError("ransac: inlier_threshold_rel must be in (0,1)");
  }
  if (!(p.huber_delta > 0.0)) throw ValidationError("ransac: huber_delta must be > 0");
  if (p.max_pixels < 32) throw ValidationError("ransac: max_pixels must be >= 32");
}

struct FrameScale {
  std::int64_t frame_index = 0;
  double s = 0.0;
  int inlier_count = 0;
  double inlier_ratio = 0.0;
};

struct ScaleEstimate {
  std::vector<FrameScale> per_frame;
  double scene_scale = 0.0;  // arithmetic mean of per_frame s
};

// Huber loss: quadratic within |r| <= delta, linear outside; C^1 at the knot.
inline double huber(double r, double delta) {
  if (!(delta > 0.0)) throw ValidationError("huber: delta must be positive");
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

namespace detail {

inline double huber_objective(const std::vector<double>& sfm,
                              const std::vector<double>& metric, double s,
                              double delta) {
  double total = 0.0;
  for (std::size_t i = 0; i < sfm.size(); ++i) {
    const double r = s * sfm[i] - metric[i];
    const double a = std::abs(r);
    const double q = std::min(a, delta);
    total += q * (a - 0.5 * q);
  }
  return total;
}

// 1-D IRLS for min_s sum_i huber(s*S_i - M_i).
inline double refine_scale_irls(const std::vector<double>& sfm,
                                const std::vector<double>& metric, double s0,
                                double delta) {
  double s = s0;
  for (int iter = 0; iter < 200; ++iter) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < sfm.size(); ++i) {
      const double r = s * sfm[i] - metric[i];
      const double a = std::abs(r);
      const double w = a <= delta ? 1.0 : delta / a;
      num += w * sfm[i] * metric[i];
      den += w * sfm[i] * sfm[i];
    }
    if (!(den > 0.0)) break;
    const double next = num / den;
    const bool converged = std::abs(next - s) <= 1e-8 * std::max(1.0, std::abs(next));
    s = next;
    if (converged) break;
  }
  return s;
}

}  // namespace detail

// Per-frame scale between SfM and metric depths, solved with RANSAC over
// 1-point hypotheses s = M(p)/S(p) and refined with IRLS over the consensus
// set. A pixel q is an inlier of s iff |s*S(q) - M(q)| <= thr_rel * M(q).
// Ties on inlier count break toward the smaller Huber objective.
inline FrameScale frame_scale(const DepthPair& pair, const RansacParams& params) {
  validate_ransac_params(params);
  if (pair.sfm_depth.rows() != pair.validity.rows() ||
      pair.sfm_depth.cols() != pair.validity.cols()) {
    throw ValidationError("frame_scale: validity shape mismatch");
  }

  std::vector<double> sfm;
  std::vector<double> metric;
  sfm.reserve(static_cast<std::size_t>(pair.sfm_depth.size()));
  metric.reserve(sfm.capacity());
  for (Eigen::Index c = 0; c < pair.sfm_depth.cols(); ++c) {
    for (Eigen::Index r = 0; r < pair.sfm_depth.rows(); ++r) {
      if (!pair.validity(r, c)) continue;
      sfm.push_back(pair.sfm_depth(r, c));
      metric.push_back(pair.metric_depth(r, c));
    }
  }
  if (sfm.size() < 32) {
    throw ValidationError("frame_scale: fewer than 32 valid pixels (" +
                          std::to_string(sfm.size()) + ")");
  }

  std::mt19937_64 rng(params.rng_seed);
  const std::size_t cap = static_cast<std::size_t>(params.max_pixels);
  if (sfm.size() > cap) {
    std::vector<std::size_t> idx(sfm.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::size_t> picked;
    picked.reserve(cap);
    std::sample(idx.begin(), idx.end(), std::back_inserter(picked), cap, rng);
    std::vector<double> s2, m2;
    s2.reserve(cap);
    m2.reserve(cap);
    for (std::size_t i : picked) {
      s2.push_back(sfm[i]);
      m2.push_back(metric[i]);
    }
    sfm = std::move(s2);
    metric = std::move(m2);
  }

  const std::size_t n = sfm.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  int best_count = -1;
  double best_s = 0.0;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < params.iterations; ++iter) {
    const std::size_t j = pick(rng);
    const double s = metric[j] / sfm[j];
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(s * sfm[i] - metric[i]) <=
          params.inlier_threshold_rel * metric[i]) {
        ++count;
      }
    }
    if (count < best_count) continue;
    const double objective = detail::huber_objective(sfm, metric, s, params.huber_delta);
    if (count > best_count || objective < best_objective) {
      best_count = count;
      best_s = s;
      best_objective = objective;
    }
  }

  const double ratio = static_cast<double>(best_count) / static_cast<double>(n);
  if (ratio < params.min_inlier_ratio) {
    throw NumericError("frame_scale: best inlier ratio " + std::to_string(ratio) +
                       " below minimum " + std::to_string(params.min_inlier_ratio));
  }

  std::vector<double> in_sfm, in_metric;
  in_sfm.reserve(static_cast<std::size_t>(best_count));
  in_metric.reserve(in_sfm.capacity());
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(best_s * sfm[i] - metric[i]) <=
        params.inlier_threshold_rel * metric[i]) {
      in_sfm.push_back(sfm[i]);
      in_metric.push_back(metric[i]);
    }
  }

  FrameScale result;
  result.s = detail::refine_scale_irls(in_sfm, in_metric, best_s, params.huber_delta);
  result.inlier_count = best_count;
  result.inlier_ratio = ratio;
  return result;
}

// Consensus scene scale: arithmetic mean of the per-frame scales.
inline double scene_scale(const std::vector<double>& per_frame) {
  if (per_frame.empty()) throw ValidationError("scene_scale: empty input");
  double sum = 0.0;
  for (double s : per_frame) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ValidationError("scene_scale: scales must be positive and finite");
    }
    sum += s;
  }
  return sum / static_cast<double>(per_frame.size());
}

// Full metric calibration: frame_scale per keyframe (seeded per frame as
// rng_seed + frame_index so keyframes are independent), scene_scale over the
// results, then apply_scale on the trajectory.
inline std::pair<Trajectory, ScaleEstimate> calibrate_trajectory(
    const Trajectory& traj,
    const std::vector<std::pair<std::int64_t, DepthPair>>& keyframe_pairs,
    const RansacParams& params) {
  if (keyframe_pairs.empty()) {
    throw ValidationError("calibrate_trajectory: no keyframe pairs");
  }
  for (const auto& [frame_index, pair] : keyframe_pairs) {
    const bool present =
        std::any_of(traj.frames.begin(), traj.frames.end(),
                    [&](const TrajectoryFrame& f) { return f.frame_index == frame_index; });
    if (!present) {
      throw ValidationError("calibrate_trajectory: keyframe " +
                            std::to_string(frame_index) + " not in trajectory");
    }
  }

  ScaleEstimate estimate;
  std::vector<double> scales;
  for (const auto& [frame_index, pair] : keyframe_pairs) {
    RansacParams per_frame = params;
    per_frame.rng_seed = params.rng_seed + static_cast<std::uint64_t>(frame_index);
    FrameScale fs = frame_scale(pair, per_frame);
    fs.frame_index = frame_index;
    estimate.per_frame.push_back(fs);
    scales.push_back(fs.s);
  }
  estimate.scene_scale = scene_scale(scales);
  return {apply_scale(traj, estimate.scene_scale), estimate};
}

}  // namespace ctrw
