#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ctrw/error.hpp"
#include "ctrw/geometry.hpp"

namespace ctrw {

struct AnalysisParams {
  int n = 6;                               // points per fitted line window
  double gamma_deg = 15.0;                 // keypoint angle threshold
  double view_change_threshold_deg = 20.0; // accumulated-rotation step per view change
};

inline void validate_analysis_params(const AnalysisParams& p) {
  if (p.n < 2) throw ValidationError("analysis: n must be >= 2");
  if (!(p.gamma_deg > 0.0 && p.gamma_deg < 180.0)) {
    throw ValidationError("analysis: gamma must be in (0, 180)");
  }
  if (!(p.view_change_threshold_deg > 0.0)) {
    throw ValidationError("analysis: view_change_threshold must be > 0");
  }
}

// Camera axes: +x right, +y down, +z forward (viewing direction).
inline constexpr int kNumDirectionBins = 6;
inline constexpr int kNumTurnBins = 5;
inline constexpr double kMinTurnAngleDeg = 15.0;

inline constexpr std::array<const char*, kNumDirectionBins> kDirectionBinLabels = {
    "forward", "backward", "left", "right", "up", "down"};
inline constexpr std::array<const char*, kNumTurnBins> kTurnBinLabels = {
    "none", "left", "right", "up", "down"};

struct TrajectorySegment {
  int start_idx = 0;
  int end_idx = 0;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // oriented along travel
  double arc_length = 0.0;
  int view_change_count = 0;
  bool degenerate = false;  // zero-motion segment; direction inherited
};

struct TrajectoryProfile {
  std::vector<int> keypoints;
  std::vector<TrajectorySegment> segments;
  int primary_segment = 0;
  int direction_bin = 0;
  int turn_bin = 0;
  double importance = 0.0;
  int category = 0;  // direction_bin * kNumTurnBins + turn_bin
};

struct LineFit {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
};

// Total-least-squares line through 3-D points: centroid plus the principal
// eigenvector of the centered covariance, sign-oriented so that
// direction . (last - first) >= 0.
inline LineFit fit_line(const std::vector<Eigen::Vector3d>& points) {
  if (points.size() < 2) throw ValidationError("fit_line: need at least 2 points");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const Eigen::Vector3d& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Eigen::Vector3d& p : points) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  if (!(cov.trace() > 0.0)) {
    throw NumericError("fit_line: degenerate (all points equal)");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d dir = eig.eigenvectors().col(2);  // largest eigenvalue
  dir.normalize();
  if (dir.dot(points.back() - points.front()) < 0.0) dir = -dir;
  return LineFit{centroid, dir};
}

namespace detail {

inline double angle_between_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline std::vector<Eigen::Vector3d> camera_centers(const Trajectory& traj) {
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(traj.frames.size());
  for (const TrajectoryFrame& f : traj.frames) centers.push_back(camera_center(f.pose));
  return centers;
}

}  // namespace detail

// Marks frame positions where the travel direction bends: windows of the n
// preceding and n following points are each fitted with a line, and the
// position is above threshold when the two directions differ by more than
// gamma. Contiguous above-threshold runs collapse to the single position of
// maximal angle, so one corner yields one keypoint.
inline std::vector<int> detect_keypoints(const Trajectory& traj,
                                         const AnalysisParams& params) {
  validate_analysis_params(params);
  const int len = static_cast<int>(traj.frames.size());
  const int n = params.n;
  if (len < 2 * n + 1) return {};

  const std::vector<Eigen::Vector3d> centers = detail::camera_centers(traj);
  std::vector<double> angle(static_cast<std::size_t>(len), 0.0);
  for (int i = n; i <= len - 1 - n; ++i) {
    std::vector<Eigen::Vector3d> before(centers.begin() + (i - n), centers.begin() + i + 1);
    std::vector<Eigen::Vector3d> after(centers.begin() + i, centers.begin() + i + n + 1);
    try {
      const LineFit left = fit_line(before);
      const LineFit right = fit_line(after);
      angle[static_cast<std::size_t>(i)] =
          detail::angle_between_deg(left.direction, right.direction);
    } catch (const NumericError&) {
      // zero-motion window: no bend
      angle[static_cast<std::size_t>(i)] = 0.0;
    }
  }

  std::vector<int> keypoints;
  int run_start = -1;
  for (int i = n; i <= len - n; ++i) {
    const bool above = i <= len - 1 - n && angle[static_cast<std::size_t>(i)] > params.gamma_deg;
    if (above && run_start < 0) run_start = i;
    if (!above && run_start >= 0) {
      int best = run_start;
      for (int j = run_start + 1; j < i; ++j) {
        if (angle[static_cast<std::size_t>(j)] > angle[static_cast<std::size_t>(best)]) best = j;
      }
      keypoints.push_back(best);
      run_start = -1;
    }
  }
  return keypoints;
}

// Splits the trajectory at the keypoints. Segment directions come from the
// fitted line over the segment's camera centers; zero-motion segments inherit
// the previous segment's direction (+z if first) and are flagged degenerate.
// view_change_count counts how many multiples of the view-change threshold
// the accumulated frame-to-frame rotation crosses within the segment.
inline std::vector<TrajectorySegment> segment_trajectory(
    const Trajectory& traj, const std::vector<int>& keypoints,
    double view_change_threshold_deg = AnalysisParams{}.view_change_threshold_deg) {
  const int len = static_cast<int>(traj.frames.size());
  if (len < 2) throw ValidationError("segment_trajectory: need at least 2 frames");
  if (!(view_change_threshold_deg > 0.0)) {
    throw ValidationError("segment_trajectory: view_change_threshold must be > 0");
  }

  std::vector<int> bounds;
  bounds.push_back(0);
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const int k = keypoints[i];
    if (k <= 0 || k >= len - 1) {
      throw ValidationError("segment_trajectory: keypoint outside (0, len-1)");
    }
    if (i > 0 && k <= keypoints[i - 1]) {
      throw ValidationError("segment_trajectory: keypoints not strictly increasing");
    }
    bounds.push_back(k);
  }
  bounds.push_back(len - 1);

  const std::vector<Eigen::Vector3d> centers = detail::camera_centers(traj);
  std::vector<TrajectorySegment> segments;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    TrajectorySegment seg;
    seg.start_idx = bounds[b];
    seg.end_idx = bounds[b + 1];

    double arc = 0.0;
    for (int k = seg.start_idx; k < seg.end_idx; ++k) {
      arc += (centers[static_cast<std::size_t>(k + 1)] -
              centers[static_cast<std::size_t>(k)]).norm();
    }
    seg.arc_length = arc;

    std::vector<Eigen::Vector3d> pts(centers.begin() + seg.start_idx,
                                     centers.begin() + seg.end_idx + 1);
    try {
      seg.direction = fit_line(pts).direction;
    } catch (const NumericError&) {
      seg.degenerate = true;
      seg.direction = segments.empty() ? Eigen::Vector3d::UnitZ()
                                       : segments.back().direction;
    }

    double accumulated = 0.0;
    for (int k = seg.start_idx; k < seg.end_idx; ++k) {
      accumulated += rotation_geodesic_deg(
          traj.frames[static_cast<std::size_t>(k)].pose.R,
          traj.frames[static_cast<std::size_t>(k + 1)].pose.R);
    }
    seg.view_change_count =
        static_cast<int>(std::floor(accumulated / view_change_threshold_deg));
    segments.push_back(seg);
  }
  return segments;
}

namespace detail {

// Dominant-axis sector of a direction expressed in camera coordinates.
inline int direction_bin_of(const Eigen::Vector3d& d_cam) {
  const double ax = std::abs(d_cam.x());
  const double ay = std::abs(d_cam.y());
  const double az = std::abs(d_cam.z());
  if (az >= ax && az >= ay) return d_cam.z() >= 0.0 ? 0 : 1;  // forward / backward
  if (ax >= ay) return d_cam.x() < 0.0 ? 2 : 3;               // left / right
  return d_cam.y() < 0.0 ? 4 : 5;                             // up / down
}

// Lateral component of the turn from d1 to d2, binned to left/right/up/down.
// A turn with no lateral component (straight reversal) falls to "left" by the
// fixed tie order.
inline int turn_bin_of(const Eigen::Vector3d& d1_cam, const Eigen::Vector3d& d2_cam) {
  const Eigen::Vector3d perp = d2_cam - d2_cam.dot(d1_cam) * d1_cam;
  const std::array<double, 4> score = {-perp.x(), perp.x(), -perp.y(), perp.y()};
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (score[static_cast<std::size_t>(i)] > score[static_cast<std::size_t>(best)]) best = i;
  }
  return 1 + best;  // bins: 1 left, 2 right, 3 up, 4 down
}

}  // namespace detail

// Full profile of one trajectory: keypoints, segments, the primary (longest)
// segment's direction bin in first-frame camera coordinates, the main-turn
// bin from the primary segment to its successor, and an importance weight
// that sums all adjacent-segment turn magnitudes plus the view-change count
// weighted onto the same degree scale.
inline TrajectoryProfile classify_trajectory(const Trajectory& traj,
                                             const AnalysisParams& params) {
  validate_analysis_params(params);
  if (traj.frames.size() < 2) {
    throw ValidationError("classify_trajectory: need at least 2 frames");
  }

  TrajectoryProfile profile;
  profile.keypoints = detect_keypoints(traj, params);
  profile.segments =
      segment_trajectory(traj, profile.keypoints, params.view_change_threshold_deg);

  int primary = 0;
  for (std::size_t i = 1; i < profile.segments.size(); ++i) {
    if (profile.segments[i].arc_length > profile.segments[static_cast<std::size_t>(primary)].arc_length) {
      primary = static_cast<int>(i);
    }
  }
  profile.primary_segment = primary;

  const Eigen::Matrix3d& r_first = traj.frames.front().pose.R;
  const Eigen::Vector3d primary_cam =
      r_first * profile.segments[static_cast<std::size_t>(primary)].direction;
  profile.direction_bin = detail::direction_bin_of(primary_cam);

  profile.turn_bin = 0;
  if (static_cast<std::size_t>(primary) + 1 < profile.segments.size()) {
    const Eigen::Vector3d next_cam =
        r_first * profile.segments[static_cast<std::size_t>(primary) + 1].direction;
    if (detail::angle_between_deg(primary_cam, next_cam) >= kMinTurnAngleDeg) {
      profile.turn_bin = detail::turn_bin_of(primary_cam.normalized(), next_cam.normalized());
    }
  }

  double importance = 0.0;
  for (std::size_t i = 0; i + 1 < profile.segments.size(); ++i) {
    importance += detail::angle_between_deg(profile.segments[i].direction,
                                            profile.segments[i + 1].direction);
  }
  for (const TrajectorySegment& seg : profile.segments) {
    importance += params.view_change_threshold_deg * seg.view_change_count;
  }
  profile.importance = importance;
  profile.category = profile.direction_bin * kNumTurnBins + profile.turn_bin;
  return profile;
}

struct BalanceResult {
  std::vector<std::size_t> keep;
  std::vector<std::size_t> drop;
  int cap = 0;
  std::map<int, int> category_counts;  // counts before pruning
};

// Caps every category at `cap` trajectories by dropping the lowest-importance
// members (ties: lower index dropped first). cap = nullopt means "auto": the
// lower median of the per-category counts, floored at 1.
inline BalanceResult balance_dataset(const std::vector<TrajectoryProfile>& profiles,
                                     std::optional<int> cap = std::nullopt) {
  if (profiles.empty()) throw ValidationError("balance_dataset: empty input");
  if (cap.has_value() && *cap < 1) {
    throw ValidationError("balance_dataset: cap must be >= 1");
  }

  std::map<int, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    by_category[profiles[i].category].push_back(i);
  }

  BalanceResult result;
  for (const auto& [category, members] : by_category) {
    result.category_counts[category] = static_cast<int>(members.size());
  }

  if (cap.has_value()) {
    result.cap = *cap;
  } else {
    std::vector<int> counts;
    counts.reserve(by_category.size());
    for (const auto& [category, members] : by_category) {
      counts.push_back(static_cast<int>(members.size()));
    }
    std::sort(counts.begin(), counts.end());
    result.cap = std::max(1, counts[(counts.size() - 1) / 2]);  // lower median
  }

  for (const auto& [category, members] : by_category) {
    if (static_cast<int>(members.size()) <= result.cap) {
      result.keep.insert(result.keep.end(), members.begin(), members.end());
      continue;
    }
    std::vector<std::size_t> order = members;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (profiles[a].importance != profiles[b].importance) {
        return profiles[a].importance < profiles[b].importance;
      }
      return a < b;
    });
    const std::size_t n_drop = order.size() - static_cast<std::size_t>(result.cap);
    result.drop.insert(result.drop.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_drop));
    result.keep.insert(result.keep.end(), order.begin() + static_cast<std::ptrdiff_t>(n_drop), order.end());
  }

  std::sort(result.keep.begin(), result.keep.end());
  std::sort(result.drop.begin(), result.drop.end());
  return result;
}

}  // namespace ctrw
