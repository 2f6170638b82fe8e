#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ctrw/error.hpp"

namespace ctrw {

// Pinhole intrinsics in pixels, relative to (width, height).
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

inline void validate_intrinsics(const CameraIntrinsics& k) {
  if (!(std::isfinite(k.fx) && std::isfinite(k.fy) && std::isfinite(k.cx) &&
        std::isfinite(k.cy))) {
    throw ValidationError("intrinsics: non-finite value");
  }
  if (k.width < 1 || k.height < 1) {
    throw ValidationError("intrinsics: width and height must be >= 1");
  }
  if (k.fx <= 0.0 || k.fy <= 0.0) {
    throw ValidationError("intrinsics: focal lengths must be positive");
  }
  if (!(k.cx > 0.0 && k.cx < k.width) || !(k.cy > 0.0 && k.cy < k.height)) {
    throw ValidationError("intrinsics: principal point outside image");
  }
}

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

inline constexpr double kRotationTolerance = 1e-6;
inline constexpr double kRotationRepairTolerance = 1e-3;

inline double orthonormality_error(const Eigen::Matrix3d& R) {
  return (R.transpose() * R - Eigen::Matrix3d::Identity())
      .cwiseAbs()
      .maxCoeff();
}

// Nearest rotation in Frobenius norm, with det(+1) enforced.
inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0);
  return u * d.asDiagonal() * v.transpose();
}

// Builds a validated pose. SfM rotations carry float noise, so inputs within
// 1e-3 of orthonormal are projected to the nearest rotation; anything worse
// (including reflections) is rejected.
inline Pose make_pose(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  if (!R.allFinite() || !t.allFinite()) {
    throw ValidationError("pose: non-finite entries");
  }
  const double err = orthonormality_error(R);
  const double det = R.determinant();
  if (err <= kRotationTolerance && std::abs(det - 1.0) <= kRotationTolerance) {
    return Pose{R, t};
  }
  if (err <= kRotationRepairTolerance &&
      std::abs(det - 1.0) <= kRotationRepairTolerance) {
    return Pose{nearest_rotation(R), t};
  }
  throw ValidationError("pose: matrix is not a rotation (orthonormality error " +
                        std::to_string(err) + ", det " + std::to_string(det) + ")");
}

inline bool pose_valid(const Pose& p) {
  return p.R.allFinite() && p.t.allFinite() &&
         orthonormality_error(p.R) <= kRotationTolerance &&
         std::abs(p.R.determinant() - 1.0) <= kRotationTolerance;
}

struct TrajectoryFrame {
  std::int64_t frame_index = 0;
  CameraIntrinsics intrinsics;
  Pose pose;
};

// Ordered per-frame camera records; the universal currency of the toolkit.
// frame_index is strictly increasing. scale_calibrated marks translations as
// metric (set by apply_scale).
struct Trajectory {
  std::vector<TrajectoryFrame> frames;
  bool scale_calibrated = false;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
};

inline void validate_trajectory(const Trajectory& traj) {
  if (traj.frames.empty()) throw ValidationError("trajectory: empty");
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const TrajectoryFrame& f = traj.frames[i];
    if (i > 0 && f.frame_index <= traj.frames[i - 1].frame_index) {
      throw ValidationError("trajectory: frame_index not strictly increasing");
    }
    validate_intrinsics(f.intrinsics);
    if (!pose_valid(f.pose)) {
      throw ValidationError("trajectory: invalid pose at position " +
                            std::to_string(i));
    }
  }
}

// Camera center in world space: o = -R^T t.
inline Eigen::Vector3d camera_center(const Pose& pose) {
  return -(pose.R.transpose() * pose.t);
}

// Per-pixel 6-channel ray grid: channels 0-2 hold the moment o x d',
// channels 3-5 the unit ray direction d'.
struct PluckerMap {
  int h = 0;
  int w = 0;
  std::vector<double> data;  // h*w*6, row-major, channel-fastest

  double* at(int y, int x) { return data.data() + 6 * (static_cast<std::size_t>(y) * w + x); }
  const double* at(int y, int x) const {
    return data.data() + 6 * (static_cast<std::size_t>(y) * w + x);
  }
  Eigen::Vector3d moment(int y, int x) const {
    const double* p = at(y, x);
    return {p[0], p[1], p[2]};
  }
  Eigen::Vector3d direction(int y, int x) const {
    const double* p = at(y, x);
    return {p[3], p[4], p[5]};
  }
};

// How the per-pixel ray direction is formed before normalization.
//   Geometric:    d = R^T K^-1 [u v 1]^T          (true ray direction)
//   PointOffset:  d = R^T K^-1 [u v 1]^T + o      (direction plus camera
//                 center, kept for comparison against sources that fold the
//                 translation into d)
enum class RayMode { Geometric, PointOffset };

// Plucker embedding grid for one frame. (h, w) are the target grid sizes
// (callers pass the latent feature resolution); intrinsics are rescaled by
// w/width and h/height so the ray geometry is preserved. Pixels are sampled
// at half-pixel centers (u = x + 0.5, v = y + 0.5).
inline PluckerMap plucker_map(const CameraIntrinsics& intr, const Pose& pose,
                              int h, int w,
                              RayMode mode = RayMode::Geometric) {
  if (h < 1 || w < 1) throw ValidationError("plucker_map: h and w must be >= 1");
  validate_intrinsics(intr);
  if (!pose_valid(pose)) throw ValidationError("plucker_map: invalid pose");

  const double sx = static_cast<double>(w) / intr.width;
  const double sy = static_cast<double>(h) / intr.height;
  const double fx = intr.fx * sx;
  const double fy = intr.fy * sy;
  const double cx = intr.cx * sx;
  const double cy = intr.cy * sy;

  const Eigen::Matrix3d r_c2w = pose.R.transpose();
  const Eigen::Vector3d o = camera_center(pose);

  PluckerMap map;
  map.h = h;
  map.w = w;
  map.data.resize(static_cast<std::size_t>(h) * w * 6);
  for (int y = 0; y < h; ++y) {
    const double v = y + 0.5;
    for (int x = 0; x < w; ++x) {
      const double u = x + 0.5;
      Eigen::Vector3d ray_cam((u - cx) / fx, (v - cy) / fy, 1.0);
      Eigen::Vector3d d = r_c2w * ray_cam;
      if (mode == RayMode::PointOffset) d += o;
      const double n = d.norm();
      if (!(n > 0.0) || !std::isfinite(n)) {
        throw NumericError("plucker_map: degenerate ray direction");
      }
      d /= n;
      const Eigen::Vector3d m = o.cross(d);
      double* out = map.at(y, x);
      out[0] = m.x();
      out[1] = m.y();
      out[2] = m.z();
      out[3] = d.x();
      out[4] = d.y();
      out[5] = d.z();
    }
  }
  return map;
}

// Re-expresses every pose relative to `ref`, so that `ref` itself maps to the
// identity. Used with the first frame of the initial clip as the global
// reference across clip extensions.
inline Trajectory rebase_trajectory(const Trajectory& traj, const Pose& ref) {
  if (!pose_valid(ref)) throw ValidationError("rebase_trajectory: invalid ref");
  const Eigen::Matrix3d r_ref_t = ref.R.transpose();
  Trajectory out = traj;
  for (TrajectoryFrame& f : out.frames) {
    const Eigen::Matrix3d r_new = f.pose.R * r_ref_t;
    f.pose.t = f.pose.t - r_new * ref.t;
    f.pose.R = r_new;
  }
  return out;
}

// Keeps frames at positions 0, stride, 2*stride, ... (frame_index preserved).
inline Trajectory downsample_trajectory(const Trajectory& traj, int stride) {
  if (stride < 1) throw ValidationError("downsample_trajectory: stride must be >= 1");
  Trajectory out;
  out.scale_calibrated = traj.scale_calibrated;
  for (std::size_t i = 0; i < traj.frames.size(); i += static_cast<std::size_t>(stride)) {
    out.frames.push_back(traj.frames[i]);
  }
  return out;
}

// Multiplies every translation by s (rotations untouched) and marks the
// trajectory as metric.
inline Trajectory apply_scale(const Trajectory& traj, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw ValidationError("apply_scale: scale must be positive and finite");
  }
  Trajectory out = traj;
  for (TrajectoryFrame& f : out.frames) f.pose.t *= s;
  out.scale_calibrated = true;
  return out;
}

// Geodesic distance on SO(3) in degrees, range [0, 180]. Evaluated as
// atan2(|skew(R1 R2^T)|/2, (trace - 1)/2) rather than through acos: the acos
// form loses ~1e-6 degrees of resolution near zero angle, which is above the
// tolerance this toolkit has to certify.
inline double rotation_geodesic_deg(const Eigen::Matrix3d& r1,
                                    const Eigen::Matrix3d& r2) {
  const Eigen::Matrix3d rel = r1 * r2.transpose();
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0),
                             rel(1, 0) - rel(0, 1));
  const double sin_theta = 0.5 * axis.norm();
  const double cos_theta = 0.5 * (rel.trace() - 1.0);
  return std::atan2(sin_theta, cos_theta) * 180.0 / std::numbers::pi;
}

}  // namespace ctrw
