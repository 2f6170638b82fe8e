#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "ctrw/error.hpp"
#include "ctrw/geometry.hpp"

namespace ctrw {

// Similarity transform gt ~= s * R * est + t with per-frame position errors.
struct AlignmentResult {
  double s = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  std::vector<double> residuals;
  bool gt_degenerate = false;  // ground-truth centers (near-)collinear; the
                               // rotation about that line is unconstrained
};

// Dense optical flow for one frame, in pixels/frame.
struct FlowField {
  Eigen::ArrayXXf u;
  Eigen::ArrayXXf v;
};

inline FlowField make_flow_field(const Eigen::ArrayXXf& u, const Eigen::ArrayXXf& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw ValidationError("flow field: u/v shape mismatch");
  }
  if (!u.isFinite().all() || !v.isFinite().all()) {
    throw ValidationError("flow field: non-finite entries");
  }
  return FlowField{u, v};
}

// true = dynamic foreground pixel.
struct SegMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
};

// Per-frame feature vectors for one clip (rows = frames, cols = dimension).
struct ClipFeatures {
  Eigen::MatrixXd features;
};

// Closed-form least-squares similarity alignment of an estimated trajectory's
// camera centers onto ground truth: center both sets, take the SVD of the
// cross-covariance for the rotation (with a det correction so no reflection
// is ever returned), and recover the scale from the variance ratio.
inline AlignmentResult align_similarity(const std::vector<Eigen::Vector3d>& est,
                                        const std::vector<Eigen::Vector3d>& gt) {
  if (est.size() != gt.size()) {
    throw ValidationError("align_similarity: length mismatch");
  }
  if (est.size() < 3) {
    throw ValidationError("align_similarity: need at least 3 points");
  }
  const double n = static_cast<double>(est.size());

  Eigen::Vector3d mu_est = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_gt = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    mu_est += est[i];
    mu_gt += gt[i];
  }
  mu_est /= n;
  mu_gt /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d gt_cov = Eigen::Matrix3d::Zero();
  double est_var = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Eigen::Vector3d de = est[i] - mu_est;
    const Eigen::Vector3d dg = gt[i] - mu_gt;
    h += dg * de.transpose();
    gt_cov += dg * dg.transpose();
    est_var += de.squaredNorm();
  }
  if (!(est_var > 0.0)) {
    throw NumericError("align_similarity: zero-variance estimate set");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sign = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Vector3d d(1.0, 1.0, sign);

  AlignmentResult result;
  result.R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  result.s = svd.singularValues().dot(d) / est_var;
  if (!(result.s > 0.0) || !std::isfinite(result.s)) {
    throw NumericError("align_similarity: non-positive scale");
  }
  result.t = mu_gt - result.s * (result.R * mu_est);

  Eigen::JacobiSVD<Eigen::Matrix3d> gt_svd(gt_cov);
  const Eigen::Vector3d gt_sigma = gt_svd.singularValues();
  result.gt_degenerate = !(gt_sigma(1) > 1e-12 * gt_sigma(0));

  result.residuals.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    result.residuals.push_back((gt[i] - (result.s * (result.R * est[i]) + result.t)).norm());
  }
  return result;
}

// Mean aligned position error (scene units).
inline double trans_err(const std::vector<double>& residuals) {
  if (residuals.empty()) throw ValidationError("trans_err: empty residuals");
  double sum = 0.0;
  for (double r : residuals) sum += r;
  return sum / static_cast<double>(residuals.size());
}

// Mean geodesic angle (degrees) between ground-truth orientations and the
// estimated orientations corrected by the alignment rotation. The correction
// composes on the world side (R_est * align_R^T), consistent with re-mapping
// the estimated world frame by the position alignment; pass identity to
// compare raw orientations.
inline double rot_err_deg(const std::vector<Eigen::Matrix3d>& est,
                          const std::vector<Eigen::Matrix3d>& gt,
                          const Eigen::Matrix3d& align_rotation) {
  if (est.size() != gt.size()) throw ValidationError("rot_err: length mismatch");
  if (est.empty()) throw ValidationError("rot_err: empty input");
  const Eigen::Matrix3d correction = align_rotation.transpose();
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    sum += rotation_geodesic_deg(gt[i], est[i] * correction);
  }
  return sum / static_cast<double>(est.size());
}

struct FlowAggregate {
  double value = 0.0;          // mean flow magnitude over selected pixels
  std::size_t pixel_count = 0;
  bool empty = false;          // no selected pixels anywhere; value forced to 0
};

namespace detail {

// Pooled mean of sqrt(u^2+v^2) over pixels whose mask equals `select`.
// With angular_focal_px > 0 each magnitude becomes atan(mag/focal) in
// degrees first. Fixed-order summation keeps results independent of
// scheduling.
inline FlowAggregate masked_flow_mean(const std::vector<FlowField>& flows,
                                      const std::vector<SegMask>& masks,
                                      bool select, double angular_focal_px = 0.0) {
  if (flows.size() != masks.size()) {
    throw ValidationError("flow statistics: flow/mask list length mismatch");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const FlowField& flow = flows[f];
    const auto& mask = masks[f].mask;
    if (flow.u.rows() != flow.v.rows() || flow.u.cols() != flow.v.cols() ||
        flow.u.rows() != mask.rows() || flow.u.cols() != mask.cols()) {
      throw ValidationError("flow statistics: shape mismatch at frame " + std::to_string(f));
    }
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        if (mask(r, c) != select) continue;
        const double u = flow.u(r, c);
        const double v = flow.v(r, c);
        const double mag = std::sqrt(u * u + v * v);
        sum += angular_focal_px > 0.0
                   ? std::atan(mag / angular_focal_px) * 180.0 / std::numbers::pi
                   : mag;
        ++count;
      }
    }
  }
  FlowAggregate agg;
  agg.pixel_count = count;
  agg.empty = count == 0;
  agg.value = count == 0 ? 0.0 : sum / static_cast<double>(count);
  return agg;
}

}  // namespace detail

// Mean flow magnitude over dynamic-foreground pixels across all frames; the
// dynamism proxy. Frames with empty masks contribute no pixels.
inline FlowAggregate motion_strength(const std::vector<FlowField>& flows,
                                     const std::vector<SegMask>& masks) {
  return detail::masked_flow_mean(flows, masks, true);
}

// Angular reporting mode: per-pixel atan(|flow| / focal) in degrees, averaged
// over foreground pixels. Converts pixel displacements into view angles when
// a focal length (pixels) is known.
inline FlowAggregate motion_strength_angular_deg(const std::vector<FlowField>& flows,
                                                 const std::vector<SegMask>& masks,
                                                 double focal_px) {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw ValidationError("motion_strength_angular_deg: focal length must be positive");
  }
  FlowAggregate agg = detail::masked_flow_mean(flows, masks, true, focal_px);
  return agg;
}

// Same statistic over static background pixels; compared against a
// caller-supplied threshold to select videos with real camera movement.
inline FlowAggregate camera_movement_score(const std::vector<FlowField>& flows,
                                           const std::vector<SegMask>& masks) {
  return detail::masked_flow_mean(flows, masks, false);
}

// Percentage of successful outcomes, in [0, 100].
inline double geometric_consistency(const std::vector<bool>& outcomes) {
  if (outcomes.empty()) throw ValidationError("geometric_consistency: empty input");
  std::size_t successes = 0;
  for (bool ok : outcomes) successes += ok ? 1 : 0;
  return 100.0 * static_cast<double>(successes) / static_cast<double>(outcomes.size());
}

// Mean cosine similarity between consecutive clips' video features, where a
// clip's video feature is the mean of its per-frame feature vectors.
inline double appearance_consistency(const std::vector<ClipFeatures>& clips) {
  if (clips.size() < 2) throw ValidationError("appearance_consistency: need >= 2 clips");
  const Eigen::Index dim = clips.front().features.cols();
  std::vector<Eigen::VectorXd> video_features;
  video_features.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Eigen::MatrixXd& f = clips[i].features;
    if (f.rows() < 1 || f.cols() < 1) {
      throw ValidationError("appearance_consistency: empty clip features");
    }
    if (f.cols() != dim) {
      throw ValidationError("appearance_consistency: feature dimension mismatch");
    }
    if (!f.allFinite()) {
      throw ValidationError("appearance_consistency: non-finite features");
    }
    Eigen::VectorXd mean = f.colwise().mean();
    if (!(mean.norm() > 0.0)) {
      throw NumericError("appearance_consistency: zero-norm video feature at clip " +
                         std::to_string(i));
    }
    video_features.push_back(std::move(mean));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < video_features.size(); ++i) {
    const Eigen::VectorXd& a = video_features[i];
    const Eigen::VectorXd& b = video_features[i + 1];
    sum += a.dot(b) / (a.norm() * b.norm());
  }
  return sum / static_cast<double>(video_features.size() - 1);
}

}  // namespace ctrw
