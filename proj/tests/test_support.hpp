#pragma once

// Shared fixtures and independent oracles for the test suites. Everything is
// seeded; no test depends on global RNG state.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "ctrw/ctrw.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline Eigen::Matrix3d rot_z_deg(double deg) {
  return Eigen::AngleAxisd(deg * M_PI / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

inline Eigen::Matrix3d rot_axis_deg(const Eigen::Vector3d& axis, double deg) {
  return Eigen::AngleAxisd(deg * M_PI / 180.0, axis.normalized()).toRotationMatrix();
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  while (true) {
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    if (q.norm() > 1e-6) {
      q.normalize();
      return q.toRotationMatrix();
    }
  }
}

inline Eigen::Vector3d random_vector(std::mt19937_64& rng, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline ctrw::Pose random_pose(std::mt19937_64& rng) {
  return ctrw::Pose{random_rotation(rng), random_vector(rng)};
}

inline ctrw::CameraIntrinsics default_intrinsics() {
  ctrw::CameraIntrinsics k;
  k.fx = 50.0;
  k.fy = 50.0;
  k.cx = 32.0;
  k.cy = 24.0;
  k.width = 64;
  k.height = 48;
  return k;
}

inline ctrw::CameraIntrinsics random_intrinsics(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> focal(100.0, 1000.0);
  std::uniform_real_distribution<double> jitter(-5.0, 5.0);
  ctrw::CameraIntrinsics k;
  k.width = 320;
  k.height = 240;
  k.fx = focal(rng);
  k.fy = focal(rng);
  k.cx = k.width / 2.0 + jitter(rng);
  k.cy = k.height / 2.0 + jitter(rng);
  return k;
}

inline ctrw::Trajectory random_trajectory(std::mt19937_64& rng, int frames) {
  ctrw::Trajectory traj;
  const ctrw::CameraIntrinsics k = random_intrinsics(rng);
  for (int i = 0; i < frames; ++i) {
    ctrw::TrajectoryFrame f;
    f.frame_index = i;
    f.intrinsics = k;
    f.pose = random_pose(rng);
    traj.frames.push_back(f);
  }
  return traj;
}

// Trajectory whose camera centers follow the given polyline, identity-rotation
// cameras unless `rotations` is supplied (one per point).
inline ctrw::Trajectory trajectory_from_centers(
    const std::vector<Eigen::Vector3d>& centers,
    const std::vector<Eigen::Matrix3d>& rotations = {}) {
  ctrw::Trajectory traj;
  const ctrw::CameraIntrinsics k = default_intrinsics();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    ctrw::TrajectoryFrame f;
    f.frame_index = static_cast<std::int64_t>(i);
    f.intrinsics = k;
    f.pose.R = rotations.empty() ? Eigen::Matrix3d::Identity() : rotations[i];
    f.pose.t = -(f.pose.R * centers[i]);  // center c => t = -R c
    traj.frames.push_back(f);
  }
  return traj;
}

// 90-degree L in the xy-plane: `arm` unit steps along +x, then `arm` along +y.
// The corner sits at index `arm`.
inline std::vector<Eigen::Vector3d> l_shape_centers(int arm) {
  std::vector<Eigen::Vector3d> centers;
  for (int i = 0; i <= arm; ++i) centers.emplace_back(i, 0.0, 0.0);
  for (int i = 1; i <= arm; ++i) centers.emplace_back(arm, i, 0.0);
  return centers;
}

// ---------------------------------------------------------------------------
// Scale-calibration fixtures and the independent grid-search oracle
// ---------------------------------------------------------------------------

struct DepthFixture {
  ctrw::DepthPair pair;
  double true_scale = 1.0;
};

// Clean metric depths uniform in [10, 100] m, SfM depths = metric / s_true,
// then `outlier_fraction` of the metric pixels corrupted by a factor of 5.
inline DepthFixture make_depth_fixture(std::uint64_t seed, double true_scale, int h, int w,
                                       double outlier_fraction) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(10.0, 100.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Eigen::ArrayXXf sfm(h, w);
  Eigen::ArrayXXf metric(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = depth(rng);
      sfm(r, c) = static_cast<float>(m / true_scale);
      metric(r, c) = static_cast<float>(coin(rng) < outlier_fraction ? m * 5.0 : m);
    }
  }
  return DepthFixture{ctrw::make_depth_pair(sfm, metric), true_scale};
}

// Brute-force minimizer of the full Huber objective over all valid pixels,
// on a dense grid spanning [0.5, 2] x (median per-pixel ratio). Independent
// of the estimator: its own loss arithmetic, no RANSAC, no IRLS.
inline double grid_search_scale(const ctrw::DepthPair& pair, double huber_delta,
                                int points = 100000) {
  std::vector<double> sfm, metric, ratios;
  for (Eigen::Index c = 0; c < pair.sfm_depth.cols(); ++c) {
    for (Eigen::Index r = 0; r < pair.sfm_depth.rows(); ++r) {
      if (!pair.validity(r, c)) continue;
      sfm.push_back(pair.sfm_depth(r, c));
      metric.push_back(pair.metric_depth(r, c));
      ratios.push_back(metric.back() / sfm.back());
    }
  }
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2),
                   ratios.end());
  const double median = ratios[ratios.size() / 2];
  const double lo = 0.5 * median;
  const double hi = 2.0 * median;

  double best_s = lo;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double s = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    double obj = 0.0;
    for (std::size_t p = 0; p < sfm.size(); ++p) {
      const double a = std::abs(s * sfm[p] - metric[p]);
      obj += a <= huber_delta ? 0.5 * a * a : huber_delta * (a - 0.5 * huber_delta);
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_s = s;
    }
  }
  return best_s;
}

// ---------------------------------------------------------------------------
// On-disk synthetic dataset for the CLI pipeline
// ---------------------------------------------------------------------------

struct SyntheticDataset {
  fs::path root;
  fs::path manifest_path;
  std::vector<std::string> video_ids;
};

// n_videos small videos with trajectory + depth pairs + flow/mask frames.
// Background flow magnitude grows with the video index so a mid-range
// --min-flow splits the set; depth scales vary per video.
inline SyntheticDataset make_synthetic_dataset(const fs::path& root, int n_videos,
                                               std::uint64_t seed) {
  SyntheticDataset ds;
  ds.root = root;
  fs::create_directories(root);
  std::mt19937_64 rng(seed);

  ctrw::DatasetManifest manifest;
  for (int v = 0; v < n_videos; ++v) {
    char id[16];
    std::snprintf(id, sizeof(id), "vid%02d", v);
    ds.video_ids.emplace_back(id);
    const fs::path video_dir = root / id;
    const fs::path depth_dir = video_dir / "depth";
    const fs::path flow_dir = video_dir / "flow";
    const fs::path mask_dir = video_dir / "mask";
    fs::create_directories(depth_dir);
    fs::create_directories(flow_dir);
    fs::create_directories(mask_dir);

    // Trajectory: 30 frames, straight run then a turn whose heading varies
    // with the video, plus a slow pan so view changes differ.
    const int frames = 30;
    const int corner = 12 + (v % 5);
    const double turn_rad = (30.0 + 20.0 * (v % 4)) * M_PI / 180.0;
    std::vector<Eigen::Vector3d> centers;
    std::vector<Eigen::Matrix3d> rotations;
    Eigen::Vector3d p(0, 0, 0);
    Eigen::Vector3d dir(0, 0, 1);
    for (int i = 0; i < frames; ++i) {
      centers.push_back(p);
      rotations.push_back(rot_z_deg(0.3 * i * (v % 3)));
      if (i == corner) {
        dir = Eigen::AngleAxisd(turn_rad, Eigen::Vector3d::UnitY()) * dir;
      }
      p += dir;
    }
    ctrw::Trajectory traj = trajectory_from_centers(centers, rotations);
    ctrw::write_file_atomic(video_dir / "trajectory.txt", ctrw::write_trajectory(traj));

    // Depth pairs on every 4th frame.
    std::uniform_real_distribution<double> scale_dist(0.5, 4.0);
    const double true_scale = scale_dist(rng);
    for (int i = 0; i < frames; i += 4) {
      const DepthFixture fx = make_depth_fixture(seed + 1000 * v + i, true_scale, 32, 32, 0.2);
      char name[64];
      std::snprintf(name, sizeof(name), "%06d_sfm.ctrw", i);
      ctrw::write_depth_raster(depth_dir / name, fx.pair.sfm_depth);
      std::snprintf(name, sizeof(name), "%06d_metric.ctrw", i);
      ctrw::write_depth_raster(depth_dir / name, fx.pair.metric_depth);
    }

    // Three flow/mask frames, 16x16, foreground block in the top-left corner.
    const double bg_flow = 0.25 + 0.4 * v;
    for (int i = 0; i < 3; ++i) {
      Eigen::ArrayXXf u(16, 16), w(16, 16);
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> m(16, 16);
      for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
          const bool fg = r < 4 && c < 4;
          m(r, c) = fg;
          u(r, c) = static_cast<float>(fg ? 6.0 : bg_flow);
          w(r, c) = 0.0f;
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "%06d.flow.ctrw", i);
      ctrw::write_flow_raster(flow_dir / name, ctrw::FlowField{u, w});
      std::snprintf(name, sizeof(name), "%06d.mask.ctrw", i);
      ctrw::SegMask mask;
      mask.mask = m;
      ctrw::write_mask_raster(mask_dir / name, mask);
    }

    ctrw::ManifestEntry entry;
    entry.video_id = id;
    entry.trajectory_path = (video_dir / "trajectory.txt").string();
    entry.depth_dir = depth_dir.string();
    entry.flow_dir = flow_dir.string();
    entry.mask_dir = mask_dir.string();
    if (v == 0) {
      Eigen::MatrixXf features(frames, 8);
      std::normal_distribution<float> feat;
      for (int r = 0; r < frames; ++r)
        for (int c = 0; c < 8; ++c) features(r, c) = feat(rng);
      const fs::path features_path = video_dir / "clip_features.ctrw";
      ctrw::write_features_raster(features_path, features);
      entry.features_path = features_path.string();
    }
    manifest.entries.push_back(entry);
  }

  ds.manifest_path = root / "manifest.json";
  ctrw::write_file_atomic(ds.manifest_path, ctrw::write_manifest(manifest));
  return ds;
}

// ---------------------------------------------------------------------------
// CLI process helpers
// ---------------------------------------------------------------------------

inline int run_command(const std::string& cmdline) {
  const int status = std::system(cmdline.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

inline fs::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       (tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace testsupport
