#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "ctrw/trajectory_analysis.hpp"
#include "test_support.hpp"

using Catch::Approx;
using namespace ctrw;
namespace ts = testsupport;

namespace {

Trajectory rigidly_transformed(const Trajectory& traj, const Eigen::Matrix3d& g_r,
                               const Eigen::Vector3d& g_t) {
  // World remap x' = G_r x + g_t: rotations become R * G_r^T and camera
  // centers move to G_r c + g_t.
  Trajectory out = traj;
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const Eigen::Vector3d c_new = g_r * camera_center(traj.frames[i].pose) + g_t;
    out.frames[i].pose.R = traj.frames[i].pose.R * g_r.transpose();
    out.frames[i].pose.t = -(out.frames[i].pose.R * c_new);
  }
  return out;
}

}  // namespace

TEST_CASE("fit_line recovers directions with travel orientation", "[analysis]") {
  SECTION("collinear points along +x") {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 10; ++i) pts.emplace_back(i, 0.0, 0.0);
    const LineFit fit = fit_line(pts);
    REQUIRE(fit.direction.isApprox(Eigen::Vector3d::UnitX(), 1e-12));
    REQUIRE(fit.centroid.isApprox(Eigen::Vector3d(4.5, 0, 0), 1e-12));
  }
  SECTION("reversed order flips the sign") {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 9; i >= 0; --i) pts.emplace_back(i, 0.0, 0.0);
    REQUIRE(fit_line(pts).direction.isApprox(-Eigen::Vector3d::UnitX(), 1e-12));
  }
  SECTION("noisy line y = 2x recovered within half a degree") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> noise(0.0, 1e-3);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 50; ++i) {
      const double x = 0.1 * i;
      pts.emplace_back(x + noise(rng), 2.0 * x + noise(rng), noise(rng));
    }
    const Eigen::Vector3d expected = Eigen::Vector3d(1.0, 2.0, 0.0).normalized();
    const double angle =
        std::acos(std::clamp(fit_line(pts).direction.dot(expected), -1.0, 1.0)) * 180.0 / M_PI;
    REQUIRE(angle < 0.5);
  }
  SECTION("degenerate input is an error") {
    std::vector<Eigen::Vector3d> pts(5, Eigen::Vector3d(1, 2, 3));
    REQUIRE_THROWS_AS(fit_line(pts), NumericError);
    REQUIRE_THROWS_AS(fit_line({Eigen::Vector3d::Zero()}), ValidationError);
  }
}

TEST_CASE("detect_keypoints on canonical shapes", "[analysis]") {
  AnalysisParams params;
  params.n = 6;
  params.gamma_deg = 15.0;

  SECTION("straight line has no keypoints") {
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i < 60; ++i) centers.emplace_back(0.5 * i, 0.0, 0.0);
    REQUIRE(detect_keypoints(ts::trajectory_from_centers(centers), params).empty());
  }
  SECTION("90-degree L yields exactly one keypoint at the corner") {
    const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(50));
    const std::vector<int> kps = detect_keypoints(traj, params);
    REQUIRE(kps.size() == 1);
    REQUIRE(std::abs(kps[0] - 50) <= 1);
  }
  SECTION("1-degree-step circle stays below threshold") {
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i < 360; ++i) {
      const double a = i * M_PI / 180.0;
      centers.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
    REQUIRE(detect_keypoints(ts::trajectory_from_centers(centers), params).empty());
  }
  SECTION("short trajectories return an empty list") {
    const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(5));
    REQUIRE(traj.frames.size() < 2 * static_cast<std::size_t>(params.n) + 1);
    REQUIRE(detect_keypoints(traj, params).empty());
  }
}

TEST_CASE("detect_keypoints is invariant to rigid motion and scale", "[analysis]") {
  AnalysisParams params;
  std::mt19937_64 rng(43);
  const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(40));
  const std::vector<int> base = detect_keypoints(traj, params);
  REQUIRE_FALSE(base.empty());

  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Matrix3d g_r = ts::random_rotation(rng);
    const Eigen::Vector3d g_t = ts::random_vector(rng);
    REQUIRE(detect_keypoints(rigidly_transformed(traj, g_r, g_t), params) == base);

    std::uniform_real_distribution<double> scale(0.05, 20.0);
    REQUIRE(detect_keypoints(apply_scale(traj, scale(rng)), params) == base);
  }
}

TEST_CASE("segment_trajectory tiles the index range", "[analysis]") {
  SECTION("no keypoints gives one whole-range segment") {
    const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(10));
    const auto segments = segment_trajectory(traj, {});
    REQUIRE(segments.size() == 1);
    REQUIRE(segments[0].start_idx == 0);
    REQUIRE(segments[0].end_idx == static_cast<int>(traj.frames.size()) - 1);
    REQUIRE(segments[0].arc_length == Approx(20.0).margin(1e-12));
  }
  SECTION("L-shape splits into two segments ~90 degrees apart") {
    const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(50));
    AnalysisParams params;
    const auto kps = detect_keypoints(traj, params);
    const auto segments = segment_trajectory(traj, kps);
    REQUIRE(segments.size() == 2);
    const double angle = std::acos(std::clamp(
                             segments[0].direction.dot(segments[1].direction), -1.0, 1.0)) *
                         180.0 / M_PI;
    REQUIRE(angle == Approx(90.0).margin(2.0));
  }
  SECTION("random keypoint sets always tile without gaps") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 100; ++trial) {
      std::uniform_int_distribution<int> len_dist(2, 80);
      const int len = len_dist(rng);
      const Trajectory traj = ts::random_trajectory(rng, len);
      std::set<int> kp_set;
      if (len > 2) {
        std::uniform_int_distribution<int> count_dist(0, std::min(6, len - 2));
        std::uniform_int_distribution<int> pos_dist(1, len - 2);
        const int want = count_dist(rng);
        while (static_cast<int>(kp_set.size()) < want) kp_set.insert(pos_dist(rng));
      }
      const std::vector<int> kps(kp_set.begin(), kp_set.end());
      const auto segments = segment_trajectory(traj, kps);
      REQUIRE(segments.front().start_idx == 0);
      REQUIRE(segments.back().end_idx == len - 1);
      for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        REQUIRE(segments[i].end_idx == segments[i + 1].start_idx);
        REQUIRE(segments[i].start_idx < segments[i].end_idx);
      }
    }
  }
  SECTION("zero-motion segment inherits the previous direction") {
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i <= 10; ++i) centers.emplace_back(i, 0.0, 0.0);
    for (int i = 0; i < 10; ++i) centers.emplace_back(10.0, 0.0, 0.0);  // parked
    const Trajectory traj = ts::trajectory_from_centers(centers);
    const auto segments = segment_trajectory(traj, {10});
    REQUIRE(segments.size() == 2);
    REQUIRE_FALSE(segments[0].degenerate);
    REQUIRE(segments[1].degenerate);
    REQUIRE(segments[1].arc_length == 0.0);
    REQUIRE(segments[1].direction.isApprox(segments[0].direction, 1e-12));
  }
  SECTION("invalid keypoints are rejected") {
    const Trajectory traj = ts::trajectory_from_centers(ts::l_shape_centers(5));
    REQUIRE_THROWS_AS(segment_trajectory(traj, {0}), ValidationError);
    REQUIRE_THROWS_AS(segment_trajectory(traj, {static_cast<int>(traj.frames.size()) - 1}),
                      ValidationError);
    REQUIRE_THROWS_AS(segment_trajectory(traj, {3, 3}), ValidationError);
  }
}

TEST_CASE("segment view changes count threshold crossings", "[analysis]") {
  // Forward dolly with a steady pan of 30 degrees total; threshold 20.
  std::vector<Eigen::Vector3d> centers;
  std::vector<Eigen::Matrix3d> rotations;
  const int frames = 31;
  for (int i = 0; i < frames; ++i) {
    centers.emplace_back(0.0, 0.0, static_cast<double>(i));
    rotations.push_back(ts::rot_axis_deg(Eigen::Vector3d::UnitY(), i * 1.0));
  }
  const Trajectory traj = ts::trajectory_from_centers(centers, rotations);
  const auto segments = segment_trajectory(traj, {}, 20.0);
  REQUIRE(segments.size() == 1);
  REQUIRE(segments[0].view_change_count == 1);

  AnalysisParams params;
  params.view_change_threshold_deg = 20.0;
  const TrajectoryProfile profile = classify_trajectory(traj, params);
  REQUIRE(profile.importance == Approx(20.0).margin(1e-6));
}

TEST_CASE("classify_trajectory bins directions and turns", "[analysis]") {
  AnalysisParams params;

  SECTION("pure forward dolly") {
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i < 40; ++i) centers.emplace_back(0.0, 0.0, 0.5 * i);
    const TrajectoryProfile p = classify_trajectory(ts::trajectory_from_centers(centers), params);
    REQUIRE(p.direction_bin == 0);  // forward
    REQUIRE(p.turn_bin == 0);       // none
    REQUIRE(p.importance == Approx(0.0).margin(1e-9));
    REQUIRE(p.category == 0);
  }
  SECTION("forward 50 then right 20") {
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i <= 50; ++i) centers.emplace_back(0.0, 0.0, i);
    for (int i = 1; i <= 20; ++i) centers.emplace_back(static_cast<double>(i), 0.0, 50.0);
    const TrajectoryProfile p = classify_trajectory(ts::trajectory_from_centers(centers), params);
    REQUIRE(p.direction_bin == 0);  // forward (camera +z)
    REQUIRE(p.turn_bin == 2);       // right
    REQUIRE(p.importance == Approx(90.0).margin(2.0));
    REQUIRE(p.category == 0 * kNumTurnBins + 2);
  }
  SECTION("category is invariant under global rebasing") {
    std::mt19937_64 rng(53);
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i <= 30; ++i) centers.emplace_back(0.0, 0.0, i);
    for (int i = 1; i <= 15; ++i) centers.emplace_back(0.0, -static_cast<double>(i), 30.0);
    const Trajectory traj = ts::trajectory_from_centers(centers);
    const TrajectoryProfile base = classify_trajectory(traj, params);
    REQUIRE(base.turn_bin == 3);  // camera -y is up
    for (int trial = 0; trial < 10; ++trial) {
      const Trajectory rebased = rebase_trajectory(traj, ts::random_pose(rng));
      const TrajectoryProfile p = classify_trajectory(rebased, params);
      REQUIRE(p.category == base.category);
      REQUIRE(p.direction_bin == base.direction_bin);
      REQUIRE(p.turn_bin == base.turn_bin);
    }
  }
}

TEST_CASE("balance_dataset enforces the category cap by importance", "[analysis]") {
  auto profile_with = [](int category, double importance) {
    TrajectoryProfile p;
    p.category = category;
    p.importance = importance;
    return p;
  };

  SECTION("nothing dropped when every category fits") {
    std::vector<TrajectoryProfile> profiles = {profile_with(0, 1.0), profile_with(1, 2.0)};
    const BalanceResult r = balance_dataset(profiles, 5);
    REQUIRE(r.drop.empty());
    REQUIRE(r.keep.size() == 2);
  }
  SECTION("auto cap at the median count prunes the dominant category") {
    std::vector<TrajectoryProfile> profiles;
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> imp(0.0, 100.0);
    for (int i = 0; i < 10; ++i) profiles.push_back(profile_with(0, imp(rng)));
    for (int i = 0; i < 2; ++i) profiles.push_back(profile_with(7, imp(rng)));
    for (int i = 0; i < 2; ++i) profiles.push_back(profile_with(13, imp(rng)));
    const BalanceResult r = balance_dataset(profiles, std::nullopt);
    REQUIRE(r.cap == 2);
    REQUIRE(r.drop.size() == 8);
    double max_dropped = -1.0;
    double min_kept = 1e300;
    for (std::size_t i : r.drop) max_dropped = std::max(max_dropped, profiles[i].importance);
    for (std::size_t i : r.keep) {
      if (profiles[i].category == 0) min_kept = std::min(min_kept, profiles[i].importance);
    }
    REQUIRE(min_kept >= max_dropped);
    REQUIRE(r.keep.size() + r.drop.size() == profiles.size());
  }
  SECTION("cap below 1 is rejected") {
    std::vector<TrajectoryProfile> profiles = {profile_with(0, 1.0)};
    REQUIRE_THROWS_AS(balance_dataset(profiles, 0), ValidationError);
    REQUIRE_THROWS_AS(balance_dataset({}, 2), ValidationError);
  }
  SECTION("importance ties drop the lower index") {
    std::vector<TrajectoryProfile> profiles = {profile_with(0, 5.0), profile_with(0, 5.0),
                                               profile_with(0, 5.0)};
    const BalanceResult r = balance_dataset(profiles, 2);
    REQUIRE(r.drop == std::vector<std::size_t>{0});
  }
}
