// ctrw: batch driver for the camera-trajectory curation pipeline
// (ingest -> filter -> calibrate -> analyze -> balance -> report) plus the
// evaluation subcommands. Stage outputs are JSON files in --out; reruns
// overwrite them atomically, and identical inputs + seed give byte-identical
// outputs.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ctrw/ctrw.hpp"

namespace fs = std::filesystem;
using ctrw::Json;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int jobs = 0;  // 0 = logical CPUs
};

ctrw::Config resolve_config(const GlobalOpts& g) {
  ctrw::Config cfg;
  if (!g.config_path.empty()) {
    cfg = ctrw::parse_config(ctrw::read_file_bytes(g.config_path));
  }
  if (g.seed.has_value()) {
    cfg.seed = *g.seed;
    cfg.ransac.rng_seed = *g.seed;
  }
  return cfg;
}

int effective_jobs(const GlobalOpts& g) {
  if (g.jobs > 0) return g.jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Bounded worker pool over [0, count). Results land in caller-owned slots
// indexed by work item, so output order never depends on scheduling; the
// first failure by index is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  if (count == 0) return;
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

std::string format_index(std::int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06" PRId64, i);
  return buf;
}

ctrw::DatasetManifest load_manifest_sorted(const std::string& path) {
  ctrw::DatasetManifest manifest = ctrw::parse_manifest(ctrw::read_file_bytes(path));
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ctrw::ManifestEntry& a, const ctrw::ManifestEntry& b) {
              return a.video_id < b.video_id;
            });
  return manifest;
}

ctrw::Trajectory load_trajectory(const std::string& path) {
  try {
    return ctrw::parse_trajectory(ctrw::read_file_bytes(path));
  } catch (const ctrw::ValidationError& e) {
    throw ctrw::ValidationError(path + ": " + e.what());
  }
}

// Files named <6-digit frame index><suffix> inside dir, sorted by index.
std::vector<std::pair<std::int64_t, fs::path>> scan_indexed(const fs::path& dir,
                                                            const std::string& suffix) {
  if (!fs::is_directory(dir)) {
    throw ctrw::ValidationError("not a directory: " + dir.string());
  }
  std::vector<std::pair<std::int64_t, fs::path>> found;
  for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix) {
      continue;
    }
    const std::string stem = name.substr(0, name.size() - suffix.size());
    try {
      found.emplace_back(std::stoll(stem), entry.path());
    } catch (const std::exception&) {
      throw ctrw::ValidationError("unparseable frame index in file name: " +
                                  entry.path().string());
    }
  }
  std::sort(found.begin(), found.end());
  return found;
}

struct DepthPairFiles {
  std::int64_t frame_index;
  fs::path sfm;
  fs::path metric;
};

std::vector<DepthPairFiles> scan_depth_pairs(const fs::path& dir) {
  const auto sfm = scan_indexed(dir, "_sfm.ctrw");
  const auto metric = scan_indexed(dir, "_metric.ctrw");
  std::map<std::int64_t, fs::path> metric_by_index(metric.begin(), metric.end());
  if (sfm.size() != metric.size()) {
    throw ctrw::ValidationError(dir.string() + ": sfm/metric depth file counts differ (" +
                                std::to_string(sfm.size()) + " vs " +
                                std::to_string(metric.size()) + ")");
  }
  std::vector<DepthPairFiles> pairs;
  pairs.reserve(sfm.size());
  for (const auto& [index, path] : sfm) {
    const auto it = metric_by_index.find(index);
    if (it == metric_by_index.end()) {
      throw ctrw::ValidationError(dir.string() + ": missing metric depth for frame " +
                                  std::to_string(index));
    }
    pairs.push_back(DepthPairFiles{index, path, it->second});
  }
  return pairs;
}

struct FlowMaskFiles {
  std::int64_t frame_index;
  fs::path flow;
  fs::path mask;
};

std::vector<FlowMaskFiles> scan_flow_masks(const fs::path& flow_dir, const fs::path& mask_dir) {
  const auto flows = scan_indexed(flow_dir, ".flow.ctrw");
  const auto masks = scan_indexed(mask_dir, ".mask.ctrw");
  std::map<std::int64_t, fs::path> mask_by_index(masks.begin(), masks.end());
  if (flows.empty()) throw ctrw::ValidationError(flow_dir.string() + ": no flow rasters");
  if (flows.size() != masks.size()) {
    throw ctrw::ValidationError("flow/mask frame counts differ (" + std::to_string(flows.size()) +
                                " vs " + std::to_string(masks.size()) + ")");
  }
  std::vector<FlowMaskFiles> out;
  out.reserve(flows.size());
  for (const auto& [index, path] : flows) {
    const auto it = mask_by_index.find(index);
    if (it == mask_by_index.end()) {
      throw ctrw::ValidationError(mask_dir.string() + ": missing mask for frame " +
                                  std::to_string(index));
    }
    out.push_back(FlowMaskFiles{index, path, it->second});
  }
  return out;
}

void load_flow_mask_lists(const ctrw::ManifestEntry& entry, std::vector<ctrw::FlowField>& flows,
                          std::vector<ctrw::SegMask>& masks) {
  if (entry.flow_dir.empty() || entry.mask_dir.empty()) {
    throw ctrw::ValidationError(entry.video_id + ": flow_dir and mask_dir required");
  }
  for (const FlowMaskFiles& f : scan_flow_masks(entry.flow_dir, entry.mask_dir)) {
    flows.push_back(ctrw::read_flow_raster(f.flow));
    masks.push_back(ctrw::read_mask_raster(f.mask));
  }
}

void write_stage_report(const fs::path& out_dir, const std::string& name, const Json& bundle,
                        std::uint64_t seed) {
  fs::create_directories(out_dir);
  ctrw::write_file_atomic(out_dir / name, ctrw::write_report(bundle, seed));
}

// Uniformly spaced positions over [0, count), at most k of them.
std::vector<std::size_t> pick_uniform(std::size_t count, int k) {
  std::vector<std::size_t> picked;
  if (count == 0 || k < 1) return picked;
  if (count <= static_cast<std::size_t>(k)) {
    for (std::size_t i = 0; i < count; ++i) picked.push_back(i);
    return picked;
  }
  for (int j = 0; j < k; ++j) {
    const double f = k == 1 ? 0.0
                            : static_cast<double>(j) * static_cast<double>(count - 1) /
                                  static_cast<double>(k - 1);
    const std::size_t idx = static_cast<std::size_t>(std::llround(f));
    if (picked.empty() || idx != picked.back()) picked.push_back(idx);
  }
  return picked;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

void run_ingest(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path) {
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  std::vector<Json> videos(manifest.entries.size());
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    Json v;
    v["video_id"] = entry.video_id;
    const ctrw::Trajectory traj = load_trajectory(entry.trajectory_path);
    ctrw::validate_trajectory(traj);
    v["frames"] = traj.frames.size();
    if (!entry.depth_dir.empty()) {
      const auto pairs = scan_depth_pairs(entry.depth_dir);
      for (const DepthPairFiles& p : pairs) {
        (void)ctrw::read_depth_raster(p.sfm);
        (void)ctrw::read_depth_raster(p.metric);
      }
      v["depth_pairs"] = pairs.size();
    }
    if (!entry.flow_dir.empty() || !entry.mask_dir.empty()) {
      std::vector<ctrw::FlowField> flows;
      std::vector<ctrw::SegMask> masks;
      load_flow_mask_lists(entry, flows, masks);
      v["flow_frames"] = flows.size();
    }
    if (!entry.features_path.empty()) {
      const Eigen::MatrixXf feats = ctrw::read_features_raster(entry.features_path);
      v["feature_frames"] = feats.rows();
    }
    videos[i] = std::move(v);
  });

  Json bundle;
  bundle["meta"]["seed"] = cfg.seed;
  bundle["meta"]["manifest"] = manifest_path;
  bundle["meta"]["videos"] = videos;
  write_stage_report(g.out, "ingest.json", bundle, cfg.seed);
  std::cout << "ingest: validated " << manifest.entries.size() << " videos\n";
}

void run_filter(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path) {
  if (!cfg.min_flow.has_value()) {
    throw ctrw::ValidationError("filter: --min-flow is required (no default threshold)");
  }
  const double min_flow = *cfg.min_flow;
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  std::vector<Json> videos(manifest.entries.size());
  std::vector<bool> kept(manifest.entries.size(), false);
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    std::vector<ctrw::FlowField> flows;
    std::vector<ctrw::SegMask> masks;
    load_flow_mask_lists(entry, flows, masks);
    const ctrw::FlowAggregate score = ctrw::camera_movement_score(flows, masks);
    kept[i] = score.value > min_flow;
    Json v;
    v["video_id"] = entry.video_id;
    v["background_flow"] = score.value;
    v["background_pixels"] = score.pixel_count;
    if (score.empty) v["empty_background"] = true;
    v["keep"] = kept[i];
    videos[i] = std::move(v);
  });

  Json keep_ids = Json::array();
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (kept[i]) keep_ids.push_back(manifest.entries[i].video_id);
  }
  Json bundle;
  bundle["metrics"]["camera_movement"]["min_flow"] = min_flow;
  bundle["metrics"]["camera_movement"]["videos"] = videos;
  bundle["metrics"]["camera_movement"]["keep"] = keep_ids;
  write_stage_report(g.out, "filter.json", bundle, cfg.seed);
  std::cout << "filter: kept " << keep_ids.size() << " of " << manifest.entries.size()
            << " videos (min background flow " << min_flow << ")\n";
}

void run_calibrate(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path) {
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  const fs::path calibrated_dir = fs::path(g.out) / "calibrated";
  fs::create_directories(calibrated_dir);

  std::vector<Json> videos(manifest.entries.size());
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    if (entry.depth_dir.empty()) {
      throw ctrw::ValidationError(entry.video_id + ": calibrate requires depth_dir");
    }
    const ctrw::Trajectory traj = load_trajectory(entry.trajectory_path);
    const std::vector<DepthPairFiles> available = scan_depth_pairs(entry.depth_dir);
    if (available.empty()) {
      throw ctrw::ValidationError(entry.video_id + ": no depth pairs in " + entry.depth_dir);
    }

    std::vector<std::pair<std::int64_t, ctrw::DepthPair>> keyframes;
    for (std::size_t pos : pick_uniform(available.size(), cfg.keyframes)) {
      const DepthPairFiles& files = available[pos];
      keyframes.emplace_back(files.frame_index,
                             ctrw::make_depth_pair(ctrw::read_depth_raster(files.sfm),
                                                   ctrw::read_depth_raster(files.metric)));
    }
    auto [calibrated, estimate] = ctrw::calibrate_trajectory(traj, keyframes, cfg.ransac);
    ctrw::write_file_atomic(calibrated_dir / (entry.video_id + ".txt"),
                            ctrw::write_trajectory(calibrated));

    Json v;
    v["video_id"] = entry.video_id;
    v["scene_scale"] = estimate.scene_scale;
    Json per_frame = Json::array();
    for (const ctrw::FrameScale& fsr : estimate.per_frame) {
      per_frame.push_back(Json{{"frame_index", fsr.frame_index},
                               {"s", fsr.s},
                               {"inlier_count", fsr.inlier_count},
                               {"inlier_ratio", fsr.inlier_ratio}});
    }
    v["per_frame"] = std::move(per_frame);
    videos[i] = std::move(v);
  });

  Json bundle;
  bundle["calibration"]["keyframes"] = cfg.keyframes;
  bundle["calibration"]["videos"] = videos;
  write_stage_report(g.out, "calibrate.json", bundle, cfg.seed);
  std::cout << "calibrate: wrote " << manifest.entries.size() << " calibrated trajectories to "
            << calibrated_dir.string() << "\n";
}

Json segment_to_json(const ctrw::TrajectorySegment& seg) {
  Json s;
  s["start"] = seg.start_idx;
  s["end"] = seg.end_idx;
  s["direction"] = {seg.direction.x(), seg.direction.y(), seg.direction.z()};
  s["arc_length"] = seg.arc_length;
  s["view_changes"] = seg.view_change_count;
  if (seg.degenerate) s["degenerate"] = true;
  return s;
}

void run_analyze(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path,
                 const std::string& traj_dir) {
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  std::vector<Json> videos(manifest.entries.size());
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    const std::string path = traj_dir.empty()
                                 ? entry.trajectory_path
                                 : (fs::path(traj_dir) / (entry.video_id + ".txt")).string();
    const ctrw::Trajectory traj = load_trajectory(path);
    const ctrw::TrajectoryProfile profile = ctrw::classify_trajectory(traj, cfg.analysis);

    Json v;
    v["video_id"] = entry.video_id;
    v["keypoints"] = profile.keypoints;
    Json segments = Json::array();
    for (const ctrw::TrajectorySegment& seg : profile.segments) segments.push_back(segment_to_json(seg));
    v["segments"] = std::move(segments);
    v["primary_segment"] = profile.primary_segment;
    v["direction_bin"] = profile.direction_bin;
    v["direction"] = ctrw::kDirectionBinLabels[static_cast<std::size_t>(profile.direction_bin)];
    v["turn_bin"] = profile.turn_bin;
    v["turn"] = ctrw::kTurnBinLabels[static_cast<std::size_t>(profile.turn_bin)];
    v["importance"] = profile.importance;
    v["category"] = profile.category;
    videos[i] = std::move(v);
  });

  Json bundle;
  bundle["profile"]["videos"] = videos;
  write_stage_report(g.out, "analyze.json", bundle, cfg.seed);
  std::cout << "analyze: profiled " << manifest.entries.size() << " trajectories\n";
}

void run_balance(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& profiles_path) {
  const std::string path = profiles_path.empty()
                               ? (fs::path(g.out) / "analyze.json").string()
                               : profiles_path;
  const Json doc = ctrw::parse_report(ctrw::read_file_bytes(path));
  if (!doc.contains("profile") || !doc["profile"].contains("videos")) {
    throw ctrw::ValidationError(path + ": no profile.videos section (run analyze first)");
  }

  std::vector<std::string> ids;
  std::vector<ctrw::TrajectoryProfile> profiles;
  for (const Json& v : doc["profile"]["videos"]) {
    if (!v.contains("video_id") || !v.contains("category") || !v.contains("importance")) {
      throw ctrw::ValidationError(path + ": profile entry missing video_id/category/importance");
    }
    ids.push_back(v["video_id"].get<std::string>());
    ctrw::TrajectoryProfile p;
    p.category = v["category"].get<int>();
    p.importance = v["importance"].get<double>();
    profiles.push_back(p);
  }

  const ctrw::BalanceResult result = ctrw::balance_dataset(profiles, cfg.balance_cap);
  Json keep = Json::array();
  Json drop = Json::array();
  std::map<int, int> kept_counts;
  for (std::size_t i : result.keep) {
    keep.push_back(ids[i]);
    kept_counts[profiles[i].category] += 1;
  }
  for (std::size_t i : result.drop) drop.push_back(ids[i]);
  Json histogram;
  Json histogram_before;
  for (const auto& [category, count] : result.category_counts) {
    histogram[std::to_string(category)] = kept_counts[category];
    histogram_before[std::to_string(category)] = count;
  }

  Json bundle;
  bundle["balance"]["cap"] = result.cap;
  bundle["balance"]["keep"] = keep;
  bundle["balance"]["drop"] = drop;
  bundle["balance"]["histogram"] = histogram;
  bundle["balance"]["histogram_before"] = histogram_before;
  write_stage_report(g.out, "balance.json", bundle, cfg.seed);
  std::cout << "balance: cap " << result.cap << ", kept " << result.keep.size() << ", dropped "
            << result.drop.size() << "\n";
}

void run_plucker(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path,
                 int latent_h, int latent_w, bool point_offset_rays) {
  if (latent_h < 1 || latent_w < 1) {
    throw ctrw::ValidationError("plucker: --latent-h and --latent-w must be >= 1");
  }
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  const fs::path plucker_dir = fs::path(g.out) / "plucker";
  const ctrw::RayMode mode =
      point_offset_rays ? ctrw::RayMode::PointOffset : ctrw::RayMode::Geometric;

  std::vector<Json> videos(manifest.entries.size());
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    const ctrw::Trajectory traj =
        ctrw::downsample_trajectory(load_trajectory(entry.trajectory_path), cfg.stride);
    const fs::path video_dir = plucker_dir / entry.video_id;
    fs::create_directories(video_dir);
    for (const ctrw::TrajectoryFrame& frame : traj.frames) {
      const ctrw::PluckerMap map =
          ctrw::plucker_map(frame.intrinsics, frame.pose, latent_h, latent_w, mode);
      ctrw::write_plucker_raster(video_dir / (format_index(frame.frame_index) + ".plucker.ctrw"),
                                 map);
    }
    Json v;
    v["video_id"] = entry.video_id;
    v["maps"] = traj.frames.size();
    videos[i] = std::move(v);
  });

  Json bundle;
  bundle["meta"]["plucker"] = {{"latent_h", latent_h},
                               {"latent_w", latent_w},
                               {"stride", cfg.stride},
                               {"videos", videos}};
  write_stage_report(g.out, "plucker.json", bundle, cfg.seed);
  std::cout << "plucker: wrote ray embeddings for " << manifest.entries.size() << " videos to "
            << plucker_dir.string() << "\n";
}

void run_eval_traj(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& est_path,
                   const std::string& gt_path, int stride, bool no_rot_align) {
  ctrw::Trajectory est = load_trajectory(est_path);
  ctrw::Trajectory gt = load_trajectory(gt_path);
  if (stride > 1) {
    est = ctrw::downsample_trajectory(est, stride);
    gt = ctrw::downsample_trajectory(gt, stride);
  }
  if (est.frames.size() != gt.frames.size()) {
    throw ctrw::ValidationError("eval-traj: trajectory lengths differ (" +
                                std::to_string(est.frames.size()) + " vs " +
                                std::to_string(gt.frames.size()) + ")");
  }

  std::vector<Eigen::Vector3d> est_centers, gt_centers;
  std::vector<Eigen::Matrix3d> est_rotations, gt_rotations;
  for (std::size_t i = 0; i < est.frames.size(); ++i) {
    est_centers.push_back(ctrw::camera_center(est.frames[i].pose));
    gt_centers.push_back(ctrw::camera_center(gt.frames[i].pose));
    est_rotations.push_back(est.frames[i].pose.R);
    gt_rotations.push_back(gt.frames[i].pose.R);
  }

  const ctrw::AlignmentResult alignment = ctrw::align_similarity(est_centers, gt_centers);
  const double te = ctrw::trans_err(alignment.residuals);
  const Eigen::Matrix3d align_rotation =
      no_rot_align ? Eigen::Matrix3d::Identity() : alignment.R;
  const double re = ctrw::rot_err_deg(est_rotations, gt_rotations, align_rotation);

  Json bundle;
  bundle["metrics"]["trans_err"] = te;
  bundle["metrics"]["rot_err_deg"] = re;
  bundle["metrics"]["ate"] = {{"scale", alignment.s},
                              {"frames", est.frames.size()},
                              {"gt_degenerate", alignment.gt_degenerate},
                              {"rot_aligned", !no_rot_align}};
  write_stage_report(g.out, "eval_traj.json", bundle, cfg.seed);
  std::cout << "eval-traj: trans_err " << te << ", rot_err_deg " << re << "\n";
}

void run_eval_motion(const GlobalOpts& g, const ctrw::Config& cfg, const std::string& manifest_path,
                     double angular_focal_px) {
  const ctrw::DatasetManifest manifest = load_manifest_sorted(manifest_path);
  std::vector<Json> videos(manifest.entries.size());
  std::vector<ctrw::FlowAggregate> per_video(manifest.entries.size());
  parallel_for(manifest.entries.size(), effective_jobs(g), [&](std::size_t i) {
    const ctrw::ManifestEntry& entry = manifest.entries[i];
    std::vector<ctrw::FlowField> flows;
    std::vector<ctrw::SegMask> masks;
    load_flow_mask_lists(entry, flows, masks);
    per_video[i] = ctrw::motion_strength(flows, masks);
    Json v;
    v["video_id"] = entry.video_id;
    v["motion_strength"] = per_video[i].value;
    v["foreground_pixels"] = per_video[i].pixel_count;
    if (per_video[i].empty) v["empty_foreground"] = true;
    if (angular_focal_px > 0.0) {
      v["motion_strength_deg"] =
          ctrw::motion_strength_angular_deg(flows, masks, angular_focal_px).value;
    }
    videos[i] = std::move(v);
  });

  double pooled_sum = 0.0;
  std::size_t pooled_count = 0;
  for (const ctrw::FlowAggregate& agg : per_video) {
    pooled_sum += agg.value * static_cast<double>(agg.pixel_count);
    pooled_count += agg.pixel_count;
  }
  Json bundle;
  bundle["metrics"]["motion"]["videos"] = videos;
  bundle["metrics"]["motion"]["overall"] =
      pooled_count == 0 ? 0.0 : pooled_sum / static_cast<double>(pooled_count);
  write_stage_report(g.out, "eval_motion.json", bundle, cfg.seed);
  std::cout << "eval-motion: " << manifest.entries.size() << " videos\n";
}

void run_eval_appearance(const GlobalOpts& g, const ctrw::Config& cfg,
                         const std::vector<std::string>& feature_paths) {
  if (feature_paths.size() < 2) {
    throw ctrw::ValidationError("eval-appearance: need at least 2 clip feature files");
  }
  std::vector<ctrw::ClipFeatures> clips;
  clips.reserve(feature_paths.size());
  for (const std::string& path : feature_paths) {
    clips.push_back(ctrw::ClipFeatures{ctrw::read_features_raster(path).cast<double>()});
  }
  const double value = ctrw::appearance_consistency(clips);

  Json bundle;
  bundle["metrics"]["appearance_consistency"] = value;
  bundle["metrics"]["appearance_clip_count"] = feature_paths.size();
  write_stage_report(g.out, "eval_appearance.json", bundle, cfg.seed);
  std::cout << "eval-appearance: " << value << " over " << feature_paths.size() << " clips\n";
}

void run_report(const GlobalOpts& g, const ctrw::Config& cfg) {
  Json merged;
  const fs::path out_dir(g.out);
  const std::vector<std::string> stage_files = {"filter.json",       "calibrate.json",
                                                "analyze.json",      "balance.json",
                                                "eval_traj.json",    "eval_motion.json",
                                                "eval_appearance.json"};
  int merged_count = 0;
  for (const std::string& name : stage_files) {
    const fs::path path = out_dir / name;
    if (!fs::exists(path)) continue;
    const Json doc = ctrw::parse_report(ctrw::read_file_bytes(path));
    for (const char* key : {"calibration", "profile", "balance"}) {
      if (doc.contains(key)) merged[key] = doc[key];
    }
    if (doc.contains("metrics")) {
      for (const auto& [key, value] : doc["metrics"].items()) {
        merged["metrics"][key] = value;
      }
    }
    ++merged_count;
  }
  if (merged_count == 0) {
    throw ctrw::ValidationError("report: no stage outputs found in " + out_dir.string());
  }
  write_stage_report(g.out, "report.json", merged, cfg.seed);
  std::cout << "report: merged " << merged_count << " stage outputs into "
            << (out_dir / "report.json").string() << "\n";
}

int emit_error(int code, const char* kind, const std::string& message) {
  nlohmann::ordered_json e;
  e["error"] = {{"code", code}, {"kind", kind}, {"message", message}};
  std::cerr << e.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camera trajectory curation and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts global;
  std::uint64_t seed_flag = 0;
  app.add_option("--config", global.config_path, "config file (JSON)");
  CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "RNG seed (overrides config)");
  app.add_option("--out", global.out, "output directory")->capture_default_str();
  app.add_option("--jobs", global.jobs, "worker threads (default: logical CPUs)");

  std::string manifest_path;
  std::string profiles_path;
  std::string est_path, gt_path;
  std::string traj_dir;
  std::vector<std::string> feature_paths;
  double min_flow_flag = 0.0;
  int cap_flag = 0;
  bool cap_auto = false;
  int keyframes_flag = 0;
  int stride_flag = 0;
  int latent_h = 0, latent_w = 0;
  bool point_offset_rays = false;
  bool no_rot_align = false;

  CLI::App* ingest = app.add_subcommand("ingest", "validate a manifest and every referenced file");
  ingest->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();

  CLI::App* filter = app.add_subcommand("filter", "select videos by background-flow camera movement");
  filter->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();
  CLI::Option* min_flow_opt =
      filter->add_option("--min-flow", min_flow_flag, "background flow threshold (pixels/frame)");

  CLI::App* calibrate = app.add_subcommand("calibrate", "metric-scale calibration against depth pairs");
  calibrate->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();
  CLI::Option* keyframes_opt =
      calibrate->add_option("--keyframes", keyframes_flag, "depth keyframes per video");

  CLI::App* analyze = app.add_subcommand("analyze", "keypoint/segment/turn trajectory profiles");
  analyze->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();
  analyze->add_option("--traj-dir", traj_dir, "read <dir>/<video_id>.txt instead of manifest paths");

  CLI::App* balance = app.add_subcommand("balance", "cap per-category counts by importance");
  balance->add_option("--profiles", profiles_path, "analyze output (default <out>/analyze.json)");
  CLI::Option* cap_opt = balance->add_option("--cap", cap_flag, "max trajectories per category");
  CLI::Option* cap_auto_opt =
      balance->add_flag("--cap-auto", cap_auto, "cap at the median per-category count");

  CLI::App* plucker = app.add_subcommand("plucker", "emit per-frame ray-embedding rasters");
  plucker->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();
  plucker->add_option("--latent-h", latent_h, "output grid height")->required();
  plucker->add_option("--latent-w", latent_w, "output grid width")->required();
  CLI::Option* plucker_stride_opt =
      plucker->add_option("--stride", stride_flag, "temporal pose downsampling");
  plucker->add_flag("--point-offset-rays", point_offset_rays,
                    "form rays as direction plus camera center before normalizing");

  CLI::App* eval_traj = app.add_subcommand("eval-traj", "ATE-aligned TransErr/RotErr");
  eval_traj->add_option("--est", est_path, "estimated trajectory")->required();
  eval_traj->add_option("--gt", gt_path, "ground-truth trajectory")->required();
  CLI::Option* eval_stride_opt =
      eval_traj->add_option("--stride", stride_flag, "downsample both trajectories first");
  eval_traj->add_flag("--no-rot-align", no_rot_align,
                      "compare orientations without the alignment rotation");

  double angular_focal_px = 0.0;
  CLI::App* eval_motion = app.add_subcommand("eval-motion", "foreground motion strength");
  eval_motion->add_option("--manifest", manifest_path, "dataset manifest (JSON)")->required();
  eval_motion->add_option("--focal", angular_focal_px,
                          "also report atan(|flow|/focal) in degrees (focal in pixels)");

  CLI::App* eval_appearance =
      app.add_subcommand("eval-appearance", "cosine consistency over ordered clip features");
  eval_appearance->add_option("--features", feature_paths, "clip feature rasters, in order")
      ->required()
      ->expected(-2);

  CLI::App* report = app.add_subcommand("report", "merge stage outputs into one report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error(1, "usage", e.what());
  }

  try {
    if (seed_opt->count() > 0) global.seed = seed_flag;
    ctrw::Config cfg = resolve_config(global);
    if (min_flow_opt->count() > 0) cfg.min_flow = min_flow_flag;
    if (keyframes_opt->count() > 0) cfg.keyframes = keyframes_flag;
    if (plucker_stride_opt->count() > 0 || eval_stride_opt->count() > 0) cfg.stride = stride_flag;
    if (cap_opt->count() > 0) cfg.balance_cap = cap_flag;
    if (cap_auto_opt->count() > 0) cfg.balance_cap = std::nullopt;
    if (cfg.keyframes < 1) throw ctrw::ValidationError("keyframes must be >= 1");
    if (cfg.stride < 1) throw ctrw::ValidationError("stride must be >= 1");
    if (cfg.balance_cap.has_value() && *cfg.balance_cap < 1) {
      throw ctrw::ValidationError("cap must be >= 1");
    }

    if (*ingest) run_ingest(global, cfg, manifest_path);
    if (*filter) run_filter(global, cfg, manifest_path);
    if (*calibrate) run_calibrate(global, cfg, manifest_path);
    if (*analyze) run_analyze(global, cfg, manifest_path, traj_dir);
    if (*balance) run_balance(global, cfg, profiles_path);
    if (*plucker) run_plucker(global, cfg, manifest_path, latent_h, latent_w, point_offset_rays);
    // eval-traj compares frame-matched trajectories, so it only downsamples on request
    if (*eval_traj) {
      const int eval_stride = eval_stride_opt->count() > 0 ? stride_flag : 1;
      run_eval_traj(global, cfg, est_path, gt_path, eval_stride, no_rot_align);
    }
    if (*eval_motion) run_eval_motion(global, cfg, manifest_path, angular_focal_px);
    if (*eval_appearance) run_eval_appearance(global, cfg, feature_paths);
    if (*report) run_report(global, cfg);
    return 0;
  } catch (const ctrw::ValidationError& e) {
    return emit_error(2, "validation", e.what());
  } catch (const ctrw::NumericError& e) {
    return emit_error(3, "numeric", e.what());
  } catch (const nlohmann::json::exception& e) {
    return emit_error(2, "validation", e.what());
  } catch (const fs::filesystem_error& e) {
    return emit_error(2, "validation", e.what());
  } catch (const std::exception& e) {
    return emit_error(3, "internal", e.what());
  }
}
