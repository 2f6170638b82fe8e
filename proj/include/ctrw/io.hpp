#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ctrw/error.hpp"
#include "ctrw/geometry.hpp"
#include "ctrw/metrics.hpp"

namespace ctrw {

// ---------------------------------------------------------------------------
// Trajectory text format
//
//   # comment                     (ignored; "# calibrated" sets the flag)
//   width height                  (header, pixels)
//   frame_index fx fy cx cy r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3
//
// One frame per line, 17 whitespace-separated numbers, [R|t] row-major,
// world-to-camera. Doubles are written with 17 significant digits so the
// round trip is exact.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

inline double parse_double(std::string_view s, std::size_t line_no, const char* what) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": malformed " + what +
                          " '" + std::string(s) + "'");
  }
  return value;
}

inline std::int64_t parse_int(std::string_view s, std::size_t line_no, const char* what) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": malformed " + what +
                          " '" + std::string(s) + "'");
  }
  return value;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

inline Trajectory parse_trajectory(std::string_view text) {
  Trajectory traj;
  bool have_header = false;
  int width = 0;
  int height = 0;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::string_view trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '#') {
      if (detail::trim(trimmed.substr(1)) == "calibrated") traj.scale_calibrated = true;
      continue;
    }

    const std::vector<std::string_view> fields = detail::split_fields(trimmed);
    if (!have_header) {
      if (fields.size() != 2) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": header must be 'width height', got " +
                              std::to_string(fields.size()) + " fields");
      }
      width = static_cast<int>(detail::parse_int(fields[0], line_no, "width"));
      height = static_cast<int>(detail::parse_int(fields[1], line_no, "height"));
      if (width < 0 || height < 0) {
        throw ValidationError("line " + std::to_string(line_no) + ": negative image size");
      }
      have_header = true;
      continue;
    }

    if (fields.size() != 17) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 17 fields, got " +
                            std::to_string(fields.size()));
    }
    TrajectoryFrame frame;
    frame.frame_index = detail::parse_int(fields[0], line_no, "frame_index");
    if (!traj.frames.empty() && frame.frame_index <= traj.frames.back().frame_index) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": frame_index not strictly increasing");
    }
    frame.intrinsics.fx = detail::parse_double(fields[1], line_no, "fx");
    frame.intrinsics.fy = detail::parse_double(fields[2], line_no, "fy");
    frame.intrinsics.cx = detail::parse_double(fields[3], line_no, "cx");
    frame.intrinsics.cy = detail::parse_double(fields[4], line_no, "cy");
    frame.intrinsics.width = width;
    frame.intrinsics.height = height;

    Eigen::Matrix3d r;
    Eigen::Vector3d t;
    for (int row = 0; row < 3; ++row) {
      const std::size_t base = 5 + static_cast<std::size_t>(row) * 4;
      for (int col = 0; col < 3; ++col) {
        r(row, col) = detail::parse_double(fields[base + static_cast<std::size_t>(col)],
                                           line_no, "rotation entry");
      }
      t(row) = detail::parse_double(fields[base + 3], line_no, "translation entry");
    }
    try {
      validate_intrinsics(frame.intrinsics);
      frame.pose = make_pose(r, t);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    traj.frames.push_back(frame);
  }

  if (!have_header) throw ValidationError("trajectory text: missing 'width height' header");
  return traj;
}

inline std::string write_trajectory(const Trajectory& traj) {
  int width = 0;
  int height = 0;
  if (!traj.frames.empty()) {
    width = traj.frames.front().intrinsics.width;
    height = traj.frames.front().intrinsics.height;
    for (const TrajectoryFrame& f : traj.frames) {
      if (f.intrinsics.width != width || f.intrinsics.height != height) {
        throw ValidationError("write_trajectory: frames disagree on image size");
      }
    }
  }

  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d %d\n", width, height);
  out += buf;
  if (traj.scale_calibrated) out += "# calibrated\n";
  for (const TrajectoryFrame& f : traj.frames) {
    const Eigen::Matrix3d& r = f.pose.R;
    const Eigen::Vector3d& t = f.pose.t;
    std::snprintf(buf, sizeof(buf),
                  "%lld %.17g %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g\n",
                  static_cast<long long>(f.frame_index), f.intrinsics.fx, f.intrinsics.fy,
                  f.intrinsics.cx, f.intrinsics.cy, r(0, 0), r(0, 1), r(0, 2), t(0),
                  r(1, 0), r(1, 1), r(1, 2), t(1), r(2, 0), r(2, 1), r(2, 2), t(2));
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raster container (.ctrw)
//
// 16-byte little-endian header: magic "CTRW", kind u8, dtype u8, reserved
// u16, h u32, w u32; then a row-major payload. Kinds: depth (f32 h*w), flow
// (f32 h*w*2 interleaved u,v), mask (u8 h*w, values 0/1), features (f32
// frames*d with h=frames, w=d), plucker (f32 h*w*6 interleaved).
// ---------------------------------------------------------------------------

enum class RasterKind : std::uint8_t {
  depth = 1,
  flow = 2,
  mask = 3,
  features = 4,
  plucker = 5,
};

enum class RasterDtype : std::uint8_t {
  f32 = 1,
  u8 = 2,
};

struct RasterHeader {
  RasterKind kind = RasterKind::depth;
  RasterDtype dtype = RasterDtype::f32;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
};

inline constexpr char kRasterMagic[4] = {'C', 'T', 'R', 'W'};
inline constexpr std::size_t kRasterHeaderSize = 16;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::size_t payload_elements(const RasterHeader& h) {
  const std::size_t hw = static_cast<std::size_t>(h.h) * h.w;
  switch (h.kind) {
    case RasterKind::depth:
    case RasterKind::mask:
    case RasterKind::features:
      return hw;
    case RasterKind::flow:
      return hw * 2;
    case RasterKind::plucker:
      return hw * 6;
  }
  throw ValidationError("raster: unknown kind");
}

inline RasterDtype expected_dtype(RasterKind kind) {
  return kind == RasterKind::mask ? RasterDtype::u8 : RasterDtype::f32;
}

inline const char* kind_name(RasterKind kind) {
  switch (kind) {
    case RasterKind::depth: return "depth";
    case RasterKind::flow: return "flow";
    case RasterKind::mask: return "mask";
    case RasterKind::features: return "features";
    case RasterKind::plucker: return "plucker";
  }
  return "?";
}

}  // namespace detail

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw ValidationError("read failed: " + path.string());
  return bytes;
}

// All writers go through here: write to a temp file in the same directory,
// then rename over the target, so reruns never expose partial outputs.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) throw ValidationError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ValidationError("rename failed: " + tmp.string() + " -> " + path.string());
}

inline std::string encode_raster_header(const RasterHeader& header) {
  std::string out;
  out.reserve(kRasterHeaderSize);
  out.append(kRasterMagic, 4);
  out.push_back(static_cast<char>(header.kind));
  out.push_back(static_cast<char>(header.dtype));
  detail::put_u16(out, 0);  // reserved
  detail::put_u32(out, header.h);
  detail::put_u32(out, header.w);
  return out;
}

inline RasterHeader decode_raster_header(std::string_view bytes, const std::string& where) {
  if (bytes.size() < kRasterHeaderSize) {
    throw ValidationError(where + ": truncated header (" + std::to_string(bytes.size()) +
                          " of " + std::to_string(kRasterHeaderSize) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kRasterMagic, 4) != 0) {
    throw ValidationError(where + ": bad magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  RasterHeader header;
  const std::uint8_t kind = p[4];
  if (kind < 1 || kind > 5) {
    throw ValidationError(where + ": unknown kind code " + std::to_string(kind));
  }
  header.kind = static_cast<RasterKind>(kind);
  const std::uint8_t dtype = p[5];
  if (dtype != 1 && dtype != 2) {
    throw ValidationError(where + ": unknown dtype code " + std::to_string(dtype));
  }
  header.dtype = static_cast<RasterDtype>(dtype);
  header.h = detail::get_u32(p + 8);
  header.w = detail::get_u32(p + 12);
  if (header.dtype != detail::expected_dtype(header.kind)) {
    throw ValidationError(where + ": dtype mismatch for kind " +
                          detail::kind_name(header.kind));
  }
  return header;
}

namespace detail {

// Decodes header + full payload as f32 values (mask handled separately).
inline std::pair<RasterHeader, std::vector<float>> decode_f32_raster(
    std::string_view bytes, RasterKind want, const std::string& where) {
  const RasterHeader header = decode_raster_header(bytes, where);
  if (header.kind != want) {
    throw ValidationError(where + ": expected kind " + kind_name(want) + ", found " +
                          kind_name(header.kind));
  }
  const std::size_t elements = payload_elements(header);
  const std::size_t expected = kRasterHeaderSize + elements * 4;
  if (bytes.size() != expected) {
    throw ValidationError(where + ": truncated payload (expected " +
                          std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()) + ")");
  }
  std::vector<float> values(elements);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kRasterHeaderSize;
  for (std::size_t i = 0; i < elements; ++i) values[i] = get_f32(p + i * 4);
  return {header, std::move(values)};
}

}  // namespace detail

inline std::string encode_depth_raster(const Eigen::ArrayXXf& depth) {
  RasterHeader header{RasterKind::depth, RasterDtype::f32,
                      static_cast<std::uint32_t>(depth.rows()),
                      static_cast<std::uint32_t>(depth.cols())};
  std::string out = encode_raster_header(header);
  for (Eigen::Index r = 0; r < depth.rows(); ++r) {
    for (Eigen::Index c = 0; c < depth.cols(); ++c) detail::put_f32(out, depth(r, c));
  }
  return out;
}

// NaN depth entries are legal (no depth there); they become invalid pixels
// when paired, not errors.
inline Eigen::ArrayXXf decode_depth_raster(std::string_view bytes, const std::string& where) {
  auto [header, values] = detail::decode_f32_raster(bytes, RasterKind::depth, where);
  Eigen::ArrayXXf depth(header.h, header.w);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < depth.rows(); ++r) {
    for (Eigen::Index c = 0; c < depth.cols(); ++c) depth(r, c) = values[i++];
  }
  return depth;
}

inline std::string encode_flow_raster(const FlowField& flow) {
  RasterHeader header{RasterKind::flow, RasterDtype::f32,
                      static_cast<std::uint32_t>(flow.u.rows()),
                      static_cast<std::uint32_t>(flow.u.cols())};
  if (flow.u.rows() != flow.v.rows() || flow.u.cols() != flow.v.cols()) {
    throw ValidationError("flow raster: u/v shape mismatch");
  }
  std::string out = encode_raster_header(header);
  for (Eigen::Index r = 0; r < flow.u.rows(); ++r) {
    for (Eigen::Index c = 0; c < flow.u.cols(); ++c) {
      detail::put_f32(out, flow.u(r, c));
      detail::put_f32(out, flow.v(r, c));
    }
  }
  return out;
}

inline FlowField decode_flow_raster(std::string_view bytes, const std::string& where) {
  auto [header, values] = detail::decode_f32_raster(bytes, RasterKind::flow, where);
  FlowField flow;
  flow.u.resize(header.h, header.w);
  flow.v.resize(header.h, header.w);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < flow.u.rows(); ++r) {
    for (Eigen::Index c = 0; c < flow.u.cols(); ++c) {
      flow.u(r, c) = values[i++];
      flow.v(r, c) = values[i++];
    }
  }
  if (!flow.u.isFinite().all() || !flow.v.isFinite().all()) {
    throw ValidationError(where + ": non-finite flow values");
  }
  return flow;
}

inline std::string encode_mask_raster(const SegMask& mask) {
  RasterHeader header{RasterKind::mask, RasterDtype::u8,
                      static_cast<std::uint32_t>(mask.mask.rows()),
                      static_cast<std::uint32_t>(mask.mask.cols())};
  std::string out = encode_raster_header(header);
  for (Eigen::Index r = 0; r < mask.mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.mask.cols(); ++c) {
      out.push_back(mask.mask(r, c) ? '\x01' : '\x00');
    }
  }
  return out;
}

inline SegMask decode_mask_raster(std::string_view bytes, const std::string& where) {
  const RasterHeader header = decode_raster_header(bytes, where);
  if (header.kind != RasterKind::mask) {
    throw ValidationError(where + ": expected kind mask, found " +
                          detail::kind_name(header.kind));
  }
  const std::size_t elements = detail::payload_elements(header);
  const std::size_t expected = kRasterHeaderSize + elements;
  if (bytes.size() != expected) {
    throw ValidationError(where + ": truncated payload (expected " +
                          std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes.size()) + ")");
  }
  SegMask mask;
  mask.mask.resize(header.h, header.w);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kRasterHeaderSize;
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < mask.mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.mask.cols(); ++c) {
      const unsigned char v = p[i++];
      if (v > 1) {
        throw ValidationError(where + ": mask value " + std::to_string(v) + " is not 0/1");
      }
      mask.mask(r, c) = v == 1;
    }
  }
  return mask;
}

inline std::string encode_features_raster(const Eigen::MatrixXf& features) {
  RasterHeader header{RasterKind::features, RasterDtype::f32,
                      static_cast<std::uint32_t>(features.rows()),
                      static_cast<std::uint32_t>(features.cols())};
  std::string out = encode_raster_header(header);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) detail::put_f32(out, features(r, c));
  }
  return out;
}

inline Eigen::MatrixXf decode_features_raster(std::string_view bytes, const std::string& where) {
  auto [header, values] = detail::decode_f32_raster(bytes, RasterKind::features, where);
  Eigen::MatrixXf features(header.h, header.w);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) features(r, c) = values[i++];
  }
  if (!features.allFinite()) throw ValidationError(where + ": non-finite feature values");
  return features;
}

inline std::string encode_plucker_raster(const PluckerMap& map) {
  RasterHeader header{RasterKind::plucker, RasterDtype::f32,
                      static_cast<std::uint32_t>(map.h), static_cast<std::uint32_t>(map.w)};
  std::string out = encode_raster_header(header);
  for (double v : map.data) detail::put_f32(out, static_cast<float>(v));
  return out;
}

inline PluckerMap decode_plucker_raster(std::string_view bytes, const std::string& where) {
  auto [header, values] = detail::decode_f32_raster(bytes, RasterKind::plucker, where);
  PluckerMap map;
  map.h = static_cast<int>(header.h);
  map.w = static_cast<int>(header.w);
  map.data.assign(values.begin(), values.end());
  return map;
}

// Path-level helpers.
inline RasterHeader read_raster_header(const std::filesystem::path& path) {
  return decode_raster_header(read_file_bytes(path), path.string());
}

inline Eigen::ArrayXXf read_depth_raster(const std::filesystem::path& path) {
  return decode_depth_raster(read_file_bytes(path), path.string());
}

inline FlowField read_flow_raster(const std::filesystem::path& path) {
  return decode_flow_raster(read_file_bytes(path), path.string());
}

inline SegMask read_mask_raster(const std::filesystem::path& path) {
  return decode_mask_raster(read_file_bytes(path), path.string());
}

inline Eigen::MatrixXf read_features_raster(const std::filesystem::path& path) {
  return decode_features_raster(read_file_bytes(path), path.string());
}

inline PluckerMap read_plucker_raster(const std::filesystem::path& path) {
  return decode_plucker_raster(read_file_bytes(path), path.string());
}

inline void write_depth_raster(const std::filesystem::path& path, const Eigen::ArrayXXf& d) {
  write_file_atomic(path, encode_depth_raster(d));
}

inline void write_flow_raster(const std::filesystem::path& path, const FlowField& f) {
  write_file_atomic(path, encode_flow_raster(f));
}

inline void write_mask_raster(const std::filesystem::path& path, const SegMask& m) {
  write_file_atomic(path, encode_mask_raster(m));
}

inline void write_features_raster(const std::filesystem::path& path, const Eigen::MatrixXf& f) {
  write_file_atomic(path, encode_features_raster(f));
}

inline void write_plucker_raster(const std::filesystem::path& path, const PluckerMap& m) {
  write_file_atomic(path, encode_plucker_raster(m));
}

}  // namespace ctrw
