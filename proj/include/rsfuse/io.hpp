#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsfuse/core_math.hpp"
#include "rsfuse/fusion.hpp"
#include "rsfuse/gyro_field.hpp"
#include "rsfuse/homography_fit.hpp"
#include "rsfuse/metrics.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

// ---------------------------------------------------------------------------
// Gyro log (text, version header "gyro_v1,rad_s", lines "timestamp_ns,wx,wy,wz")

struct GyroLog {
  std::vector<GyroSample> samples;
  std::string units = "rad_s";
  std::string clock_id = "monotonic";
};

GyroLog parse_gyro_log(const std::string& text);
std::string write_gyro_log(const GyroLog& log);

// ---------------------------------------------------------------------------
// Frame index (text, header "frames_v1", lines "id,timestamp_ns,path")

struct FrameEntry {
  int id = 0;
  std::int64_t timestamp_ns = 0;
  std::string path;
};

struct FrameIndex {
  std::vector<FrameEntry> frames;
};

FrameIndex parse_frame_index(const std::string& text);
std::string write_frame_index(const FrameIndex& index);

// ---------------------------------------------------------------------------
// Flow files (binary: float magic 202021.25, int32 width, int32 height,
// row-major interleaved float32 u,v; values with magnitude > 1e9 mark
// unlabeled pixels)

struct FloData {
  FlowField flow;
  MaskGrid valid;
};

FloData read_flo(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_flo(const FlowField& f,
                                    const MaskGrid* valid = nullptr);

// ---------------------------------------------------------------------------
// Sparse correspondences (text, header "pts_v1", lines "xa,ya,xb,yb")

std::vector<Correspondence> read_correspondences(const std::string& text);
std::string write_correspondences(std::span<const Correspondence> pairs);

// ---------------------------------------------------------------------------
// Raster images: binary PGM (P5) for grayscale, PPM (P6) for RGB, 8-bit.
// Pixel values map linearly to [0, 1].

Grid decode_pgm(const std::vector<std::uint8_t>& bytes);
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const Grid& img);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

/// Loads .pgm or .ppm by magic; RGB converts through BT.601 luma.
Grid load_image_gray(const std::string& path);
void save_image_gray(const std::string& path, const Grid& img);
void save_image_rgb(const std::string& path, const RgbImage& img);

/// BT.601 luma, computed on the 8-bit quantized values.
Grid luma(const RgbImage& img);

// ---------------------------------------------------------------------------
// Flow color wheel: hue = atan2(v, u), saturation = |flow| / max_mag clamped
// to 1, value = 1. Zero flow renders white.

RgbImage flow_to_color(const FlowField& f,
                       std::optional<double> max_mag = std::nullopt);

// ---------------------------------------------------------------------------
// Project configuration (JSON; strict, unknown keys rejected by name)

struct ProjectConfig {
  CameraIntrinsics intrinsics;
  RollingShutterModel rolling_shutter;
  AxisRemap axis_remap = AxisRemap::Identity();
  std::int64_t time_offset_ns = 0;
  BetaLadder beta;
  double gamma_neg = -0.2, gamma_pos = 0.2;
  double lambda = 10.0;
  int pyramid_levels = 5;
  ResidualFlowParams residual_flow;

  void validate() const;
};

ProjectConfig read_config(const std::string& text);
std::string write_config(const ProjectConfig& cfg);

std::string config_fingerprint(const ProjectConfig& cfg);

// ---------------------------------------------------------------------------
// Homography array file (JSON)

std::string write_homography_array(const HomographyArray& arr);
HomographyArray read_homography_array(const std::string& text);

// ---------------------------------------------------------------------------
// Evaluation reports

/// Line-delimited key=value record.
std::string write_report_text(const EvalReport& report);
/// Machine-readable JSON record.
std::string write_report_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// File helpers

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path,
                      const std::vector<std::uint8_t>& bytes);
void write_file_text(const std::string& path, const std::string& text);

/// Symmetric padding up to the next multiple of `multiple` in each dimension.
Grid pad_to_multiple(const Grid& img, int multiple);
FlowField crop_field(const FlowField& f, int width, int height);

}  // namespace rsfuse
