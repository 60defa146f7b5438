#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "guidedflow/types.hpp"

namespace guidedflow::io {

using Bytes = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Middlebury .flo: float magic 202021.25, int32 width, int32 height, then
// interleaved float32 (u, v) row-major, all little-endian. The format has no
// validity channel, so readers mark every pixel valid and writers store
// canonical zeros at invalid pixels. write -> read round-trips bit-exactly
// for finite values.

FlowField read_flo(std::span<const std::uint8_t> bytes);
Bytes write_flo(const FlowField& field);

// ---------------------------------------------------------------------------
// KITTI flow PNG: 16-bit RGB, u = (ch1 - 2^15)/64, v = (ch2 - 2^15)/64,
// valid = (ch3 != 0). Representable flows are multiples of 1/64 within
// roughly +-511.98 px; write throws RangeError outside that.

FlowField read_kitti_png(std::span<const std::uint8_t> bytes);
Bytes write_kitti_png(const FlowField& field);

/// Quantization used by write_kitti_png, exposed for direct checks.
std::array<std::uint16_t, 3> kitti_encode_pixel(float u, float v, bool valid);

// ---------------------------------------------------------------------------
// Remaining ingestion formats: 16-bit single-channel PNGs for instance masks
// and depth (z = value/256 m, 0 = invalid), 16-bit grayscale PNG for images
// (intensity = value/65535), and plain-text row-major matrices for
// intrinsics (3x3) and poses (3x4, [R|t]).

SegmentationMask read_mask(std::span<const std::uint8_t> bytes);
Bytes write_mask(const SegmentationMask& mask);

DepthMap read_depth(std::span<const std::uint8_t> bytes);
Bytes write_depth(const DepthMap& depth);

ImageGray read_image(std::span<const std::uint8_t> bytes);
Bytes write_image(const ImageGray& image);

/// Parsed rotations are projected to the nearest orthogonal matrix; inputs
/// farther than 1e-6 from that projection are rejected.
RigidPose read_pose(std::span<const std::uint8_t> bytes);
Bytes write_pose(const RigidPose& pose);

CameraIntrinsics read_intrinsics(std::span<const std::uint8_t> bytes);
Bytes write_intrinsics(const CameraIntrinsics& intrinsics);

// ---------------------------------------------------------------------------
// Report CSV. Header is `image,epe,fl,density`; optional provenance lines are
// emitted first as `# key=value` comments.

struct ReportRow {
  std::string image;
  double epe = 0.0;
  double fl = 0.0;
  double density = 0.0;
};

std::string write_report_csv(const std::vector<ReportRow>& rows,
                             const std::vector<std::string>& provenance = {});

// ---------------------------------------------------------------------------
// File helpers.

Bytes load_bytes(const std::filesystem::path& path);
void save_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void save_text(const std::filesystem::path& path, const std::string& text);

}  // namespace guidedflow::io
