#include "guidedflow/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace guidedflow::io {

namespace {

// --------------------------------------------------------------------------
// Little-endian scalar packing for the .flo payload.

void put_u32le(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(bytes[offset]) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
}

void put_f32le(Bytes& out, float v) { put_u32le(out, std::bit_cast<std::uint32_t>(v)); }

float get_f32le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return std::bit_cast<float>(get_u32le(bytes, offset));
}

constexpr float kFloMagic = 202021.25f;

// --------------------------------------------------------------------------
// 16-bit PNG codec over memory buffers.

struct Png16 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint16_t> data;  // row-major, interleaved channels

  std::uint16_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct MemReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) png_error(png, "read past end of buffer");
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_mem_flush(png_structp) {}

void png_quiet_warning(png_structp, png_const_charp) {}

Png16 decode_png16(std::span<const std::uint8_t> bytes, int expected_channels) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw FormatError("not a PNG stream");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           png_quiet_warning);
  if (!png) throw IOError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IOError("png_create_info_struct failed");
  }

  Png16 img;
  MemReader reader{bytes.data(), bytes.size(), 0};
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG stream");
  }

  png_set_read_fn(png, &reader, png_mem_read);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  const int interlace = png_get_interlace_type(png, info);

  int channels = 0;
  if (color == PNG_COLOR_TYPE_GRAY) channels = 1;
  else if (color == PNG_COLOR_TYPE_RGB) channels = 3;

  if (depth != 16 || channels != expected_channels || interlace != PNG_INTERLACE_NONE ||
      w == 0 || h == 0 || w > 65535 || h > 65535) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG is not the expected 16-bit layout");
  }

  const std::size_t stride = static_cast<std::size_t>(w) * channels * 2;
  raw.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * stride;

  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.data.resize(static_cast<std::size_t>(w) * h * channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    // PNG stores 16-bit samples most-significant byte first.
    img.data[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return img;
}

Bytes encode_png16(int width, int height, int channels, const std::vector<std::uint16_t>& data) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                            png_quiet_warning);
  if (!png) throw IOError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IOError("png_create_info_struct failed");
  }

  Bytes out;
  const std::size_t stride = static_cast<std::size_t>(width) * channels * 2;
  std::vector<std::uint8_t> raw(stride * height);
  std::vector<png_bytep> rows(height);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IOError("PNG encode failed");
  }

  png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
  const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, 16, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  for (std::size_t i = 0; i < data.size(); ++i) {
    raw[2 * i] = static_cast<std::uint8_t>(data[i] >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(data[i] & 0xFF);
  }
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * stride;

  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<double> parse_doubles(std::span<const std::uint8_t> bytes, std::size_t count,
                                  const char* what) {
  std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::istringstream in(text);
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> values[i]) || !std::isfinite(values[i]))
      throw FormatError(std::string(what) + ": expected numeric matrix");
  }
  std::string trailing;
  if (in >> trailing) throw FormatError(std::string(what) + ": trailing tokens");
  return values;
}

void append_number(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

}  // namespace

// --------------------------------------------------------------------------
// .flo

FlowField read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("flo: truncated header");
  if (get_f32le(bytes, 0) != kFloMagic) throw FormatError("flo: bad magic");
  const auto w = static_cast<std::int32_t>(get_u32le(bytes, 4));
  const auto h = static_cast<std::int32_t>(get_u32le(bytes, 8));
  if (w <= 0 || h <= 0 || w > 65535 || h > 65535) throw FormatError("flo: bad dimensions");
  const std::size_t expected = 12 + static_cast<std::size_t>(w) * h * 8;
  if (bytes.size() != expected) throw FormatError("flo: payload size mismatch");

  FlowField field = FlowField::zeros(w, h, true);
  std::size_t off = 12;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      field.u(y, x) = get_f32le(bytes, off);
      field.v(y, x) = get_f32le(bytes, off + 4);
      off += 8;
    }
  return field;
}

Bytes write_flo(const FlowField& field) {
  const FlowField canon = canonicalize(field);
  Bytes out;
  out.reserve(12 + static_cast<std::size_t>(canon.width()) * canon.height() * 8);
  put_f32le(out, kFloMagic);
  put_u32le(out, static_cast<std::uint32_t>(canon.width()));
  put_u32le(out, static_cast<std::uint32_t>(canon.height()));
  for (int y = 0; y < canon.height(); ++y)
    for (int x = 0; x < canon.width(); ++x) {
      put_f32le(out, canon.u(y, x));
      put_f32le(out, canon.v(y, x));
    }
  return out;
}

// --------------------------------------------------------------------------
// KITTI flow PNG

std::array<std::uint16_t, 3> kitti_encode_pixel(float u, float v, bool valid) {
  if (!valid) return {32768, 32768, 0};
  const long long qu = std::llround(static_cast<double>(u) * 64.0) + 32768;
  const long long qv = std::llround(static_cast<double>(v) * 64.0) + 32768;
  if (qu < 0 || qu > 65535 || qv < 0 || qv > 65535)
    throw RangeError("flow out of KITTI PNG range (+-511.98 px)");
  return {static_cast<std::uint16_t>(qu), static_cast<std::uint16_t>(qv), 1};
}

FlowField read_kitti_png(std::span<const std::uint8_t> bytes) {
  const Png16 img = decode_png16(bytes, 3);
  FlowField field = FlowField::zeros(img.width, img.height, false);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.at(y, x, 2) != 0) {
        field.valid(y, x) = true;
        field.u(y, x) = static_cast<float>((img.at(y, x, 0) - 32768.0) / 64.0);
        field.v(y, x) = static_cast<float>((img.at(y, x, 1) - 32768.0) / 64.0);
      }
    }
  return field;
}

Bytes write_kitti_png(const FlowField& field) {
  const int w = field.width();
  const int h = field.height();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto px = kitti_encode_pixel(field.u(y, x), field.v(y, x), field.valid(y, x));
      const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
      data[i] = px[0];
      data[i + 1] = px[1];
      data[i + 2] = px[2];
    }
  return encode_png16(w, h, 3, data);
}

// --------------------------------------------------------------------------
// Masks, depth, images

SegmentationMask read_mask(std::span<const std::uint8_t> bytes) {
  const Png16 img = decode_png16(bytes, 1);
  SegmentationMask mask = SegmentationMask::background(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) mask.id(y, x) = img.at(y, x, 0);
  return mask;
}

Bytes write_mask(const SegmentationMask& mask) {
  std::vector<std::uint16_t> data(mask.id.data(), mask.id.data() + mask.id.size());
  return encode_png16(mask.width(), mask.height(), 1, data);
}

DepthMap read_depth(std::span<const std::uint8_t> bytes) {
  const Png16 img = decode_png16(bytes, 1);
  DepthMap depth = DepthMap::invalid(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint16_t v = img.at(y, x, 0);
      if (v != 0) {
        depth.valid(y, x) = true;
        depth.z(y, x) = v / 256.0;
      }
    }
  return depth;
}

Bytes write_depth(const DepthMap& depth) {
  const int w = depth.width();
  const int h = depth.height();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!depth.valid(y, x)) continue;
      const long long q = std::llround(depth.z(y, x) * 256.0);
      if (q < 0 || q > 65535) throw RangeError("depth out of 16-bit range");
      data[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint16_t>(q);
    }
  return encode_png16(w, h, 1, data);
}

ImageGray read_image(std::span<const std::uint8_t> bytes) {
  const Png16 img = decode_png16(bytes, 1);
  ImageGray out = ImageGray::constant(img.width, img.height, 0.0f);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.intensity(y, x) = static_cast<float>(img.at(y, x, 0) / 65535.0);
  return out;
}

Bytes write_image(const ImageGray& image) {
  const int w = image.width();
  const int h = image.height();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = std::clamp(static_cast<double>(image.intensity(y, x)), 0.0, 1.0);
      data[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::uint16_t>(std::llround(v * 65535.0));
    }
  return encode_png16(w, h, 1, data);
}

// --------------------------------------------------------------------------
// Pose / intrinsics text

RigidPose read_pose(std::span<const std::uint8_t> bytes) {
  const auto v = parse_doubles(bytes, 12, "pose");
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r(row, col) = v[row * 4 + col];
    t(row) = v[row * 4 + 3];
  }
  // Nearest orthogonal projection absorbs text rounding; anything farther
  // than 1e-6 from a proper rotation is rejected.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d ortho = svd.matrixU() * svd.matrixV().transpose();
  if (ortho.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    ortho = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  if ((r - ortho).cwiseAbs().maxCoeff() > 1e-6)
    throw FormatError("pose: rotation not orthonormal within 1e-6");
  try {
    return RigidPose(ortho, t);
  } catch (const ConfigError&) {
    throw FormatError("pose: rotation rejected");
  }
}

Bytes write_pose(const RigidPose& pose) {
  char buf[400];
  std::string text;
  for (int row = 0; row < 3; ++row) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", pose.rotation(row, 0),
                  pose.rotation(row, 1), pose.rotation(row, 2), pose.translation(row));
    text += buf;
  }
  return Bytes(text.begin(), text.end());
}

CameraIntrinsics read_intrinsics(std::span<const std::uint8_t> bytes) {
  const auto v = parse_doubles(bytes, 9, "intrinsics");
  if (!(v[0] > 0.0) || !(v[4] > 0.0)) throw FormatError("intrinsics: focal lengths must be > 0");
  if (std::abs(v[1]) > 1e-9 || std::abs(v[3]) > 1e-9 || std::abs(v[6]) > 1e-9 ||
      std::abs(v[7]) > 1e-9 || std::abs(v[8] - 1.0) > 1e-9)
    throw FormatError("intrinsics: expected [fx 0 cx; 0 fy cy; 0 0 1]");
  return CameraIntrinsics{v[0], v[4], v[2], v[5]};
}

Bytes write_intrinsics(const CameraIntrinsics& intrinsics) {
  char buf[200];
  std::string text;
  std::snprintf(buf, sizeof(buf), "%.17g 0 %.17g\n0 %.17g %.17g\n0 0 1\n", intrinsics.fx,
                intrinsics.cx, intrinsics.fy, intrinsics.cy);
  text += buf;
  return Bytes(text.begin(), text.end());
}

// --------------------------------------------------------------------------
// CSV

std::string write_report_csv(const std::vector<ReportRow>& rows,
                             const std::vector<std::string>& provenance) {
  std::string out;
  for (const auto& line : provenance) out += "# " + line + "\n";
  out += "image,epe,fl,density\n";
  for (const auto& row : rows) {
    out += row.image;
    out += ',';
    append_number(out, row.epe);
    out += ',';
    append_number(out, row.fl);
    out += ',';
    append_number(out, row.density);
    out += '\n';
  }
  return out;
}

// --------------------------------------------------------------------------
// Files

Bytes load_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IOError("read failed for " + path.string());
  return bytes;
}

void save_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IOError("write failed for " + path.string());
}

void save_text(const std::filesystem::path& path, const std::string& text) {
  save_bytes(path, std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace guidedflow::io
