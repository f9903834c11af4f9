#pragma once

// DepthImage binary format, little endian:
//
//   offset  size  field
//   0       4     magic "OCDI"
//   4       2     version (1)
//   6       2     stride
//   8       4     width
//   12      4     height
//   16      4     d_max, IEEE-754 float32
//   20      2*N   depth plane, uint16 = round(depth * 256), 0 = invalid
//   ..      B     foreground plane, 1 bit per pixel, row-major, LSB first
//   ..      B     background plane, same packing
//
// with N = width * height and B = ceil(N / 8). Source point indices are not
// stored; a decoded image has source = -1 everywhere.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ocdepth/depth_pipeline.hpp"

namespace ocdepth {

inline constexpr double kDepthScale = 256.0;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_bits(std::vector<std::uint8_t>& out, const Mask& m) {
  const std::size_t n = m.size();
  std::vector<std::uint8_t> packed((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (m[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  out.insert(out.end(), packed.begin(), packed.end());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_depth_image(const DepthImage& img) {
  std::vector<std::uint8_t> out{'O', 'C', 'D', 'I'};
  detail::put_u16(out, 1);
  detail::put_u16(out, static_cast<std::uint16_t>(img.stride));
  detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
  const float dmax = static_cast<float>(img.d_max);
  std::uint32_t bits;
  std::memcpy(&bits, &dmax, 4);
  detail::put_u32(out, bits);
  for (std::size_t i = 0; i < img.depth.size(); ++i) {
    std::uint16_t q = 0;
    if (img.valid[i]) {
      const double scaled = std::round(img.depth[i] * kDepthScale);
      q = static_cast<std::uint16_t>(std::clamp(scaled, 1.0, 65535.0));
    }
    detail::put_u16(out, q);
  }
  detail::put_bits(out, img.fg);
  detail::put_bits(out, img.bg);
  return out;
}

inline DepthImage decode_depth_image(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 20 || std::memcmp(buf.data(), "OCDI", 4) != 0)
    throw FormatError("not a depth image (bad magic)", 0);
  if (detail::get_u16(buf.data() + 4) != 1) throw FormatError("unsupported depth image version", 0);
  const int stride = detail::get_u16(buf.data() + 6);
  const std::uint32_t w = detail::get_u32(buf.data() + 8);
  const std::uint32_t h = detail::get_u32(buf.data() + 12);
  const std::uint32_t dbits = detail::get_u32(buf.data() + 16);
  float dmax;
  std::memcpy(&dmax, &dbits, 4);
  if (w > 1u << 15 || h > 1u << 15 || stride < 1) throw FormatError("implausible depth image header", 0);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::size_t packed = (n + 7) / 8;
  if (buf.size() != 20 + 2 * n + 2 * packed) throw FormatError("depth image size mismatch", 0);

  DepthImage img(static_cast<int>(w), static_cast<int>(h), stride, dmax);
  const std::uint8_t* p = buf.data() + 20;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t q = detail::get_u16(p + 2 * i);
    if (q != 0) {
      img.depth[i] = q / kDepthScale;
      img.valid[i] = 1;
    }
  }
  const std::uint8_t* fg = p + 2 * n;
  const std::uint8_t* bg = fg + packed;
  for (std::size_t i = 0; i < n; ++i) {
    // masks outside valid pixels are dropped
    img.fg[i] = img.valid[i] & ((fg[i / 8] >> (i % 8)) & 1u);
    img.bg[i] = img.valid[i] & !img.fg[i] & ((bg[i / 8] >> (i % 8)) & 1u);
  }
  return img;
}

}  // namespace ocdepth
