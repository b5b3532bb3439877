// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rawmap/errors.hpp"

namespace rawmap {

using Rgb = std::array<double, 3>;

inline double dot(const Rgb& a, const Rgb& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Rgb& a) { return std::sqrt(dot(a, a)); }
inline Rgb cross(const Rgb& a, const Rgb& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline Rgb scaled(const Rgb& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

/// Sensor RAW response to a perfect white surface under some light.
struct Illuminant {
  Rgb rgb{1.0, 1.0, 1.0};
  std::string id;

  void validate() const {
    for (double v : rgb) {
      if (!std::isfinite(v) || v < 0.0) throw DegenerateError("illuminant '" + id + "' has a negative or non-finite channel");
    }
    if (rgb[0] <= 0.0 && rgb[1] <= 0.0 && rgb[2] <= 0.0) {
      throw DegenerateError("illuminant '" + id + "' is black");
    }
  }

  /// Copy scaled so the largest channel is 1.
  [[nodiscard]] Illuminant max_normalized() const {
    validate();
    const double m = std::max({rgb[0], rgb[1], rgb[2]});
    return {scaled(rgb, 1.0 / m), id};
  }
};

/// [R/G, B/G] coordinates.
struct Chromaticity {
  double rg = 1.0;
  double bg = 1.0;
};

inline double distance(const Chromaticity& a, const Chromaticity& b) {
  return std::hypot(a.rg - b.rg, a.bg - b.bg);
}

/// 3x3 real matrix, row-major.
struct Transform3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Transform3 identity() { return {}; }
  static Transform3 diagonal(double a, double b, double c) { return {{a, 0, 0, 0, b, 0, 0, 0, c}}; }

  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }
  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }

  [[nodiscard]] Rgb apply(const Rgb& p) const {
    return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2], m[3] * p[0] + m[4] * p[1] + m[5] * p[2],
            m[6] * p[0] + m[7] * p[1] + m[8] * p[2]};
  }

  [[nodiscard]] double frobenius_norm() const {
    double s = 0.0;
    for (double v : m) s += v * v;
    return std::sqrt(s);
  }

  [[nodiscard]] Transform3 normalized() const {
    const double n = frobenius_norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateError("cannot normalize a zero or non-finite matrix");
    Transform3 out;
    for (std::size_t i = 0; i < 9; ++i) out.m[i] = m[i] / n;
    return out;
  }

  void validate() const {
    for (double v : m) {
      if (!std::isfinite(v)) throw NumericError("transform has non-finite entries");
    }
    if (!(frobenius_norm() > 0.0)) throw DegenerateError("transform is the zero matrix");
  }

  friend Transform3 operator*(const Transform3& a, const Transform3& b) {
    Transform3 out;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
      }
    }
    return out;
  }

  friend bool operator==(const Transform3&, const Transform3&) = default;
};

/// Planar, channel-major float image normalized so white level = 1.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;
  std::string camera_id;
  std::string illuminant_id;

  RawImage() = default;
  RawImage(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

  [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  [[nodiscard]] float at(int c, std::size_t pixel) const { return data[c * pixel_count() + pixel]; }
  float& at(int c, std::size_t pixel) { return data[c * pixel_count() + pixel]; }

  [[nodiscard]] Rgb pixel(std::size_t i) const {
    const std::size_t n = pixel_count();
    return {data[i], data[n + i], data[2 * n + i]};
  }
  void set_pixel(std::size_t i, const Rgb& v) {
    const std::size_t n = pixel_count();
    data[i] = static_cast<float>(v[0]);
    data[n + i] = static_cast<float>(v[1]);
    data[2 * n + i] = static_cast<float>(v[2]);
  }

  /// All pixels as double triplets (3-channel images only).
  [[nodiscard]] std::vector<Rgb> pixels() const {
    require_rgb("pixels");
    std::vector<Rgb> out(pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixel(i);
    return out;
  }

  void require_rgb(const char* what) const {
    if (channels != 3) throw ShapeError(std::string(what) + ": expected a 3-channel image");
  }

  void validate() const {
    if (width <= 0 || height <= 0) throw ShapeError("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw ShapeError("image must have 1 or 3 channels");
    if (data.size() != pixel_count() * static_cast<std::size_t>(channels)) {
      throw ShapeError("image buffer length does not match width x height x channels");
    }
    for (float v : data) {
      if (!std::isfinite(v) || v < 0.0f) throw DataError("image samples must be finite and non-negative");
    }
  }
};

/// One bit per pixel; true = pixel participates in the metric.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  PixelMask() = default;
  PixelMask(int w, int h, bool value)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }

  friend PixelMask operator&(const PixelMask& a, const PixelMask& b) {
    if (a.width != b.width || a.height != b.height) throw ShapeError("mask dimensions differ");
    PixelMask out = a;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
    return out;
  }
};

// The cosine is clamped to [-1 + eps, 1 - eps] where arccos has a usable
// derivative; gradients are zero outside that band.
inline constexpr double kCosineClamp = 1e-7;
inline constexpr double kChromaticityGuard = 1e-9;
inline constexpr double kSaturationLow = 0.01;
inline constexpr double kSaturationHigh = 0.99;
inline constexpr double kNeutralThresholdDeg = 3.5;
// Id of the daylight reference light every training split contains.
inline constexpr std::string_view kD65Id = "D65";
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Angle between two RGB rays in degrees. Symmetric and invariant to positive
/// scaling of either argument.
///
/// Evaluated as atan2(|a x b|, a.b), which equals the clamped arccos of the
/// cosine wherever the clamp is inactive but stays exact near 0 and 180
/// degrees, so collinear rays report 0 rather than the clamp floor.
inline double angular_error(const Rgb& a, const Rgb& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("angular_error: zero-norm input");
  // Unit vectors keep the cross product well scaled for tiny or huge inputs.
  const Rgb ua = scaled(a, 1.0 / na);
  const Rgb ub = scaled(b, 1.0 / nb);
  return std::atan2(norm(cross(ua, ub)), dot(ua, ub)) * kRadToDeg;
}

inline Chromaticity to_chromaticity(const Rgb& rgb) {
  if (!(rgb[1] > kChromaticityGuard)) throw DegenerateError("to_chromaticity: green channel is (near) zero");
  return {rgb[0] / rgb[1], rgb[2] / rgb[1]};
}
inline Chromaticity to_chromaticity(const Illuminant& l) { return to_chromaticity(l.rgb); }

/// Multiplies every pixel by `t`; negative results are clamped to 0.
inline RawImage apply_transform(const Transform3& t, const RawImage& img) {
  img.require_rgb("apply_transform");
  RawImage out = img;
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    Rgb p = t.apply(img.pixel(i));
    for (double& v : p) v = std::max(v, 0.0);
    out.set_pixel(i, p);
  }
  return out;
}

/// Von Kries correction: divide by the source light, multiply by the target.
inline Transform3 diagonal_transform(const Illuminant& src, const Illuminant& dst) {
  for (int c = 0; c < 3; ++c) {
    if (!(src.rgb[c] > 0.0)) throw DomainError("diagonal_transform: source illuminant has a zero channel");
  }
  return Transform3::diagonal(dst.rgb[0] / src.rgb[0], dst.rgb[1] / src.rgb[1], dst.rgb[2] / src.rgb[2]);
}

/// Least-squares 3x3 map T minimizing sum |T src_i - dst_i|^2 via the normal
/// equations T = (sum dst src^T)(sum src src^T)^-1, Frobenius-normalized.
inline Transform3 fit_transform_lsq(std::span<const Rgb> src, std::span<const Rgb> dst) {
  if (src.size() != dst.size()) throw ParameterError("fit_transform_lsq: sample lists differ in length");
  if (src.size() < 3) throw ParameterError("fit_transform_lsq: need at least 3 samples");

  std::array<double, 9> ss{};  // sum src src^T
  std::array<double, 9> ds{};  // sum dst src^T
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        ss[r * 3 + c] += src[i][r] * src[i][c];
        ds[r * 3 + c] += dst[i][r] * src[i][c];
      }
    }
  }

  // Adjugate inverse of the symmetric Gram matrix.
  const auto& a = ss;
  std::array<double, 9> inv{
      a[4] * a[8] - a[5] * a[7], a[2] * a[7] - a[1] * a[8], a[1] * a[5] - a[2] * a[4],
      a[5] * a[6] - a[3] * a[8], a[0] * a[8] - a[2] * a[6], a[2] * a[3] - a[0] * a[5],
      a[3] * a[7] - a[4] * a[6], a[1] * a[6] - a[0] * a[7], a[0] * a[4] - a[1] * a[3]};
  const double det = a[0] * inv[0] + a[1] * inv[3] + a[2] * inv[6];
  const double scale = (a[0] + a[4] + a[8]) / 3.0;
  if (!(std::abs(det) > 1e-12 * scale * scale * scale) || !std::isfinite(det)) {
    throw SingularError("fit_transform_lsq: source samples are rank deficient");
  }
  for (double& v : inv) v /= det;

  Transform3 t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      t(r, c) = ds[r * 3 + 0] * inv[0 * 3 + c] + ds[r * 3 + 1] * inv[1 * 3 + c] + ds[r * 3 + 2] * inv[2 * 3 + c];
    }
  }
  return t.normalized();
}

inline bool is_saturated(const Rgb& p) {
  return p[0] < kSaturationLow || p[1] < kSaturationLow || p[2] < kSaturationLow || p[0] > kSaturationHigh ||
         p[1] > kSaturationHigh || p[2] > kSaturationHigh;
}

/// Excludes pixels with any channel below 1% or above 99% of the range.
inline PixelMask saturation_mask(const RawImage& target) {
  target.require_rgb("saturation_mask");
  PixelMask mask(target.width, target.height, false);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = is_saturated(target.pixel(i)) ? 0 : 1;
  return mask;
}

inline bool is_neutral(const Rgb& p, const Rgb& illum) {
  if (!(norm(p) > 0.0)) return true;
  return angular_error(p, illum) < kNeutralThresholdDeg;
}

/// true = non-neutral. A pixel is neutral when its ray lies within 3.5 degrees
/// of the target illuminant; zero pixels count as neutral.
inline PixelMask neutral_mask(const RawImage& target, const Illuminant& target_illum) {
  target.require_rgb("neutral_mask");
  PixelMask mask(target.width, target.height, false);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    mask.bits[i] = is_neutral(target.pixel(i), target_illum.rgb) ? 0 : 1;
  }
  return mask;
}

}  // namespace rawmap
