// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <cmath>
#include <random>

#include "rawmap/rawmap.hpp"

namespace rawmap::testing {

// Reference angle via long-double arccos of the cosine, no clamp. Good to
// ~1e-6 deg away from 0 and 180.
inline double ref_angle(const Rgb& a, const Rgb& b) {
  long double d = 0, na = 0, nb = 0;
  for (int i = 0; i < 3; ++i) {
    d += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  long double c = d / std::sqrt(na * nb);
  if (c > 1) c = 1;
  if (c < -1) c = -1;
  return static_cast<double>(std::acos(c) * 180.0L / 3.141592653589793238462643383279L);
}

inline Rgb random_rgb(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline RawImage random_image(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
  RawImage img(w, h, 3);
  std::uniform_real_distribution<float> u(static_cast<float>(lo), static_cast<float>(hi));
  for (auto& v : img.data) v = u(rng);
  return img;
}

inline Transform3 random_transform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-0.3, 0.3);
  std::uniform_real_distribution<double> diag(0.5, 1.5);
  Transform3 t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t(r, c) = r == c ? diag(rng) : off(rng);
  }
  return t;
}

inline double max_abs_diff(const Transform3& a, const Transform3& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < 9; ++i) m = std::max(m, std::abs(a.m[i] - b.m[i]));
  return m;
}

}  // namespace rawmap::testing
