// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "support.hpp"

namespace rawmap {
namespace {

using testing::random_rgb;
using testing::ref_angle;

TEST(AngularError, KnownAngles) {
  EXPECT_NEAR(angular_error({1, 2, 3}, {2, 4, 6}), 0.0, 1e-4);
  EXPECT_NEAR(angular_error({1, 0, 0}, {0, 1, 0}), 90.0, 1e-6);
  EXPECT_NEAR(angular_error({1, 1, 0}, {1, 0, 0}), 45.0, 1e-6);
  EXPECT_NEAR(angular_error({1, 0, 0}, {-1, 0, 0}), 180.0, 1e-6);
}

TEST(AngularError, ZeroNormThrows) {
  EXPECT_THROW(angular_error({0, 0, 0}, {1, 1, 1}), DomainError);
  EXPECT_THROW(angular_error({1, 1, 1}, {0, 0, 0}), DomainError);
}

TEST(AngularError, CollinearIsExactlyZeroNotClampFloor) {
  // The clamped arccos would bottom out at ~0.0256 deg here.
  EXPECT_LT(angular_error({0.3, 0.5, 0.7}, {0.6, 1.0, 1.4}), 1e-6);
  EXPECT_LT(angular_error({0.2, 0.4, 0.1}, {0.2, 0.4, 0.1}), 1e-6);
}

TEST(AngularError, MatchesReferenceArccos) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Rgb a = random_rgb(rng, -1, 1);
    const Rgb b = random_rgb(rng, -1, 1);
    const double ref = ref_angle(a, b);
    if (ref < 0.1 || ref > 179.9) continue;
    EXPECT_NEAR(angular_error(a, b), ref, 1e-7);
  }
}

TEST(AngularError, ScaleSymmetryIdentityOverRandomPairs) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int i = 0; i < 20000; ++i) {
    const Rgb a = random_rgb(rng, 0.001, 1);
    const Rgb b = random_rgb(rng, 0.001, 1);
    const double e = angular_error(a, b);
    EXPECT_NEAR(angular_error(scaled(a, scale(rng)), scaled(b, scale(rng))), e, 1e-6);
    EXPECT_EQ(angular_error(b, a), e);
    EXPECT_NEAR(angular_error(a, a), 0.0, 1e-4);
  }
}

TEST(Chromaticity, Ratios) {
  const auto c = to_chromaticity(Rgb{2, 4, 1});
  EXPECT_DOUBLE_EQ(c.rg, 0.5);
  EXPECT_DOUBLE_EQ(c.bg, 0.25);
  const auto n = to_chromaticity(Rgb{1, 1, 1});
  EXPECT_DOUBLE_EQ(n.rg, 1.0);
  EXPECT_DOUBLE_EQ(n.bg, 1.0);
  EXPECT_THROW(to_chromaticity(Rgb{0.5, 1e-12, 0.5}), DegenerateError);
}

TEST(ApplyTransform, IdentityDiagonalAndClamp) {
  std::mt19937_64 rng(3);
  const RawImage img = testing::random_image(rng, 5, 4);
  EXPECT_EQ(apply_transform(Transform3::identity(), img).data, img.data);

  RawImage one(1, 1, 3);
  one.set_pixel(0, {0.4, 0.4, 0.4});
  const Rgb p = apply_transform(Transform3::diagonal(2, 1, 0.5), one).pixel(0);
  EXPECT_NEAR(p[0], 0.8, 1e-7);
  EXPECT_NEAR(p[1], 0.4, 1e-7);
  EXPECT_NEAR(p[2], 0.2, 1e-7);

  RawImage red(1, 1, 3);
  red.set_pixel(0, {1, 0, 0});
  Transform3 neg = Transform3::identity();
  neg(0, 0) = -1;
  EXPECT_EQ(apply_transform(neg, red).pixel(0)[0], 0.0);
}

TEST(ApplyTransform, RejectsSingleChannel) {
  RawImage mono(2, 2, 1);
  EXPECT_THROW(apply_transform(Transform3::identity(), mono), ShapeError);
}

TEST(DiagonalTransform, Examples) {
  EXPECT_EQ(diagonal_transform({{1, 1, 1}}, {{2, 1, 0.5}}), Transform3::diagonal(2, 1, 0.5));
  const Rgb w = diagonal_transform({{0.5, 1, 2}}, {{1, 1, 1}}).apply({0.5, 1, 2});
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  EXPECT_DOUBLE_EQ(w[2], 1.0);
  const Illuminant l{{0.3, 0.7, 0.9}};
  EXPECT_EQ(diagonal_transform(l, l), Transform3::identity());
  EXPECT_THROW(diagonal_transform({{0, 1, 1}}, l), DomainError);
}

TEST(DiagonalTransform, ExactOnNeutrals) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    const Illuminant u{random_rgb(rng, 0.05, 1)};
    const Illuminant v{random_rgb(rng, 0.05, 1)};
    const double alpha = std::uniform_real_distribution<double>(0.1, 3)(rng);
    const Rgb out = diagonal_transform(u, v).apply(scaled(u.rgb, alpha));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], alpha * v.rgb[c], 1e-12);
  }
}

// Independent least-squares solve through Eigen's QR.
Transform3 eigen_lsq(const std::vector<Rgb>& src, const std::vector<Rgb>& dst) {
  Eigen::MatrixXd a(src.size(), 3);
  Eigen::MatrixXd b(dst.size(), 3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      a(static_cast<Eigen::Index>(i), c) = src[i][c];
      b(static_cast<Eigen::Index>(i), c) = dst[i][c];
    }
  }
  const Eigen::Matrix3d x = a.colPivHouseholderQr().solve(b);  // dst^T = x^T src^T
  Transform3 t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t(r, c) = x(c, r);
  }
  return t.normalized();
}

TEST(FitTransformLsq, IdentityAndExactRecovery) {
  std::mt19937_64 rng(5);
  std::vector<Rgb> src;
  for (int i = 0; i < 20; ++i) src.push_back(random_rgb(rng, 0.05, 1));
  const Transform3 id = fit_transform_lsq(src, src);
  EXPECT_LT(testing::max_abs_diff(id, Transform3::identity().normalized()), 1e-12);

  for (int trial = 0; trial < 50; ++trial) {
    const Transform3 k = testing::random_transform(rng);
    std::vector<Rgb> dst;
    for (const auto& s : src) dst.push_back(scaled(k.apply(s), 2.5));
    EXPECT_LT(testing::max_abs_diff(fit_transform_lsq(src, dst), k.normalized()), 1e-8);
  }
}

TEST(FitTransformLsq, NoisyDataMatchesIndependentSolve) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.01);
  const Transform3 k = testing::random_transform(rng);
  std::vector<Rgb> src;
  std::vector<Rgb> dst;
  for (int i = 0; i < 200; ++i) {
    src.push_back(random_rgb(rng, 0.05, 1));
    Rgb d = k.apply(src.back());
    for (double& v : d) v += noise(rng);
    dst.push_back(d);
  }
  const Transform3 t = fit_transform_lsq(src, dst);
  EXPECT_LT(testing::max_abs_diff(t, eigen_lsq(src, dst)), 1e-10);
  // Within the generator after scale alignment.
  const Transform3 kn = k.normalized();
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(t.m[i] * k.frobenius_norm(), kn.m[i] * k.frobenius_norm(), 0.05);
}

TEST(FitTransformLsq, Errors) {
  const std::vector<Rgb> two{{1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(fit_transform_lsq(two, two), ParameterError);
  const std::vector<Rgb> flat{{1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 1, 0}};
  EXPECT_THROW(fit_transform_lsq(flat, flat), SingularError);
  const std::vector<Rgb> three{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_THROW(fit_transform_lsq(three, two), ParameterError);
}

TEST(Masks, SaturationThresholds) {
  RawImage img(3, 1, 3);
  img.set_pixel(0, {0.995, 0.5, 0.5});
  img.set_pixel(1, {0.5, 0.5, 0.5});
  img.set_pixel(2, {0.009, 0.5, 0.5});
  const auto m = saturation_mask(img);
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Masks, NeutralExamples) {
  RawImage img(4, 1, 3);
  img.set_pixel(0, {2, 2, 2});
  img.set_pixel(1, {1, 0, 0});
  img.set_pixel(2, {1.0, 1.0, 1.07});
  img.set_pixel(3, {0, 0, 0});
  const auto m = neutral_mask(img, Illuminant{{1, 1, 1}});
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_NEAR(angular_error({1.0, 1.0, 1.07}, {1, 1, 1}), 1.846914693, 1e-8);
}

// Brute-force recomputation from the raw float planes, no library helpers.
TEST(Masks, MatchBruteForceOnRandomImages) {
  std::mt19937_64 rng(8);
  std::size_t mismatches = 0;
  for (int n = 0; n < 50; ++n) {
    RawImage img = testing::random_image(rng, 17, 13, -0.005, 1.005);
    for (auto& v : img.data) v = std::max(v, 0.0f);
    // Some pixels collinear with the light, some black.
    const Illuminant l{random_rgb(rng, 0.2, 1)};
    for (std::size_t i = 0; i < img.pixel_count(); i += 7) img.set_pixel(i, scaled(l.rgb, 0.5));
    img.set_pixel(3, {0, 0, 0});
    const auto sat = saturation_mask(img);
    const auto ntr = neutral_mask(img, l);
    const auto both = sat & ntr;
    const std::size_t np = img.pixel_count();
    for (std::size_t i = 0; i < np; ++i) {
      const double r = img.data[i], g = img.data[np + i], b = img.data[2 * np + i];
      const bool ok = r >= 0.01 && g >= 0.01 && b >= 0.01 && r <= 0.99 && g <= 0.99 && b <= 0.99;
      const double len = std::sqrt(r * r + g * g + b * b);
      const bool non_neutral = len > 0 && ref_angle({r, g, b}, l.rgb) >= 3.5;
      mismatches += (sat.bits[i] != ok) + (ntr.bits[i] != non_neutral) + (both.bits[i] != (ok && non_neutral));
    }
  }
  EXPECT_EQ(mismatches, 0u);
}

}  // namespace
}  // namespace rawmap
