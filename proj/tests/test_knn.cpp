// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#include <gtest/gtest.h>

#include "support.hpp"

namespace rawmap {
namespace {

TEST(KnnLookup, InverseDistanceWeights) {
  const std::vector<Chromaticity> pts{{0.0, 0.0}, {4.0, 0.0}, {10.0, 10.0}};
  const auto n = knn_lookup(pts, {1.0, 0.0}, 2);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0].index, 0u);
  EXPECT_EQ(n[1].index, 1u);
  EXPECT_EQ(n[0].weight, 0.75);
  EXPECT_EQ(n[1].weight, 0.25);
  EXPECT_EQ(n[0].distance, 1.0);
  EXPECT_EQ(n[1].distance, 3.0);

  const auto one = knn_lookup(pts, {9.0, 9.0}, 1);
  EXPECT_EQ(one[0].index, 2u);
  EXPECT_EQ(one[0].weight, 1.0);
}

TEST(KnnLookup, ExactMatchTakesAllWeight) {
  const std::vector<Chromaticity> pts{{0.5, 0.5}, {0.6, 0.5}};
  const auto n = knn_lookup(pts, {0.6, 0.5}, 2);
  EXPECT_EQ(n[0].index, 1u);
  EXPECT_EQ(n[0].weight, 1.0);
  EXPECT_EQ(n[1].weight, 0.0);
}

TEST(KnnLookup, Errors) {
  EXPECT_THROW(knn_lookup({}, {1, 1}, 1), ParameterError);
  const std::vector<Chromaticity> pts{{0.5, 0.5}};
  EXPECT_THROW(knn_lookup(pts, {1, 1}, 2), ParameterError);
  EXPECT_THROW(knn_lookup(pts, {1, 1}, 0), ParameterError);
}

// A bank over synthetic lights with arbitrary but known matrices.
TransformBank synthetic_bank(std::mt19937_64& rng, std::size_t n) {
  std::vector<Illuminant> ls{{{0.6, 1.0, 0.7}, "D65"}};
  for (std::size_t i = 1; i < n; ++i) ls.push_back({testing::random_rgb(rng, 0.2, 1.0), "L" + std::to_string(i)});
  std::vector<Transform3> ts;
  for (std::size_t i = 0; i < n * n; ++i) ts.push_back(testing::random_transform(rng).normalized());
  return TransformBank(ls, ts);
}

TEST(KnnTransform, TrainingLightsReproduceStoredMatrix) {
  std::mt19937_64 rng(2);
  const auto bank = synthetic_bank(rng, 8);
  for (std::size_t u = 0; u < bank.size(); ++u) {
    for (std::size_t v = 0; v < bank.size(); ++v) {
      const auto& src = bank.illuminants()[u];
      const auto& dst = bank.illuminants()[v];
      EXPECT_EQ(knn_transform(bank, src, dst, KnnVariant::k1NN1NN), bank.at(u, v));
      EXPECT_LT(testing::max_abs_diff(knn_transform(bank, src, dst, KnnVariant::k1NNKNN), bank.at(u, v)), 1e-15);
      EXPECT_LT(testing::max_abs_diff(knn_transform(bank, src, dst, KnnVariant::kKNN1NN), bank.at(u, v)), 1e-15);
      const auto d65 = bank.index_of("D65");
      const Transform3 composed = (bank.at(d65, v) * bank.at(u, d65)).normalized();
      EXPECT_LT(testing::max_abs_diff(knn_transform(bank, src, dst, KnnVariant::kKNND65KNN), composed), 1e-15);
    }
  }
}

TEST(KnnTransform, NearestLookupAndWeightedAverage) {
  std::vector<Illuminant> ls{{{0.5, 1.0, 0.5}, "D65"}, {{0.7, 1.0, 0.5}, "a"}, {{0.9, 1.0, 0.5}, "b"}};
  std::mt19937_64 rng(3);
  std::vector<Transform3> ts;
  for (int i = 0; i < 9; ++i) ts.push_back(testing::random_transform(rng).normalized());
  const TransformBank bank(ls, ts);

  const Illuminant src{{0.52, 1.0, 0.5}};
  EXPECT_EQ(knn_transform(bank, src, {{0.74, 1.0, 0.5}}, KnnVariant::k1NN1NN), bank.at(0, 1));
  EXPECT_EQ(knn_transform(bank, src, {{0.86, 1.0, 0.5}}, KnnVariant::k1NN1NN), bank.at(0, 2));

  // Target a quarter of the way from "a" to "b": weights 3/4 and 1/4.
  const Illuminant dst{{0.75, 1.0, 0.5}};
  Transform3 avg;
  for (std::size_t i = 0; i < 9; ++i) avg.m[i] = 0.75 * bank.at(0, 1).m[i] + 0.25 * bank.at(0, 2).m[i];
  EXPECT_LT(testing::max_abs_diff(knn_transform(bank, src, dst, KnnVariant::k1NNKNN), avg.normalized()), 1e-12);
}

TEST(KnnTransform, AveragingIsConvexBeforeNormalization) {
  std::mt19937_64 rng(4);
  const auto bank = synthetic_bank(rng, 12);
  for (int q = 0; q < 200; ++q) {
    const Illuminant src{testing::random_rgb(rng, 0.2, 1)};
    const Illuminant dst{testing::random_rgb(rng, 0.2, 1)};
    const auto u = knn_lookup(bank.chromaticities(), to_chromaticity(src), 1)[0].index;
    const auto nv = knn_lookup(bank.chromaticities(), to_chromaticity(dst), 2);
    const auto& a = bank.at(u, nv[0].index);
    const auto& b = bank.at(u, nv[1].index);
    Transform3 raw;
    for (std::size_t i = 0; i < 9; ++i) {
      raw.m[i] = nv[0].weight * a.m[i] + nv[1].weight * b.m[i];
      EXPECT_GE(raw.m[i], std::min(a.m[i], b.m[i]) - 1e-15);
      EXPECT_LE(raw.m[i], std::max(a.m[i], b.m[i]) + 1e-15);
    }
    EXPECT_LT(testing::max_abs_diff(knn_transform(bank, src, dst, KnnVariant::k1NNKNN), raw.normalized()), 1e-12);
  }
}

TEST(KnnTransform, MissingAnchorIsAnError) {
  const TransformBank bank({{{0.5, 1, 0.5}, "x"}}, {Transform3::identity()});
  EXPECT_THROW(knn_transform(bank, {{0.5, 1, 0.5}}, {{0.5, 1, 0.5}}, KnnVariant::kKNND65KNN, 1), DataError);
}

TEST(KnnVariant, Names) {
  for (auto v : kAllKnnVariants) EXPECT_EQ(knn_variant_from_string(to_string(v)), v);
  EXPECT_EQ(knn_variant_from_string("2NN-D65-2NN"), KnnVariant::kKNND65KNN);
  EXPECT_THROW(knn_variant_from_string("3NN"), ParameterError);
}

TEST(TransformBank, DeltaWorldBankIsDiagonalAndConsistent) {
  std::mt19937_64 rng(5);
  std::vector<SpectralCurve> pal;
  for (int i = 0; i < 30; ++i) pal.push_back(random_reflectance(rng, "r"));
  const auto scene = make_block_scene("s", 24, 24, 4, pal, rng);
  const auto cam = make_camera("delta");
  std::vector<Illuminant> ls;
  std::vector<SamplesPtr> imgs;
  for (int i = 0; i < 6; ++i) {
    const auto spd = i == 0 ? blackbody_spd(6500, "D65") : random_blackbody(rng, "L" + std::to_string(i));
    ls.push_back(illuminant_rgb(spd, cam));
    imgs.push_back(std::make_shared<const std::vector<Rgb>>(render(scene, spd, cam, peak_exposure(scene, spd, cam)).pixels()));
  }
  const auto bank = build_transform_bank(ls, imgs);
  for (std::size_t u = 0; u < ls.size(); ++u) {
    for (std::size_t v = 0; v < ls.size(); ++v) {
      const auto expect = diagonal_transform(ls[u], ls[v]).normalized();
      EXPECT_LT(testing::max_abs_diff(bank.at(u, v), expect), 1e-5);
    }
    EXPECT_LT(testing::max_abs_diff(bank.at(u, u), Transform3::identity().normalized()), 1e-6);
  }
  // Composition through D65 equals the direct map when every transform is diagonal.
  for (std::size_t u = 0; u < ls.size(); ++u) {
    for (std::size_t v = 0; v < ls.size(); ++v) {
      EXPECT_LT(testing::max_abs_diff(knn_transform(bank, ls[u], ls[v], KnnVariant::kKNND65KNN), bank.at(u, v)), 1e-5);
    }
  }
}

TEST(TransformBank, FallsBackWhenPixelsAreScarce) {
  const std::vector<Rgb> src{{0.5, 0.5, 0.5}, {1.0, 1.0, 1.0}};
  const Illuminant a{{1, 1, 1}};
  const Illuminant b{{0.5, 1, 0.25}};
  EXPECT_EQ(fit_pair_transform(src, src, a, b), diagonal_transform(a, b).normalized());
}

TEST(Serialization, BanksRoundTrip) {
  std::mt19937_64 rng(6);
  const auto bank = synthetic_bank(rng, 5);
  const auto back = bank_from_json(nlohmann::ordered_json::parse(bank_to_json(bank, "cam").dump()));
  ASSERT_EQ(back.size(), bank.size());
  for (std::size_t u = 0; u < 5; ++u) {
    EXPECT_EQ(back.illuminants()[u].rgb, bank.illuminants()[u].rgb);
    for (std::size_t v = 0; v < 5; ++v) EXPECT_EQ(back.at(u, v), bank.at(u, v));
  }
  auto broken = bank_to_json(bank, "cam");
  broken["transforms"].erase(3);
  EXPECT_THROW(bank_from_json(broken), DataError);

  const SensorBank sb(bank.illuminants(), std::vector<Transform3>(5, Transform3::identity()));
  const auto sj = sensor_bank_to_json(sb, "a", "b");
  EXPECT_THROW(bank_from_json(sj), DataError);
  const auto sback = sensor_bank_from_json(sj);
  EXPECT_EQ(sback.size(), 5u);
  EXPECT_EQ(knn_sensor_transform(sback, bank.illuminants()[2]), Transform3::identity().normalized());
}

}  // namespace
}  // namespace rawmap
