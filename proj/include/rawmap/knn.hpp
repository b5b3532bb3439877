// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/train.hpp"

namespace rawmap {

inline constexpr std::string_view kAnchorIlluminant = kD65Id;
inline constexpr double kExactMatchDistance = 1e-12;

struct Neighbor {
  std::size_t index = 0;
  double weight = 0.0;
  double distance = 0.0;
};

/// k nearest chromaticities with normalized inverse-distance weights. An exact
/// match (distance < 1e-12) takes all the weight. Neighbours come back in
/// increasing distance, ties broken by index.
inline std::vector<Neighbor> knn_lookup(std::span<const Chromaticity> points, const Chromaticity& query, int k) {
  if (points.empty()) throw ParameterError("knn_lookup: empty bank");
  if (k < 1 || static_cast<std::size_t>(k) > points.size()) throw ParameterError("knn_lookup: k must lie in [1, bank size]");
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d.emplace_back(distance(points[i], query), i);
  std::partial_sort(d.begin(), d.begin() + k, d.end());

  std::vector<Neighbor> out(static_cast<std::size_t>(k));
  if (d[0].first < kExactMatchDistance) {
    for (int j = 0; j < k; ++j) out[j] = {d[j].second, j == 0 ? 1.0 : 0.0, d[j].first};
    return out;
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) total += 1.0 / d[j].first;
  for (int j = 0; j < k; ++j) out[j] = {d[j].second, (1.0 / d[j].first) / total, d[j].first};
  return out;
}

/// Precomputed least-squares transforms between every ordered pair of
/// training illuminants of one camera.
class TransformBank {
 public:
  TransformBank() = default;
  TransformBank(std::vector<Illuminant> illums, std::vector<Transform3> transforms)
      : illums_(std::move(illums)), transforms_(std::move(transforms)) {
    if (transforms_.size() != illums_.size() * illums_.size()) throw DataError("transform bank is incomplete");
    chroma_.reserve(illums_.size());
    for (const auto& l : illums_) chroma_.push_back(to_chromaticity(l));
  }

  [[nodiscard]] std::size_t size() const { return illums_.size(); }
  [[nodiscard]] const std::vector<Illuminant>& illuminants() const { return illums_; }
  [[nodiscard]] const std::vector<Chromaticity>& chromaticities() const { return chroma_; }
  [[nodiscard]] const Transform3& at(std::size_t u, std::size_t v) const { return transforms_.at(u * illums_.size() + v); }

  [[nodiscard]] std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < illums_.size(); ++i) {
      if (illums_[i].id == id) return i;
    }
    throw DataError("illuminant '" + std::string(id) + "' is not in the bank");
  }

 private:
  std::vector<Illuminant> illums_;
  std::vector<Chromaticity> chroma_;
  std::vector<Transform3> transforms_;
};

/// Least-squares map between two renders of one scene. Uses pixels unsaturated
/// in both; when those are too few or rank-deficient, pixels that are merely
/// unclipped in both; failing that, the diagonal map between the lights.
inline Transform3 fit_pair_transform(const std::vector<Rgb>& src, const std::vector<Rgb>& dst, const Illuminant& src_illum,
                                     const Illuminant& dst_illum) {
  std::vector<Rgb> a;
  std::vector<Rgb> b;
  auto try_fit = [&](auto&& keep) -> std::optional<Transform3> {
    a.clear();
    b.clear();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (!keep(src[i]) || !keep(dst[i])) continue;
      a.push_back(src[i]);
      b.push_back(dst[i]);
    }
    if (a.size() < 3) return std::nullopt;
    try {
      return fit_transform_lsq(a, b);
    } catch (const SingularError&) {
      return std::nullopt;
    }
  };
  if (auto t = try_fit([](const Rgb& p) { return !is_saturated(p); })) return *t;
  if (auto t = try_fit([](const Rgb& p) { return std::max({p[0], p[1], p[2]}) <= kSaturationHigh && norm(p) > 0.0; })) {
    return *t;
  }
  return diagonal_transform(src_illum, dst_illum).normalized();
}

/// Fits every ordered pair over one scene rendered under each illuminant.
inline TransformBank build_transform_bank(std::span<const Illuminant> illums, std::span<const SamplesPtr> images) {
  if (illums.size() != images.size()) throw ParameterError("build_transform_bank: illuminant/image count mismatch");
  if (illums.empty()) throw ParameterError("build_transform_bank: no illuminants");
  const std::size_t n = illums.size();
  std::vector<Transform3> transforms(n * n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      transforms[u * n + v] = fit_pair_transform(*images[u], *images[v], illums[u], illums[v]);
    }
  }
  return TransformBank(std::vector<Illuminant>(illums.begin(), illums.end()), std::move(transforms));
}

enum class KnnVariant { k1NN1NN, k1NNKNN, kKNN1NN, kKNND65KNN };

inline std::string_view to_string(KnnVariant v) {
  switch (v) {
    case KnnVariant::k1NN1NN: return "1NN-1NN";
    case KnnVariant::k1NNKNN: return "1NN-KNN";
    case KnnVariant::kKNN1NN: return "KNN-1NN";
    case KnnVariant::kKNND65KNN: return "KNN-D65-KNN";
  }
  return "unknown";
}

inline KnnVariant knn_variant_from_string(std::string_view s) {
  for (auto v : {KnnVariant::k1NN1NN, KnnVariant::k1NNKNN, KnnVariant::kKNN1NN, KnnVariant::kKNND65KNN}) {
    if (s == to_string(v)) return v;
  }
  // Accept the K=2 spellings as well.
  if (s == "1NN-2NN") return KnnVariant::k1NNKNN;
  if (s == "2NN-1NN") return KnnVariant::kKNN1NN;
  if (s == "2NN-D65-2NN") return KnnVariant::kKNND65KNN;
  throw ParameterError("unknown KNN variant '" + std::string(s) + "'");
}

inline constexpr KnnVariant kAllKnnVariants[] = {KnnVariant::k1NN1NN, KnnVariant::k1NNKNN, KnnVariant::kKNN1NN,
                                                 KnnVariant::kKNND65KNN};

namespace detail {

template <typename Fn>
Transform3 weighted_sum(std::span<const Neighbor> nbrs, Fn&& matrix_of) {
  Transform3 acc{{0, 0, 0, 0, 0, 0, 0, 0, 0}};
  for (const auto& n : nbrs) {
    const Transform3& t = matrix_of(n.index);
    for (std::size_t i = 0; i < 9; ++i) acc.m[i] += n.weight * t.m[i];
  }
  return acc;
}

}  // namespace detail

/// Interpolated transform from `src` to `dst` light. 1NN-1NN is a pure lookup
/// and returns the stored matrix untouched; the other variants average stored
/// matrices entrywise (source side for KNN-1NN, target side for 1NN-KNN, both
/// around the D65 anchor for KNN-D65-KNN) and are Frobenius-normalized.
inline Transform3 knn_transform(const TransformBank& bank, const Illuminant& src, const Illuminant& dst,
                                KnnVariant variant, int k = 2) {
  const auto& pts = bank.chromaticities();
  const Chromaticity cs = to_chromaticity(src);
  const Chromaticity cd = to_chromaticity(dst);
  switch (variant) {
    case KnnVariant::k1NN1NN: {
      const auto u = knn_lookup(pts, cs, 1)[0].index;
      const auto v = knn_lookup(pts, cd, 1)[0].index;
      return bank.at(u, v);
    }
    case KnnVariant::k1NNKNN: {
      const auto u = knn_lookup(pts, cs, 1)[0].index;
      const auto nv = knn_lookup(pts, cd, k);
      return detail::weighted_sum(nv, [&](std::size_t v) -> const Transform3& { return bank.at(u, v); }).normalized();
    }
    case KnnVariant::kKNN1NN: {
      const auto nu = knn_lookup(pts, cs, k);
      const auto v = knn_lookup(pts, cd, 1)[0].index;
      return detail::weighted_sum(nu, [&](std::size_t u) -> const Transform3& { return bank.at(u, v); }).normalized();
    }
    case KnnVariant::kKNND65KNN: {
      const auto anchor = bank.index_of(kAnchorIlluminant);
      const auto nu = knn_lookup(pts, cs, k);
      const auto nv = knn_lookup(pts, cd, k);
      const Transform3 to_anchor =
          detail::weighted_sum(nu, [&](std::size_t u) -> const Transform3& { return bank.at(u, anchor); });
      const Transform3 from_anchor =
          detail::weighted_sum(nv, [&](std::size_t v) -> const Transform3& { return bank.at(anchor, v); });
      return (from_anchor * to_anchor).normalized();
    }
  }
  throw ParameterError("knn_transform: invalid variant");
}

/// Per-illuminant sensor-to-sensor transforms, fit on chart samples.
class SensorBank {
 public:
  SensorBank() = default;
  SensorBank(std::vector<Illuminant> illums, std::vector<Transform3> transforms)
      : illums_(std::move(illums)), transforms_(std::move(transforms)) {
    if (transforms_.size() != illums_.size()) throw DataError("sensor bank size mismatch");
    for (const auto& l : illums_) chroma_.push_back(to_chromaticity(l));
  }

  [[nodiscard]] std::size_t size() const { return illums_.size(); }
  [[nodiscard]] const std::vector<Illuminant>& illuminants() const { return illums_; }
  [[nodiscard]] const std::vector<Chromaticity>& chromaticities() const { return chroma_; }
  [[nodiscard]] const Transform3& at(std::size_t i) const { return transforms_.at(i); }

 private:
  std::vector<Illuminant> illums_;
  std::vector<Chromaticity> chroma_;
  std::vector<Transform3> transforms_;
};

inline SensorBank build_sensor_bank(std::span<const TrainItem> items, std::span<const Illuminant> illums) {
  if (items.size() != illums.size()) throw ParameterError("build_sensor_bank: item/illuminant count mismatch");
  std::vector<Transform3> ts;
  ts.reserve(items.size());
  for (const auto& item : items) {
    const auto s = gather(item, item.valid);
    ts.push_back(fit_transform_lsq(s.src, s.dst));
  }
  return SensorBank(std::vector<Illuminant>(illums.begin(), illums.end()), std::move(ts));
}

/// KNN interpolation of the sensor transform for light `l` (sensor A RGB).
inline Transform3 knn_sensor_transform(const SensorBank& bank, const Illuminant& l, int k = 2) {
  const auto nbrs = knn_lookup(bank.chromaticities(), to_chromaticity(l), k);
  if (k == 1) return bank.at(nbrs[0].index);
  return detail::weighted_sum(nbrs, [&](std::size_t i) -> const Transform3& { return bank.at(i); }).normalized();
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json illuminants_to_json(std::span<const Illuminant> illums) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : illums) arr.push_back({{"id", l.id}, {"rgb", l.rgb}});
  return arr;
}

template <typename Json>
std::vector<Illuminant> illuminants_from_json(const Json& arr) {
  std::vector<Illuminant> out;
  for (const auto& e : arr) {
    Illuminant l;
    l.id = e.at("id").template get<std::string>();
    const auto rgb = e.at("rgb").template get<std::vector<double>>();
    if (rgb.size() != 3) throw DataError("illuminant '" + l.id + "' must have 3 channels");
    l.rgb = {rgb[0], rgb[1], rgb[2]};
    l.validate();
    out.push_back(std::move(l));
  }
  return out;
}

inline nlohmann::ordered_json bank_to_json(const TransformBank& bank, std::string_view camera) {
  nlohmann::ordered_json j;
  j["kind"] = "illum";
  j["camera"] = std::string(camera);
  j["illuminants"] = illuminants_to_json(bank.illuminants());
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t u = 0; u < bank.size(); ++u) {
    for (std::size_t v = 0; v < bank.size(); ++v) {
      entries.push_back({{"src", bank.illuminants()[u].id}, {"dst", bank.illuminants()[v].id}, {"m", bank.at(u, v).m}});
    }
  }
  j["transforms"] = std::move(entries);
  return j;
}

template <typename Json>
TransformBank bank_from_json(const Json& j) {
  try {
    if (j.at("kind").template get<std::string>() != "illum") throw DataError("not an illumination transform bank");
    auto illums = illuminants_from_json(j.at("illuminants"));
    const std::size_t n = illums.size();
    std::vector<Transform3> ts(n * n);
    std::vector<bool> seen(n * n, false);
    auto find = [&](const std::string& id) {
      for (std::size_t i = 0; i < n; ++i) {
        if (illums[i].id == id) return i;
      }
      throw DataError("bank entry references unknown illuminant '" + id + "'");
    };
    for (const auto& e : j.at("transforms")) {
      const auto u = find(e.at("src").template get<std::string>());
      const auto v = find(e.at("dst").template get<std::string>());
      const auto m = e.at("m").template get<std::vector<double>>();
      if (m.size() != 9) throw DataError("bank transform must have 9 entries");
      std::copy(m.begin(), m.end(), ts[u * n + v].m.begin());
      seen[u * n + v] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw DataError("transform bank is incomplete");
    return TransformBank(std::move(illums), std::move(ts));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bank JSON: ") + e.what());
  }
}

inline nlohmann::ordered_json sensor_bank_to_json(const SensorBank& bank, std::string_view cam_a, std::string_view cam_b) {
  nlohmann::ordered_json j;
  j["kind"] = "sensor";
  j["camera"] = std::string(cam_a);
  j["camera_b"] = std::string(cam_b);
  j["illuminants"] = illuminants_to_json(bank.illuminants());
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < bank.size(); ++i) entries.push_back({{"illum", bank.illuminants()[i].id}, {"m", bank.at(i).m}});
  j["transforms"] = std::move(entries);
  return j;
}

template <typename Json>
SensorBank sensor_bank_from_json(const Json& j) {
  try {
    if (j.at("kind").template get<std::string>() != "sensor") throw DataError("not a sensor transform bank");
    auto illums = illuminants_from_json(j.at("illuminants"));
    const auto& entries = j.at("transforms");
    if (entries.size() != illums.size()) throw DataError("sensor bank size mismatch");
    std::vector<Transform3> ts(illums.size());
    for (std::size_t i = 0; i < illums.size(); ++i) {
      if (entries[i].at("illum").template get<std::string>() != illums[i].id) throw DataError("sensor bank order mismatch");
      const auto m = entries[i].at("m").template get<std::vector<double>>();
      if (m.size() != 9) throw DataError("bank transform must have 9 entries");
      std::copy(m.begin(), m.end(), ts[i].m.begin());
    }
    return SensorBank(std::move(illums), std::move(ts));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bank JSON: ") + e.what());
  }
}

}  // namespace rawmap
