// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"

namespace rawmap {

struct PairMetrics {
  double mae_all = 0.0;
  double mae_no_neutral = std::numeric_limits<double>::quiet_NaN();  // NaN when every pixel is neutral
  std::size_t n_all = 0;
  std::size_t n_no_neutral = 0;
};

/// Masked mean angular error of `pred` against `target`. Pixels saturated in
/// the target, or of zero length in either image, are dropped; the second
/// figure further drops pixels within 3.5 degrees of the target light.
/// `error_map`, when given, receives a 1-channel per-pixel error image (0 on
/// excluded pixels).
inline PairMetrics evaluate_pair(const RawImage& pred, const RawImage& target, const Illuminant& target_illum,
                                 RawImage* error_map = nullptr) {
  pred.require_rgb("evaluate_pair");
  target.require_rgb("evaluate_pair");
  if (pred.width != target.width || pred.height != target.height) throw ShapeError("evaluate_pair: image sizes differ");
  if (error_map) {
    *error_map = RawImage(target.width, target.height, 1);
    error_map->camera_id = target.camera_id;
    error_map->illuminant_id = target.illuminant_id;
  }
  PairMetrics m;
  double sum_all = 0.0;
  double sum_nn = 0.0;
  const std::size_t n = target.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb t = target.pixel(i);
    const Rgb p = pred.pixel(i);
    if (is_saturated(t) || !(norm(p) > 0.0) || !(norm(t) > 0.0)) continue;
    const double e = angular_error(p, t);
    sum_all += e;
    ++m.n_all;
    if (!is_neutral(t, target_illum.rgb)) {
      sum_nn += e;
      ++m.n_no_neutral;
    }
    if (error_map) error_map->data[i] = static_cast<float>(e);
  }
  if (m.n_all == 0) throw EmptyMaskError("evaluate_pair: no unsaturated pixels in the target");
  m.mae_all = sum_all / static_cast<double>(m.n_all);
  if (m.n_no_neutral > 0) m.mae_no_neutral = sum_nn / static_cast<double>(m.n_no_neutral);
  return m;
}

/// Mean angular error over corresponding samples whose target is
/// unsaturated. Used for chart-based sensor mapping.
inline PairMetrics evaluate_samples(const Transform3& t, std::span<const Rgb> src, std::span<const Rgb> dst) {
  if (src.size() != dst.size()) throw ShapeError("evaluate_samples: sample counts differ");
  PairMetrics m;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (is_saturated(dst[i])) continue;
    const Rgb p = t.apply(src[i]);
    if (!(norm(p) > 0.0)) continue;
    sum += angular_error(p, dst[i]);
    ++m.n_all;
  }
  if (m.n_all == 0) throw EmptyMaskError("evaluate_samples: no usable samples");
  m.mae_all = sum / static_cast<double>(m.n_all);
  m.mae_no_neutral = m.mae_all;
  m.n_no_neutral = m.n_all;
  return m;
}

/// One (camera, scene, source light, target light) test case.
struct EvalCase {
  std::string camera;
  std::string scene;
  Illuminant src;
  Illuminant dst;
  std::shared_ptr<const RawImage> src_img;
  std::shared_ptr<const RawImage> dst_img;
};

using MappingMethod = std::function<Transform3(const EvalCase&)>;

struct ReportRow {
  std::string method;
  std::string camera;
  std::string scene;
  std::string src_illum;
  std::string dst_illum;
  PairMetrics metrics;
  bool skipped = false;  // empty mask
};

struct AggregateRow {
  std::string method;
  std::string camera;
  double mae_all = std::numeric_limits<double>::quiet_NaN();
  double mae_no_neutral = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_pairs = 0;
  std::size_t n_skipped = 0;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Evaluates `method` on every case. Rows come back in case order regardless
/// of `threads`; pairs with empty masks are flagged and reported through
/// `warn`.
inline std::vector<ReportRow> evaluate_method(const std::string& name, const MappingMethod& method,
                                              std::span<const EvalCase> cases, int threads = 1,
                                              const std::function<void(const std::string&)>& warn = {}) {
  std::vector<ReportRow> rows(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const auto& c = cases[i];
    auto& row = rows[i];
    row.method = name;
    row.camera = c.camera;
    row.scene = c.scene;
    row.src_illum = c.src.id;
    row.dst_illum = c.dst.id;
    const Transform3 t = method(c);
    const RawImage pred = apply_transform(t, *c.src_img);
    try {
      row.metrics = evaluate_pair(pred, *c.dst_img, c.dst);
    } catch (const EmptyMaskError&) {
      row.skipped = true;
      row.metrics = PairMetrics{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0, 0};
    }
  });
  if (warn) {
    for (const auto& r : rows) {
      if (r.skipped) warn("skipping " + r.camera + "/" + r.scene + " " + r.src_illum + "->" + r.dst_illum + ": empty mask");
    }
  }
  return rows;
}

/// Unweighted mean over pairs per (method, camera), in order of first
/// appearance. Skipped pairs are counted but excluded from the means; a
/// pair without non-neutral pixels is excluded from the w/o-neutral mean only.
inline std::vector<AggregateRow> aggregate(std::span<const ReportRow> rows) {
  std::vector<AggregateRow> out;
  std::vector<double> sum_all;
  std::vector<double> sum_nn;
  std::vector<std::size_t> n_nn;
  auto slot = [&](const ReportRow& r) -> std::size_t {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].method == r.method && out[i].camera == r.camera) return i;
    }
    out.push_back({r.method, r.camera});
    sum_all.push_back(0.0);
    sum_nn.push_back(0.0);
    n_nn.push_back(0);
    return out.size() - 1;
  };
  for (const auto& r : rows) {
    const auto i = slot(r);
    if (r.skipped) {
      ++out[i].n_skipped;
      continue;
    }
    ++out[i].n_pairs;
    sum_all[i] += r.metrics.mae_all;
    if (std::isfinite(r.metrics.mae_no_neutral)) {
      sum_nn[i] += r.metrics.mae_no_neutral;
      ++n_nn[i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].n_pairs > 0) out[i].mae_all = sum_all[i] / static_cast<double>(out[i].n_pairs);
    if (n_nn[i] > 0) out[i].mae_no_neutral = sum_nn[i] / static_cast<double>(n_nn[i]);
  }
  return out;
}

inline std::string format_value(double v, int precision = 6) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

inline constexpr const char* kReportHeader =
    "method,camera,scene,src_illum,dst_illum,mae_all,mae_no_neutral,n_pixels_all,n_pixels_no_neutral";

inline void write_report_csv(std::ostream& os, std::span<const ReportRow> rows) {
  os << kReportHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.camera << ',' << r.scene << ',' << r.src_illum << ',' << r.dst_illum << ','
       << format_value(r.metrics.mae_all) << ',' << format_value(r.metrics.mae_no_neutral) << ',' << r.metrics.n_all
       << ',' << r.metrics.n_no_neutral << '\n';
  }
}

inline void write_aggregate_csv(std::ostream& os, std::span<const AggregateRow> rows) {
  os << "method,camera,mae_all,mae_no_neutral,n_pairs,n_skipped\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.camera << ',' << format_value(r.mae_all) << ',' << format_value(r.mae_no_neutral) << ','
       << r.n_pairs << ',' << r.n_skipped << '\n';
  }
}

/// Methods as rows, cameras as column groups of (w/ ntrl, w/o ntrl).
inline std::string render_table(std::span<const AggregateRow> rows) {
  std::vector<std::string> methods;
  std::vector<std::string> cameras;
  std::map<std::pair<std::string, std::string>, const AggregateRow*> cell;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(cameras.begin(), cameras.end(), r.camera) == cameras.end()) cameras.push_back(r.camera);
    cell[{r.method, r.camera}] = &r;
  }
  std::size_t name_w = 6;
  for (const auto& m : methods) name_w = std::max(name_w, m.size());
  constexpr int kCol = 10;

  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto center = [&](const std::string& s, std::size_t w) {
    const std::size_t total = w > s.size() ? w - s.size() : 0;
    return std::string(total / 2, ' ') + s + std::string(total - total / 2, ' ');
  };
  os << pad("", name_w) << " |";
  for (const auto& c : cameras) os << center(c, 2 * kCol + 1) << "|";
  os << '\n' << pad("Method", name_w) << " |";
  for (std::size_t i = 0; i < cameras.size(); ++i) os << center("w/ ntrl", kCol) << "|" << center("w/o ntrl", kCol) << "|";
  os << '\n' << std::string(name_w + 2 + cameras.size() * (2 * kCol + 2), '-') << '\n';
  for (const auto& m : methods) {
    os << pad(m, name_w) << " |";
    for (const auto& c : cameras) {
      const auto it = cell.find({m, c});
      const double a = it == cell.end() ? std::numeric_limits<double>::quiet_NaN() : it->second->mae_all;
      const double b = it == cell.end() ? std::numeric_limits<double>::quiet_NaN() : it->second->mae_no_neutral;
      os << center(format_value(a, 2), kCol) << "|" << center(format_value(b, 2), kCol) << "|";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace rawmap
