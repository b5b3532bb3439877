// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "rawmap/benchmark.hpp"
#include "rawmap/color.hpp"
#include "rawmap/eval.hpp"
#include "rawmap/knn.hpp"
#include "rawmap/tinynet.hpp"
#include "rawmap/train.hpp"

namespace rawmap {

inline SamplesPtr samples_of(const RawImage& img) { return std::make_shared<const std::vector<Rgb>>(img.pixels()); }

/// 64-bit FNV-1a; gives per-case seeds that do not depend on thread layout.
inline std::uint64_t stable_hash(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t case_seed(const EvalCase& c, std::uint64_t seed) {
  return stable_hash(c.camera + "|" + c.scene + "|" + c.src.id + "|" + c.dst.id, seed * 0x9e3779b97f4a7c15ULL + 1);
}

/// Fine-tuning target for one test case: every pixel the metric looks at
/// (target unsaturated, source non-black).
inline TrainItem make_case_item(const EvalCase& c, MapMode mode) {
  TrainItem item;
  item.label = c.src.id + "->" + c.dst.id;
  item.input = mode == MapMode::kIllum ? encode_illuminant_pair(c.src, c.dst) : encode_illuminant(c.src);
  item.src = samples_of(*c.src_img);
  item.dst = samples_of(*c.dst_img);
  for (std::size_t i = 0; i < item.src->size(); ++i) {
    if (is_saturated((*item.dst)[i]) || !(norm((*item.src)[i]) > 0.0)) continue;
    item.valid.push_back(static_cast<std::uint32_t>(i));
  }
  return item;
}

// ---------------------------------------------------------------------------
// Illumination mapping

struct IllumExperiment {
  std::string camera;
  std::vector<std::string> dropped_pairs;  // training/validation pairs without usable pixels
  std::vector<Illuminant> train_illums;
  std::vector<SamplesPtr> train_images;  // training scene under each training light
  TrainingSet data;
  std::vector<EvalCase> cases;
};

/// Training pairs come from the training scene under the training lights,
/// validation pairs from the same scene under the validation lights, and test
/// cases from every test scene; all three use hard-pair selection.
inline IllumExperiment build_illum_experiment(const Dataset& ds, const std::string& cam, double hard_fraction) {
  IllumExperiment ex;
  ex.camera = cam;
  ex.train_illums = ds.illuminants_for(cam, ds.split.train);
  for (const auto& l : ex.train_illums) ex.train_images.push_back(samples_of(*ds.image(cam, ds.scenes.train, l.id)));
  ex.data.train = make_pair_items(ex.train_illums, ex.train_images, select_hard_pairs(ex.train_illums, hard_fraction),
                                  &ex.dropped_pairs);

  const auto val_illums = ds.illuminants_for(cam, ds.split.val);
  if (val_illums.size() >= 2) {
    std::vector<SamplesPtr> val_images;
    for (const auto& l : val_illums) val_images.push_back(samples_of(*ds.image(cam, ds.scenes.train, l.id)));
    ex.data.val = make_pair_items(val_illums, val_images, select_hard_pairs(val_illums, hard_fraction), &ex.dropped_pairs);
  }

  const auto test_illums = ds.illuminants_for(cam, ds.split.test);
  if (test_illums.size() < 2) throw DataError("illumination mapping needs at least two test lights");
  const auto pairs = select_hard_pairs(test_illums, hard_fraction);
  for (const auto& scene : ds.scenes.test) {
    for (const auto& [u, v] : pairs) {
      const auto& src = test_illums[u];
      const auto& dst = test_illums[v];
      ex.cases.push_back({cam, scene, src, dst, ds.image(cam, scene, src.id), ds.image(cam, scene, dst.id)});
    }
  }
  return ex;
}

inline MappingMethod diagonal_method() {
  return [](const EvalCase& c) { return diagonal_transform(c.src, c.dst); };
}

inline MappingMethod knn_method(std::shared_ptr<const TransformBank> bank, KnnVariant variant, int k = 2) {
  return [bank = std::move(bank), variant, k](const EvalCase& c) { return knn_transform(*bank, c.src, c.dst, variant, k); };
}

inline MappingMethod mlp_method(std::shared_ptr<const MlpModel> model) {
  return [model = std::move(model)](const EvalCase& c) {
    return model->mode() == MapMode::kIllum ? forward(*model, encode_illuminant_pair(c.src, c.dst))
                                            : forward(*model, encode_illuminant(c.src));
  };
}

inline MappingMethod oracle_method(std::shared_ptr<const MlpModel> model, OracleConfig config, std::uint64_t seed) {
  return [model = std::move(model), config, seed](const EvalCase& c) {
    return finetune_oracle(*model, make_case_item(c, model->mode()), config, case_seed(c, seed)).transform;
  };
}

// ---------------------------------------------------------------------------
// Sensor mapping

struct SensorExperiment {
  std::string camera_a;
  std::string camera_b;
  std::vector<Illuminant> train_illums;  // in sensor A
  TrainingSet data;
  std::vector<EvalCase> cases;
};

inline std::string sensor_pair_label(const std::string& a, const std::string& b) { return a + "->" + b; }

inline std::vector<TrainItem> chart_items(const Dataset& ds, const std::string& a, const std::string& b,
                                          const std::string& chart, const std::vector<std::string>& ids) {
  std::vector<Illuminant> illums;
  std::vector<SamplesPtr> src;
  std::vector<SamplesPtr> dst;
  for (const auto& id : ids) {
    illums.push_back(ds.illuminant(a, id));
    src.push_back(std::make_shared<const std::vector<Rgb>>(chart_patch_means(*ds.image(a, chart, id), ds.chart)));
    dst.push_back(std::make_shared<const std::vector<Rgb>>(chart_patch_means(*ds.image(b, chart, id), ds.chart)));
  }
  return make_sensor_items(illums, src, dst);
}

/// Training samples are the patch means of the training chart under each
/// training light, as seen by both sensors; test cases are the test charts
/// under the test lights.
inline SensorExperiment build_sensor_experiment(const Dataset& ds, const std::string& a, const std::string& b) {
  if (a == b) throw ParameterError("sensor mapping needs two different cameras");
  SensorExperiment ex;
  ex.camera_a = a;
  ex.camera_b = b;
  ex.train_illums = ds.illuminants_for(a, ds.split.train);
  ex.data.train = chart_items(ds, a, b, ds.scenes.chart_train, ds.split.train);
  ex.data.val = chart_items(ds, a, b, ds.scenes.chart_val, ds.split.val);
  const std::string label = sensor_pair_label(a, b);
  for (const auto& chart : ds.scenes.chart_test) {
    for (const auto& id : ds.split.test) {
      ex.cases.push_back({label, chart, ds.illuminant(a, id), ds.illuminant(b, id), ds.image(a, chart, id), ds.image(b, chart, id)});
    }
  }
  return ex;
}

inline MappingMethod knn_sensor_method(std::shared_ptr<const SensorBank> bank, int k = 2) {
  return [bank = std::move(bank), k](const EvalCase& c) { return knn_sensor_transform(*bank, c.src, k); };
}

// ---------------------------------------------------------------------------
// Full runs

struct RunOptions {
  std::uint64_t seed = 1;
  TrainConfig illum_config = TrainConfig::illum_defaults();
  TrainConfig sensor_config = TrainConfig::sensor_defaults();
  OracleConfig oracle;
  bool with_oracle = true;
  int repeats = 1;
  int threads = 1;
  int knn_k = 2;
  std::function<void(const std::string&)> log;
};

struct TrainedModel {
  std::string label;
  int repeat = 0;
  TrainResult result;
};

struct RunReport {
  std::vector<ReportRow> rows;
  std::vector<TrainedModel> models;

  [[nodiscard]] std::vector<AggregateRow> aggregates() const { return aggregate(rows); }
};

/// Per-case mean over repeated runs of the same method.
inline std::vector<ReportRow> average_repeats(const std::vector<std::vector<ReportRow>>& runs) {
  if (runs.empty()) return {};
  std::vector<ReportRow> out = runs.front();
  if (runs.size() == 1) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double all = 0.0;
    double nn = 0.0;
    int n_nn = 0;
    bool skipped = false;
    for (const auto& run : runs) {
      const auto& r = run.at(i);
      skipped = skipped || r.skipped;
      all += r.metrics.mae_all;
      if (std::isfinite(r.metrics.mae_no_neutral)) {
        nn += r.metrics.mae_no_neutral;
        ++n_nn;
      }
    }
    out[i].skipped = skipped;
    out[i].metrics.mae_all = all / static_cast<double>(runs.size());
    out[i].metrics.mae_no_neutral = n_nn > 0 ? nn / n_nn : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

namespace detail {

inline void append(std::vector<ReportRow>& out, const std::vector<ReportRow>& rows) {
  out.insert(out.end(), rows.begin(), rows.end());
}

inline void say(const RunOptions& opt, const std::string& msg) {
  if (opt.log) opt.log(msg);
}

/// Trains `repeats` models and evaluates the MLP (and oracle) with each,
/// averaging per case.
inline void run_learned(const std::string& label, MapMode mode, const TrainConfig& config, const RunOptions& opt,
                        const TrainingSet& data, const std::vector<EvalCase>& cases, RunReport& report) {
  std::vector<std::vector<ReportRow>> mlp_runs;
  std::vector<std::vector<ReportRow>> oracle_runs;
  const auto warn = [&](const std::string& m) { say(opt, "warning: " + m); };
  for (int r = 0; r < opt.repeats; ++r) {
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(r);
    say(opt, "training " + std::string(to_string(mode)) + " model for " + label + " (seed " + std::to_string(seed) + ")");
    auto result = train_mlp(data, mode, config, seed);
    say(opt, "  best epoch " + std::to_string(result.best_epoch) + ", val MAE " + format_value(result.model.val_mae, 4));
    auto model = std::make_shared<const MlpModel>(result.model);
    mlp_runs.push_back(evaluate_method("mlp", mlp_method(model), cases, opt.threads, warn));
    if (opt.with_oracle) oracle_runs.push_back(evaluate_method("oracle", oracle_method(model, opt.oracle, seed), cases, opt.threads, warn));
    report.models.push_back({label, r, std::move(result)});
  }
  append(report.rows, average_repeats(mlp_runs));
  if (opt.with_oracle) append(report.rows, average_repeats(oracle_runs));
}

}  // namespace detail

/// Illumination mapping on every camera: diagonal, the four KNN variants, the
/// MLP and its per-pair oracle.
inline RunReport run_illum_benchmark(const Dataset& ds, const std::vector<std::string>& cams, const RunOptions& opt) {
  RunReport report;
  const auto warn = [&](const std::string& m) { detail::say(opt, "warning: " + m); };
  for (const auto& cam : cams) {
    const auto ex = build_illum_experiment(ds, cam, opt.illum_config.hard_pair_fraction);
    detail::say(opt, cam + ": " + std::to_string(ex.data.train.size()) + " training pairs, " +
                         std::to_string(ex.data.val.size()) + " validation pairs, " + std::to_string(ex.cases.size()) +
                         " test cases");
    if (!ex.dropped_pairs.empty()) {
      detail::say(opt, "warning: " + cam + ": dropped " + std::to_string(ex.dropped_pairs.size()) +
                           " pairs without unsaturated corresponding pixels");
    }
    detail::append(report.rows, evaluate_method("diag", diagonal_method(), ex.cases, opt.threads, warn));
    const auto bank = std::make_shared<const TransformBank>(build_transform_bank(ex.train_illums, ex.train_images));
    for (auto v : kAllKnnVariants) {
      detail::append(report.rows, evaluate_method(std::string(to_string(v)), knn_method(bank, v, opt.knn_k), ex.cases,
                                                  opt.threads, warn));
    }
    detail::run_learned(cam, MapMode::kIllum, opt.illum_config, opt, ex.data, ex.cases, report);
  }
  return report;
}

/// Sensor mapping from `a` to `b`: diagonal, KNN over per-light chart fits,
/// the MLP and its oracle.
inline RunReport run_sensor_benchmark(const Dataset& ds, const std::string& a, const std::string& b, const RunOptions& opt) {
  RunReport report;
  const auto warn = [&](const std::string& m) { detail::say(opt, "warning: " + m); };
  const auto ex = build_sensor_experiment(ds, a, b);
  detail::append(report.rows, evaluate_method("diag", diagonal_method(), ex.cases, opt.threads, warn));
  const auto bank = std::make_shared<const SensorBank>(build_sensor_bank(ex.data.train, ex.train_illums));
  detail::append(report.rows, evaluate_method("KNN", knn_sensor_method(bank, opt.knn_k), ex.cases, opt.threads, warn));
  detail::run_learned(sensor_pair_label(a, b), MapMode::kSensor, opt.sensor_config, opt, ex.data, ex.cases, report);
  return report;
}

}  // namespace rawmap
