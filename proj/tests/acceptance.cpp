// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Measured values follow each verdict so a failure is readable.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "support.hpp"

namespace rawmap {
namespace {

using Clock = std::chrono::steady_clock;
using testing::random_rgb;
using testing::ref_angle;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Gate {
  int failed = 0;

  void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }

  // A criterion that throws is a failure, not a crash.
  template <typename Fn>
  void run(int id, const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("exception: ") + e.what());
    }
  }
};

std::string fmt(double v, int prec = 3) { return format_value(v, prec); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient oracle

void gradient_check(Gate& g) {
  const auto t0 = Clock::now();
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const MapMode mode = seed % 2 ? MapMode::kSensor : MapMode::kIllum;
    MlpModel model = MlpModel::create(mode, {32, 32}, seed);
    for (double& p : model.params()) p += std::normal_distribution<double>(0, 0.2)(rng);
    std::vector<std::vector<double>> inputs;
    std::vector<PixelSampleSet> sets;
    for (int k = 0; k < 1 + static_cast<int>(seed % 4); ++k) {
      std::vector<double> in(static_cast<std::size_t>(model.input_dim()));
      for (double& v : in) v = std::uniform_real_distribution<double>(0.1, 1)(rng);
      inputs.push_back(in);
      PixelSampleSet s;
      for (int i = 0; i < 16; ++i) {
        s.src.push_back(random_rgb(rng, 0.02, 1));
        s.dst.push_back(random_rgb(rng, 0.02, 1));
      }
      sets.push_back(s);
    }
    std::vector<BatchItem> batch;
    for (std::size_t i = 0; i < inputs.size(); ++i) batch.push_back({inputs[i], sets[i].src, sets[i].dst});
    auto loss_of = [&](const MlpModel& m) {
      double l = 0.0;
      for (std::size_t i = 0; i < inputs.size(); ++i) l += loss_angular(forward(m, inputs[i]), sets[i]);
      return l / static_cast<double>(inputs.size());
    };
    std::vector<double> grad;
    backward(model, batch, grad);
    MlpModel probe = model;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double p0 = probe.params()[i];
      probe.params()[i] = p0 + h;
      const double up = loss_of(probe);
      probe.params()[i] = p0 - h;
      const double down = loss_of(probe);
      probe.params()[i] = p0;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd) + std::abs(grad[i]), 1e-3));
    }
  }
  const double secs = seconds_since(t0);
  g.report(1, "gradient check", worst < 1e-4 && secs < 10.0,
           "max rel err " + sci(worst) + " over 20 configs in " + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 2. Parameter counts

void parameter_counts(Gate& g) {
  const auto sensor = MlpModel::create(MapMode::kSensor, {32, 32}, 1).params().size();
  const auto illum = MlpModel::create(MapMode::kIllum, {32, 32}, 1).params().size();
  // Independent count: sum over layers of (fan_in + 1) * fan_out.
  auto count = [](int in) { return (in + 1) * 32 + 33 * 32 + 33 * 9; };
  g.report(2, "parameter counts", sensor == 1481 && illum == 1577 && count(3) == 1481 && count(6) == 1577,
           "sensor " + std::to_string(sensor) + ", illum " + std::to_string(illum));
}

// ---------------------------------------------------------------------------
// 3. Metric invariance

void metric_invariance(Gate& g) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logk(-3.0, 3.0);
  double scale = 0.0;
  double ref = 0.0;
  std::size_t asym = 0;
  std::size_t self = 0;
  std::size_t range = 0;
  for (int i = 0; i < 100000; ++i) {
    const Rgb a = random_rgb(rng, 0.0, 1.0);
    const Rgb b = i % 10 == 0 ? scaled(a, 1.0 + 1e-4 * (i % 7)) : random_rgb(rng, 0.0, 1.0);
    const double e = angular_error(a, b);
    const double k1 = std::pow(10.0, logk(rng));
    const double k2 = std::pow(10.0, logk(rng));
    scale = std::max(scale, std::abs(angular_error(scaled(a, k1), scaled(b, k2)) - e));
    ref = std::max(ref, std::abs(ref_angle(a, b) - e) * (e > 1e-2 ? 1.0 : 0.0));
    asym += angular_error(b, a) != e;
    self += angular_error(a, scaled(a, k1)) > 1e-9;
    range += !(e >= 0.0 && e <= 180.0);
  }
  const bool ok = scale < 1e-9 && ref < 1e-6 && asym == 0 && self == 0 && range == 0;
  g.report(3, "metric invariance", ok,
           "1e5 pairs: scale drift " + sci(scale) + " deg, vs long-double ref " + sci(ref) +
               " deg, asymmetric " + std::to_string(asym) + ", non-zero self " + std::to_string(self));
}

// ---------------------------------------------------------------------------
// 4. Neutral exactness

void neutral_exactness(Gate& g) {
  std::mt19937_64 rng(4);
  const auto scene = make_neutral_scene("neutral", 500, 2, rng);
  double worst = 0.0;
  double sum = 0.0;
  for (int p = 0; p < 20; ++p) {
    const auto cam = make_camera(p % 2 ? "broadband_b" : "broadband_a");
    const auto pu = p % 3 ? random_led(rng, "u") : random_blackbody(rng, "u");
    const auto pv = p % 4 ? random_blackbody(rng, "v") : random_led(rng, "v");
    const auto src = render(scene, pu, cam, peak_exposure(scene, pu, cam));
    const auto dst = render(scene, pv, cam, peak_exposure(scene, pv, cam));
    const auto iu = illuminant_rgb(pu, cam);
    const auto iv = illuminant_rgb(pv, cam);
    const auto m = evaluate_pair(apply_transform(diagonal_transform(iu, iv), src), dst, iv);
    worst = std::max(worst, m.mae_all);
    sum += m.mae_all;
  }
  g.report(4, "neutral exactness", worst < 0.01,
           "diag MAE mean " + sci(sum / 20) + ", max " + sci(worst) + " deg over 20 pairs");
}

// ---------------------------------------------------------------------------
// 5. Delta-sensor world

void delta_world(Gate& g) {
  const auto t0 = Clock::now();
  BenchmarkOptions o;
  o.cameras = {"delta"};
  o.blackbody_fraction = 1.0;
  o.peak_exposure_only = true;
  o.raw_mosaics = false;
  const auto b = make_benchmark(o);
  const Dataset ds = materialize(b);
  const auto ex = build_illum_experiment(ds, "delta", 0.282);
  const auto bank = std::make_shared<const TransformBank>(build_transform_bank(ex.train_illums, ex.train_images));

  // KNN is judged on pairs whose lights both sit within 0.05 of a training
  // chromaticity; the other methods on every test pair.
  std::vector<EvalCase> near;
  for (const auto& c : ex.cases) {
    const double ds_ = knn_lookup(bank->chromaticities(), to_chromaticity(c.src), 1)[0].distance;
    const double dd = knn_lookup(bank->chromaticities(), to_chromaticity(c.dst), 1)[0].distance;
    if (ds_ <= 0.05 && dd <= 0.05) near.push_back(c);
  }

  std::ostringstream detail;
  bool ok = !near.empty();
  auto mae = [](const std::vector<ReportRow>& rows) { return aggregate(rows).at(0).mae_all; };
  const double diag = mae(evaluate_method("diag", diagonal_method(), ex.cases));
  ok = ok && diag < 0.5;
  detail << "diag " << fmt(diag, 4);

  const auto trained = train_mlp(ex.data, MapMode::kIllum, TrainConfig::illum_defaults(), 1);
  const auto model = std::make_shared<const MlpModel>(trained.model);
  const double mlp = mae(evaluate_method("mlp", mlp_method(model), ex.cases));
  ok = ok && mlp < 0.5;
  detail << ", mlp " << fmt(mlp);
  if (!near.empty()) detail << " (near " << fmt(mae(evaluate_method("mlp", mlp_method(model), near))) << ")";

  detail << "; KNN on " << near.size() << "/" << ex.cases.size() << " near pairs:";
  for (auto v : kAllKnnVariants) {
    const double k = near.empty() ? 1e9 : mae(evaluate_method("knn", knn_method(bank, v), near));
    const double all = mae(evaluate_method("knn", knn_method(bank, v), ex.cases));
    ok = ok && k < 0.5;
    detail << " " << to_string(v) << " " << fmt(k) << " (all " << fmt(all) << ")";
  }

  // Pre-clip renders: the diagonal map reproduces the target once exposures
  // are aligned through the peak white responses.
  const auto cam = make_camera("delta");
  const auto white = SpectralCurve::constant(1.0, CurveKind::kReflectance);
  auto peak = [&](const SpectralCurve& p) {
    const Rgb w = spectral_response(white, p, cam);
    return std::max({w[0], w[1], w[2]});
  };
  double worst = 0.0;
  const auto& scene = b.test_scenes.front();
  for (std::size_t i = 0; i + 1 < b.split.test.size(); ++i) {
    const auto& pu = b.spd(b.split.test[i]);
    const auto& pv = b.spd(b.split.test[i + 1]);
    const double eu = peak_exposure(scene, pu, cam);
    const auto su = render(scene, pu, cam, eu, false);
    const auto sv = render(scene, pv, cam, eu * peak(pu) / peak(pv), false);
    const auto mapped = apply_transform(diagonal_transform(illuminant_rgb(pu, cam), illuminant_rgb(pv, cam)), su);
    for (std::size_t k = 0; k < sv.data.size(); ++k) worst = std::max(worst, static_cast<double>(std::abs(mapped.data[k] - sv.data[k])));
  }
  ok = ok && worst < 1e-5;
  detail << "; pre-clip diagonal max diff " << sci(worst) << "; " << fmt(seconds_since(t0), 1) << " s";
  g.report(5, "delta-sensor world", ok, detail.str());
}

// ---------------------------------------------------------------------------
// 6 and 9. Default benchmark ordering and oracle monotonicity

const AggregateRow& find_row(const std::vector<AggregateRow>& rows, const std::string& method, const std::string& cam) {
  for (const auto& r : rows) {
    if (r.method == method && r.camera == cam) return r;
  }
  throw DataError("no aggregate for " + method + " on " + cam);
}

std::string case_key(const ReportRow& r) { return r.camera + "/" + r.scene + "/" + r.src_illum + "/" + r.dst_illum; }

void oracle_monotone(Gate& g, int id, const std::vector<ReportRow>& rows) {
  std::map<std::string, double> mlp;
  for (const auto& r : rows) {
    if (r.method == "mlp" && !r.skipped) mlp[case_key(r)] = r.metrics.mae_all;
  }
  std::size_t n = 0;
  std::size_t bad = 0;
  double worst = -1e9;
  for (const auto& r : rows) {
    if (r.method != "oracle" || r.skipped) continue;
    const double d = r.metrics.mae_all - mlp.at(case_key(r));
    worst = std::max(worst, d);
    bad += d > 0.05;
    ++n;
  }
  g.report(id, "oracle monotonicity", n > 0 && bad == 0,
           std::to_string(n) + " test pairs, worst change " + format_value(worst, 4) + " deg, " + std::to_string(bad) +
               " above +0.05");
}

void default_benchmark(Gate& g) {
  const auto t0 = Clock::now();
  BenchmarkOptions o;
  o.raw_mosaics = false;
  const Dataset ds = materialize(make_benchmark(o));
  const auto illum = run_illum_benchmark(ds, ds.cameras, RunOptions{});
  const double secs = seconds_since(t0);
  const auto agg = illum.aggregates();

  std::ostringstream detail;
  bool ok = secs < 600.0;
  for (const auto& cam : ds.cameras) {
    const double diag = find_row(agg, "diag", cam).mae_no_neutral;
    double knn = 1e9;
    for (auto v : kAllKnnVariants) knn = std::min(knn, find_row(agg, std::string(to_string(v)), cam).mae_no_neutral);
    const double mlp = find_row(agg, "mlp", cam).mae_no_neutral;
    const double oracle = find_row(agg, "oracle", cam).mae_no_neutral;
    const double base = std::min(diag, knn);
    ok = ok && oracle <= mlp && mlp <= base - 0.2;
    detail << cam << ": diag " << fmt(diag, 2) << ", best KNN " << fmt(knn, 2) << ", mlp " << fmt(mlp, 2) << ", oracle "
           << fmt(oracle, 2) << "; ";
  }
  detail << "w/o ntrl, " << fmt(secs, 1) << " s";
  g.report(6, "illumination ordering", ok, detail.str());

  // 7. Sensor mapping on the same benchmark's charts.
  g.run(7, "sensor ordering", [&] {
    const auto t1 = Clock::now();
    const auto sensor = run_sensor_benchmark(ds, ds.cameras[0], ds.cameras[1], RunOptions{});
    const double s = seconds_since(t1);
    const auto sa = sensor.aggregates();
    const std::string label = sensor_pair_label(ds.cameras[0], ds.cameras[1]);
    const auto& d = find_row(sa, "diag", label);
    const auto& k = find_row(sa, "KNN", label);
    const auto& m = find_row(sa, "mlp", label);
    const auto& orc = find_row(sa, "oracle", label);
    const bool pass = orc.mae_all <= m.mae_all && m.mae_all <= k.mae_all - 0.1 && s < 120.0;
    g.report(7, "sensor ordering", pass,
             label + ": diag " + fmt(d.mae_all, 2) + ", KNN-2NN " + fmt(k.mae_all, 2) + ", mlp " + fmt(m.mae_all, 2) +
                 ", oracle " + fmt(orc.mae_all, 2) + " (w/o ntrl " + fmt(d.mae_no_neutral, 2) + "/" +
                 fmt(k.mae_no_neutral, 2) + "/" + fmt(m.mae_no_neutral, 2) + "/" + fmt(orc.mae_no_neutral, 2) + "), " +
                 fmt(s, 1) + " s");
  });
  g.run(9, "oracle monotonicity", [&] { oracle_monotone(g, 9, illum.rows); });
}

// ---------------------------------------------------------------------------
// 8. KNN exactness

void knn_exactness(Gate& g) {
  BenchmarkOptions o;
  o.n_train = 12;
  o.n_val = 2;
  o.n_test = 2;
  o.cameras = {"broadband_a"};
  o.test_scenes = 1;
  o.raw_mosaics = false;
  const Dataset ds = materialize(make_benchmark(o));
  const auto ex = build_illum_experiment(ds, "broadband_a", 0.282);
  const auto bank = build_transform_bank(ex.train_illums, ex.train_images);
  std::size_t mismatches = 0;
  for (std::size_t u = 0; u < bank.size(); ++u) {
    for (std::size_t v = 0; v < bank.size(); ++v) {
      mismatches += !(knn_transform(bank, bank.illuminants()[u], bank.illuminants()[v], KnnVariant::k1NN1NN) == bank.at(u, v));
    }
  }
  const std::vector<Chromaticity> pts{{0.0, 0.0}, {4.0, 0.0}};
  const auto w = knn_lookup(pts, {1.0, 0.0}, 2);
  const bool weights = w[0].weight == 0.75 && w[1].weight == 0.25;
  g.report(8, "KNN exactness", mismatches == 0 && weights,
           std::to_string(bank.size() * bank.size()) + " bank queries, " + std::to_string(mismatches) +
               " mismatches; weights (1,3) -> (" + fmt(w[0].weight, 17) + ", " + fmt(w[1].weight, 17) + ")");
}

// ---------------------------------------------------------------------------
// 10. Masks

void mask_brute_force(Gate& g) {
  std::mt19937_64 rng(10);
  std::size_t mismatches = 0;
  std::size_t pixels = 0;
  for (int n = 0; n < 50; ++n) {
    RawImage img = testing::random_image(rng, 23, 19, -0.01, 1.01);
    for (auto& v : img.data) v = std::max(v, 0.0f);
    const Illuminant l{random_rgb(rng, 0.1, 1)};
    for (std::size_t i = 0; i < img.pixel_count(); i += 5) img.set_pixel(i, scaled(l.rgb, 0.3 + 0.001 * i));
    const auto sat = saturation_mask(img);
    const auto ntr = neutral_mask(img, l);
    const std::size_t np = img.pixel_count();
    for (std::size_t i = 0; i < np; ++i) {
      const double r = img.data[i], gg = img.data[np + i], b = img.data[2 * np + i];
      const bool ok = std::min({r, gg, b}) >= 0.01 && std::max({r, gg, b}) <= 0.99;
      const bool non_neutral = (r + gg + b) > 0 && ref_angle({r, gg, b}, l.rgb) >= 3.5;
      mismatches += (sat.bits[i] != ok) + (ntr.bits[i] != non_neutral);
    }
    pixels += np;
  }
  g.report(10, "mask brute force", mismatches == 0,
           "50 images, " + std::to_string(pixels) + " pixels, " + std::to_string(mismatches) + " mismatches");
}

// ---------------------------------------------------------------------------
// 11. Determinism

std::string pipeline_report(const std::filesystem::path& dir, int threads) {
  BenchmarkOptions o;
  o.n_train = 10;
  o.n_val = 3;
  o.n_test = 4;
  o.test_scenes = 2;
  o.seed = 21;
  write_benchmark(make_benchmark(o), dir, true);
  const Dataset ds = load_dataset(dir);
  RunOptions r;
  r.seed = 5;
  r.threads = threads;
  r.illum_config.epochs = 20;
  r.sensor_config.epochs = 20;
  r.oracle.epochs = 20;
  auto rows = run_illum_benchmark(ds, ds.cameras, r).rows;
  const auto s = run_sensor_benchmark(ds, ds.cameras[0], ds.cameras[1], r).rows;
  rows.insert(rows.end(), s.begin(), s.end());
  std::ostringstream os;
  write_report_csv(os, rows);
  write_aggregate_csv(os, aggregate(rows));
  return os.str();
}

void determinism(Gate& g) {
  namespace fs = std::filesystem;
  const auto a = fs::temp_directory_path() / "rawmap_accept_a";
  const auto b = fs::temp_directory_path() / "rawmap_accept_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string ra = pipeline_report(a, 1);
  const std::string rb = pipeline_report(b, 2);
  fs::remove_all(a);
  fs::remove_all(b);
  g.report(11, "determinism", ra == rb && !ra.empty(),
           std::to_string(ra.size()) + " vs " + std::to_string(rb.size()) + " report bytes, " +
               (ra == rb ? "identical" : "different"));
}

// ---------------------------------------------------------------------------
// 12. Learning-rate schedule

void lr_schedule(Gate& g) {
  TrainingSet data;
  TrainItem item;
  item.input = {1.0, 0.8, 0.6, 0.6, 1.0, 0.9};
  item.src = std::make_shared<const std::vector<Rgb>>(std::vector<Rgb>{{0.2, 0.3, 0.4}, {0.5, 0.1, 0.2}, {0.3, 0.6, 0.1}});
  item.dst = item.src;
  item.valid = {0, 1, 2};
  data.train.push_back(item);
  auto cfg = TrainConfig::illum_defaults();
  cfg.epochs = 101;
  const auto r = train_mlp(data, MapMode::kIllum, cfg, 0);
  const double a = r.history.at(0).lr, b = r.history.at(50).lr, c = r.history.at(100).lr;
  g.report(12, "LR schedule", a == 0.01 && b == 0.005 && c == 0.0025,
           "epochs 0/50/100: " + fmt(a, 17) + " / " + fmt(b, 17) + " / " + fmt(c, 17));
}

}  // namespace
}  // namespace rawmap

int main() {
  using namespace rawmap;
  Gate g;
  g.run(1, "gradient check", [&] { gradient_check(g); });
  g.run(2, "parameter counts", [&] { parameter_counts(g); });
  g.run(3, "metric invariance", [&] { metric_invariance(g); });
  g.run(4, "neutral exactness", [&] { neutral_exactness(g); });
  g.run(5, "delta-sensor world", [&] { delta_world(g); });
  try {
    default_benchmark(g);
  } catch (const std::exception& e) {
    for (int id : {6, 7, 9}) g.report(id, "default benchmark", false, std::string("exception: ") + e.what());
  }
  g.run(8, "KNN exactness", [&] { knn_exactness(g); });
  g.run(10, "mask brute force", [&] { mask_brute_force(g); });
  g.run(11, "determinism", [&] { determinism(g); });
  g.run(12, "LR schedule", [&] { lr_schedule(g); });
  std::printf("%s: %d criteria failed\n", g.failed ? "FAIL" : "PASS", g.failed);
  return g.failed ? 1 : 0;
}
