// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

// rawmap: benchmark generation, training, baselines and evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rawmap/rawmap.hpp"

namespace fs = std::filesystem;
using namespace rawmap;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Small helpers

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Illuminant parse_illuminant(const std::string& s, const std::string& id) {
  Illuminant l{io::parse_triplet(s), id};
  try {
    l.validate();
  } catch (const Error& e) {
    throw ParameterError(e.what());
  }
  return l;
}

Transform3 parse_matrix(const std::string& s) {
  const auto f = split_list(s);
  if (f.size() != 9) throw ParameterError("--matrix expects 9 comma-separated numbers (row-major)");
  Transform3 t;
  for (std::size_t i = 0; i < 9; ++i) {
    try {
      t.m[i] = std::stod(f[i]);
    } catch (const std::exception&) {
      throw ParameterError("--matrix: '" + f[i] + "' is not a number");
    }
  }
  t.validate();
  return t;
}

/// Sensor-pair labels ("a->b") as path components ("a_to_b").
std::string file_safe(std::string label) {
  if (const auto arrow = label.find("->"); arrow != std::string::npos) label.replace(arrow, 2, "_to_");
  return label;
}

void print_matrix(const Transform3& t) {
  for (int r = 0; r < 3; ++r) {
    std::printf("%.9f %.9f %.9f\n", t.m[3 * r], t.m[3 * r + 1], t.m[3 * r + 2]);
  }
}

/// Records how an output was produced in run.json next to it. Entries are
/// keyed by output name so several commands can share a directory.
void write_provenance(const fs::path& output, const std::string& command, const Json& params) {
  const bool is_dir = fs::is_directory(output);
  const fs::path dir = is_dir ? output : (output.has_parent_path() ? output.parent_path() : fs::path("."));
  const fs::path file = dir / "run.json";
  nlohmann::json all = nlohmann::json::object();
  if (fs::exists(file)) {
    try {
      all = nlohmann::json::parse(io::read_text(file));
    } catch (const nlohmann::json::exception&) {
      all = nlohmann::json::object();
    }
  }
  const std::string key = is_dir ? "." : output.filename().string();
  all[key] = {{"command", command}, {"version", kVersion}, {"parameters", nlohmann::json::parse(params.dump())}};
  io::write_text(file, all.dump(2) + "\n");
}

TrainConfig load_config(MapMode mode, const std::string& path) {
  TrainConfig c = TrainConfig::defaults_for(mode);
  if (!path.empty()) merge_train_config(io::read_json(path), c);
  return c;
}

void write_reports(const std::vector<ReportRow>& rows, const std::string& report, const std::string& agg_path,
                   const std::string& table_path) {
  const auto agg = aggregate(rows);
  if (!report.empty()) {
    std::ostringstream os;
    write_report_csv(os, rows);
    io::write_text(report, os.str());
  }
  if (!agg_path.empty()) {
    std::ostringstream os;
    write_aggregate_csv(os, agg);
    io::write_text(agg_path, os.str());
  }
  const std::string table = render_table(agg);
  if (!table_path.empty()) io::write_text(table_path, table);
  std::cout << table;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// ---------------------------------------------------------------------------
// Commands

struct GenArgs {
  std::uint64_t seed = 7;
  std::string out;
  std::string cameras = "broadband_a,broadband_b";
  int n_train = 60;
  int n_val = 10;
  int n_test = 20;
  bool force = false;
  bool peak_exposure = false;
  double blackbody_fraction = 0.5;
};

BenchmarkOptions benchmark_options(const GenArgs& a) {
  BenchmarkOptions o;
  o.seed = a.seed;
  o.cameras = split_list(a.cameras);
  o.n_train = a.n_train;
  o.n_val = a.n_val;
  o.n_test = a.n_test;
  o.peak_exposure_only = a.peak_exposure;
  o.blackbody_fraction = a.blackbody_fraction;
  return o;
}

Json gen_params(const GenArgs& a) {
  return {{"seed", a.seed},        {"cameras", split_list(a.cameras)}, {"n_train", a.n_train},
          {"n_val", a.n_val},      {"n_test", a.n_test},               {"peak_exposure", a.peak_exposure},
          {"blackbody_fraction", a.blackbody_fraction}};
}

int cmd_gen(const GenArgs& a) {
  const auto b = make_benchmark(benchmark_options(a));
  const auto ds = write_benchmark(b, a.out, a.force);
  write_provenance(a.out, "gen-data", gen_params(a));
  std::cout << "wrote " << ds.images.size() << " images for " << ds.cameras.size() << " camera(s) to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string mode;
  std::string data;
  std::string camera;
  std::string camera_b;
  std::string config;
  std::uint64_t seed = 1;
  std::string out_model;
  std::string curve;
  int epochs = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const MapMode mode = map_mode_from_string(a.mode);
  TrainConfig cfg = load_config(mode, a.config);
  if (a.epochs >= 0) cfg.epochs = a.epochs;
  cfg.validate();
  const Dataset ds = load_dataset(a.data);
  TrainingSet data;
  std::string label;
  if (mode == MapMode::kIllum) {
    auto ex = build_illum_experiment(ds, a.camera, cfg.hard_pair_fraction);
    if (!ex.dropped_pairs.empty()) {
      log_line("warning: dropped " + std::to_string(ex.dropped_pairs.size()) + " pairs without usable pixels");
    }
    data = std::move(ex.data);
    label = a.camera;
  } else {
    if (a.camera_b.empty()) throw ParameterError("train sensor needs --camera-b");
    data = build_sensor_experiment(ds, a.camera, a.camera_b).data;
    label = sensor_pair_label(a.camera, a.camera_b);
  }
  std::ostringstream curve;
  curve << "epoch,lr,train_loss,val_mae\n";
  if (!a.quiet) std::cout << "epoch lr train_loss val_mae\n";
  const auto result = train_mlp(data, mode, cfg, a.seed, [&](const EpochRecord& r) {
    curve << r.epoch << ',' << format_value(r.lr, 9) << ',' << format_value(r.train_loss) << ',' << format_value(r.val_mae)
          << '\n';
    if (!a.quiet) {
      std::printf("%d %.6g %.4f %.4f\n", r.epoch, r.lr, r.train_loss, r.val_mae);
      std::fflush(stdout);
    }
  });
  io::write_text(a.out_model, model_to_json(result.model).dump(2) + "\n");
  if (!a.curve.empty()) io::write_text(a.curve, curve.str());
  write_provenance(a.out_model, "train " + a.mode,
                   {{"data", a.data}, {"camera", a.camera}, {"camera_b", a.camera_b}, {"seed", a.seed}, {"config", cfg},
                    {"train_items", data.train.size()}, {"val_items", data.val.size()}, {"best_epoch", result.best_epoch}});
  std::cout << label << ": best epoch " << result.best_epoch << ", val MAE " << format_value(result.model.val_mae, 4) << '\n';
  return 0;
}

MlpModel load_model(const std::string& path) { return model_from_json(io::read_json(path)); }

struct PredictArgs {
  std::string model;
  std::string matrix;
  std::string src;
  std::string dst;
  std::string illum;
  std::string in;
  std::string out;
};

Transform3 model_transform(const MlpModel& m, const PredictArgs& a) {
  if (m.mode() == MapMode::kIllum) {
    if (a.src.empty() || a.dst.empty()) throw ParameterError("an illumination model needs --src-illum and --dst-illum");
    return forward(m, encode_illuminant_pair(parse_illuminant(a.src, "src"), parse_illuminant(a.dst, "dst")));
  }
  if (a.illum.empty()) throw ParameterError("a sensor model needs --illum");
  return forward(m, encode_illuminant(parse_illuminant(a.illum, "illum")));
}

int cmd_predict(const PredictArgs& a) {
  print_matrix(model_transform(load_model(a.model), a));
  return 0;
}

int cmd_apply(const PredictArgs& a) {
  if (a.model.empty() == a.matrix.empty()) throw ParameterError("apply needs exactly one of --model and --matrix");
  const Transform3 t = a.matrix.empty() ? model_transform(load_model(a.model), a) : parse_matrix(a.matrix);
  RawImage img = io::read_image(a.in);
  RawImage out = apply_transform(t, img);
  io::write_image(a.out, out);
  write_provenance(a.out, "apply", {{"in", a.in}, {"model", a.model}, {"matrix", t.m}});
  return 0;
}

struct BaselineArgs {
  std::string kind;
  std::string variant = "KNN-1NN";
  std::string bank;
  std::string src;
  std::string dst;
  std::string illum;
  int k = 2;
};

int cmd_baseline(const BaselineArgs& a) {
  if (a.kind == "diag") {
    if (a.src.empty() || a.dst.empty()) throw ParameterError("baseline diag needs --src-illum and --dst-illum");
    print_matrix(diagonal_transform(parse_illuminant(a.src, "src"), parse_illuminant(a.dst, "dst")));
    return 0;
  }
  if (a.bank.empty()) throw ParameterError("baseline knn needs --bank");
  const auto j = io::read_json(a.bank);
  if (j.value("kind", "") == "sensor") {
    if (a.illum.empty()) throw ParameterError("a sensor bank needs --illum");
    print_matrix(knn_sensor_transform(sensor_bank_from_json(j), parse_illuminant(a.illum, "illum"), a.k));
    return 0;
  }
  if (a.src.empty() || a.dst.empty()) throw ParameterError("baseline knn needs --src-illum and --dst-illum");
  print_matrix(knn_transform(bank_from_json(j), parse_illuminant(a.src, "src"), parse_illuminant(a.dst, "dst"),
                             knn_variant_from_string(a.variant), a.k));
  return 0;
}

struct FitBankArgs {
  std::string data;
  std::string camera;
  std::string camera_b;
  std::string out;
};

int cmd_fit_bank(const FitBankArgs& a) {
  const Dataset ds = load_dataset(a.data);
  Json j;
  if (a.camera_b.empty()) {
    const auto ex = build_illum_experiment(ds, a.camera, 1.0);
    j = bank_to_json(build_transform_bank(ex.train_illums, ex.train_images), a.camera);
  } else {
    const auto ex = build_sensor_experiment(ds, a.camera, a.camera_b);
    j = sensor_bank_to_json(build_sensor_bank(ex.data.train, ex.train_illums), a.camera, a.camera_b);
  }
  io::write_text(a.out, j.dump() + "\n");
  write_provenance(a.out, "fit-bank", {{"data", a.data}, {"camera", a.camera}, {"camera_b", a.camera_b}});
  return 0;
}

struct OracleArgs {
  std::string model;
  std::string data;
  std::string camera;
  std::string camera_b;
  std::string scene;
  std::string pair;
  std::string illum;
  std::uint64_t seed = 1;
  int epochs = 200;
  double lr = 0.001;
};

int cmd_oracle(const OracleArgs& a) {
  const MlpModel model = load_model(a.model);
  const Dataset ds = load_dataset(a.data);
  EvalCase c;
  c.scene = a.scene;
  if (model.mode() == MapMode::kIllum) {
    const auto ids = split_list(a.pair);
    if (ids.size() != 2) throw ParameterError("--pair expects SRC,DST illuminant ids");
    c.camera = a.camera;
    c.src = ds.illuminant(a.camera, ids[0]);
    c.dst = ds.illuminant(a.camera, ids[1]);
    c.src_img = ds.image(a.camera, a.scene, ids[0]);
    c.dst_img = ds.image(a.camera, a.scene, ids[1]);
  } else {
    if (a.camera_b.empty() || a.illum.empty()) throw ParameterError("a sensor oracle needs --camera-b and --illum");
    c.camera = sensor_pair_label(a.camera, a.camera_b);
    c.src = ds.illuminant(a.camera, a.illum);
    c.dst = ds.illuminant(a.camera_b, a.illum);
    c.src_img = ds.image(a.camera, a.scene, a.illum);
    c.dst_img = ds.image(a.camera_b, a.scene, a.illum);
  }
  const OracleConfig cfg{a.epochs, a.lr, 1000};
  const auto r = finetune_oracle(model, make_case_item(c, model.mode()), cfg, case_seed(c, a.seed));
  print_matrix(r.transform);
  std::printf("initial_mae %.6f\nfinal_mae %.6f\nbest_epoch %d\n", r.initial_mae, r.final_mae, r.best_epoch);
  return 0;
}

struct EvalArgs {
  std::string method = "all";
  std::string data;
  std::string camera;
  std::string camera_b;
  std::string model;
  std::string bank;
  std::string config;
  std::string out_report;
  std::string out_aggregate;
  std::string out_table;
  std::string error_maps;
  std::uint64_t seed = 1;
  int threads = 1;
  int repeats = 1;
  int epochs = -1;
  int k = 2;
};

void write_error_maps(const std::string& dir, const std::string& name, const MappingMethod& method,
                      const std::vector<EvalCase>& cases) {
  for (const auto& c : cases) {
    const RawImage pred = apply_transform(method(c), *c.src_img);
    RawImage map;
    try {
      evaluate_pair(pred, *c.dst_img, c.dst, &map);
    } catch (const EmptyMaskError&) {
      continue;
    }
    io::write_image(fs::path(dir) / name / file_safe(c.camera) / c.scene / (c.src.id + "__" + c.dst.id + ".rawf"), map);
  }
}

int cmd_eval(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const bool sensor = !a.camera_b.empty();
  const MapMode mode = sensor ? MapMode::kSensor : MapMode::kIllum;
  TrainConfig cfg = load_config(mode, a.config);
  if (a.epochs >= 0) cfg.epochs = a.epochs;

  std::vector<std::string> cams = a.camera.empty() ? ds.cameras : split_list(a.camera);
  if (sensor && cams.size() != 1) throw ParameterError("sensor evaluation needs exactly one --camera");

  std::vector<std::string> wanted = split_list(a.method);
  if (wanted.empty()) throw ParameterError("--method must not be empty");
  auto want = [&](const std::string& m) {
    return std::find(wanted.begin(), wanted.end(), m) != wanted.end() ||
           std::find(wanted.begin(), wanted.end(), "all") != wanted.end();
  };
  std::vector<KnnVariant> variants;
  for (const auto& w : wanted) {
    if (w == "all" || w == "knn") {
      variants.assign(std::begin(kAllKnnVariants), std::end(kAllKnnVariants));
      break;
    }
    if (w.rfind("knn:", 0) == 0) variants.push_back(knn_variant_from_string(w.substr(4)));
    else if (w != "diag" && w != "mlp" && w != "oracle") variants.push_back(knn_variant_from_string(w));
  }

  std::optional<MlpModel> given;
  if (!a.model.empty()) given = load_model(a.model);
  if (given && given->mode() != mode) throw ParameterError("--model was trained for a different mapping mode");

  std::vector<ReportRow> rows;
  const auto warn = [](const std::string& m) { log_line("warning: " + m); };
  auto run = [&](const std::string& name, const MappingMethod& m, const std::vector<EvalCase>& cases) {
    const auto r = evaluate_method(name, m, cases, a.threads, warn);
    rows.insert(rows.end(), r.begin(), r.end());
    if (!a.error_maps.empty()) write_error_maps(a.error_maps, name, m, cases);
  };
  auto run_learned = [&](const std::string& label, const TrainingSet& data, const std::vector<EvalCase>& cases) {
    if (!want("mlp") && !want("oracle")) return;
    std::vector<std::vector<ReportRow>> mlp_runs;
    std::vector<std::vector<ReportRow>> oracle_runs;
    const int repeats = given ? 1 : std::max(1, a.repeats);
    for (int r = 0; r < repeats; ++r) {
      const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(r);
      std::shared_ptr<const MlpModel> model;
      if (given) {
        model = std::make_shared<const MlpModel>(*given);
      } else {
        log_line("training " + std::string(to_string(mode)) + " model for " + label + " (seed " + std::to_string(seed) + ")");
        model = std::make_shared<const MlpModel>(train_mlp(data, mode, cfg, seed).model);
      }
      if (want("mlp")) mlp_runs.push_back(evaluate_method("mlp", mlp_method(model), cases, a.threads, warn));
      if (want("oracle")) {
        oracle_runs.push_back(evaluate_method("oracle", oracle_method(model, OracleConfig{}, seed), cases, a.threads, warn));
      }
      if (!a.error_maps.empty() && r == 0) {
        if (want("mlp")) write_error_maps(a.error_maps, "mlp", mlp_method(model), cases);
        if (want("oracle")) write_error_maps(a.error_maps, "oracle", oracle_method(model, OracleConfig{}, seed), cases);
      }
    }
    const auto m = average_repeats(mlp_runs);
    const auto o = average_repeats(oracle_runs);
    rows.insert(rows.end(), m.begin(), m.end());
    rows.insert(rows.end(), o.begin(), o.end());
  };

  if (!sensor) {
    for (const auto& cam : cams) {
      const auto ex = build_illum_experiment(ds, cam, cfg.hard_pair_fraction);
      if (want("diag")) run("diag", diagonal_method(), ex.cases);
      if (!variants.empty()) {
        std::shared_ptr<const TransformBank> bank;
        if (!a.bank.empty()) {
          bank = std::make_shared<const TransformBank>(bank_from_json(io::read_json(a.bank)));
        } else {
          bank = std::make_shared<const TransformBank>(build_transform_bank(ex.train_illums, ex.train_images));
        }
        for (auto v : variants) run(std::string(to_string(v)), knn_method(bank, v, a.k), ex.cases);
      }
      run_learned(cam, ex.data, ex.cases);
    }
  } else {
    const auto ex = build_sensor_experiment(ds, cams[0], a.camera_b);
    if (want("diag")) run("diag", diagonal_method(), ex.cases);
    if (!variants.empty()) {
      std::shared_ptr<const SensorBank> bank;
      if (!a.bank.empty()) {
        bank = std::make_shared<const SensorBank>(sensor_bank_from_json(io::read_json(a.bank)));
      } else {
        bank = std::make_shared<const SensorBank>(build_sensor_bank(ex.data.train, ex.train_illums));
      }
      run("KNN", knn_sensor_method(bank, a.k), ex.cases);
    }
    run_learned(sensor_pair_label(cams[0], a.camera_b), ex.data, ex.cases);
  }

  write_reports(rows, a.out_report, a.out_aggregate, a.out_table);
  if (!a.out_report.empty()) {
    write_provenance(a.out_report, "eval",
                     {{"method", a.method}, {"data", a.data}, {"camera", a.camera}, {"camera_b", a.camera_b},
                      {"model", a.model}, {"bank", a.bank}, {"seed", a.seed}, {"repeats", a.repeats}, {"config", cfg},
                      {"k", a.k}});
  }
  return 0;
}

struct PreprocessArgs {
  std::string in;
  std::string out;
  std::string sidecar;
  double black = -1.0;
  double white = -1.0;
  int downscale = 1;
};

int cmd_preprocess(const PreprocessArgs& a) {
  MosaicImage m = io::to_mosaic(io::read_rawf(a.in));
  if (!a.sidecar.empty()) {
    const auto j = io::read_json(a.sidecar);
    m.black_level = j.value("black_level", m.black_level);
    m.white_level = j.value("white_level", m.white_level);
    m.cfa = j.value("cfa", m.cfa);
  }
  if (a.black >= 0.0) m.black_level = a.black;
  if (a.white >= 0.0) m.white_level = a.white;
  const RawImage img = preprocess_mosaic(m, a.downscale);
  io::write_image(a.out, img);
  write_provenance(a.out, "preprocess", {{"in", a.in}, {"black", m.black_level}, {"white", m.white_level},
                                         {"downscale", a.downscale}});
  return 0;
}

struct BenchArgs {
  GenArgs gen;
  std::string data;
  std::uint64_t seed = 1;
  int threads = 1;
  int repeats = 1;
  int epochs = -1;
  bool no_oracle = false;
};

int cmd_bench(BenchArgs a) {
  const fs::path out = a.gen.out;
  fs::create_directories(out);
  Dataset ds;
  if (a.data.empty()) {
    GenArgs g = a.gen;
    g.out = (out / "data").string();
    ds = write_benchmark(make_benchmark(benchmark_options(g)), g.out, g.force);
    write_provenance(g.out, "gen-data", gen_params(g));
  } else {
    ds = load_dataset(a.data);
  }
  RunOptions opt;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.repeats = a.repeats;
  opt.with_oracle = !a.no_oracle;
  opt.log = log_line;
  if (a.epochs >= 0) {
    opt.illum_config.epochs = a.epochs;
    opt.sensor_config.epochs = a.epochs;
  }
  auto save = [&](const std::string& prefix, const RunReport& r) {
    write_reports(r.rows, (out / (prefix + "_report.csv")).string(), (out / (prefix + "_aggregate.csv")).string(),
                  (out / (prefix + "_table.txt")).string());
    for (const auto& m : r.models) {
      io::write_text(out / "models" / (prefix + "_" + file_safe(m.label) + "_r" + std::to_string(m.repeat) + ".json"),
                     model_to_json(m.result.model).dump(2) + "\n");
    }
  };
  save("illum", run_illum_benchmark(ds, ds.cameras, opt));
  if (ds.cameras.size() >= 2) save("sensor", run_sensor_benchmark(ds, ds.cameras[0], ds.cameras[1], opt));
  write_provenance(out, "bench", {{"data", a.data.empty() ? "data" : a.data}, {"generation", gen_params(a.gen)},
                                  {"seed", a.seed}, {"repeats", a.repeats}, {"epochs", a.epochs},
                                  {"oracle", !a.no_oracle}, {"illum_config", opt.illum_config},
                                  {"sensor_config", opt.sensor_config}});
  return 0;
}

void add_gen_options(CLI::App* sub, GenArgs& g) {
  sub->add_option("--seed", g.seed, "Generator seed");
  sub->add_option("--cameras", g.cameras, "Comma-separated camera presets (broadband_a, broadband_b, narrowband, delta)");
  sub->add_option("--n-train", g.n_train, "Training lights, D65 included");
  sub->add_option("--n-val", g.n_val, "Validation lights");
  sub->add_option("--n-test", g.n_test, "Test lights");
  sub->add_option("--blackbody-fraction", g.blackbody_fraction, "Share of blackbody lights among the random ones");
  sub->add_flag("--peak-exposure", g.peak_exposure, "Expose every image so that nothing clips");
  sub->add_flag("--force", g.force, "Replace an existing benchmark directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rawmap: illumination and sensor mapping of RAW images with tiny MLPs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen-data", "Generate a synthetic benchmark");
  add_gen_options(s_gen, gen);
  s_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train an illumination or sensor mapping MLP");
  s_train->add_option("mode", train.mode, "illum or sensor")->required()->check(CLI::IsMember({"illum", "sensor"}));
  s_train->add_option("--data", train.data, "Benchmark directory or manifest")->required();
  s_train->add_option("--camera", train.camera, "Camera (source sensor in sensor mode)")->required();
  s_train->add_option("--camera-b", train.camera_b, "Target sensor (sensor mode)");
  s_train->add_option("--config", train.config, "JSON overrides of the training configuration");
  s_train->add_option("--epochs", train.epochs, "Override the epoch count");
  s_train->add_option("--seed", train.seed, "Training seed");
  s_train->add_option("--out-model", train.out_model, "Model JSON to write")->required();
  s_train->add_option("--curve", train.curve, "Write the training curve as CSV");
  s_train->add_flag("--quiet", train.quiet, "Do not print per-epoch progress");

  PredictArgs pred;
  auto* s_pred = app.add_subcommand("predict", "Print the 3x3 transform a model predicts");
  s_pred->add_option("--model", pred.model, "Model JSON")->required();
  s_pred->add_option("--src-illum", pred.src, "Source light R,G,B (illumination model)");
  s_pred->add_option("--dst-illum", pred.dst, "Target light R,G,B (illumination model)");
  s_pred->add_option("--illum", pred.illum, "Light R,G,B in the source sensor (sensor model)");

  PredictArgs apply;
  auto* s_apply = app.add_subcommand("apply", "Apply a transform to a RAWF image");
  s_apply->add_option("--model", apply.model, "Model JSON");
  s_apply->add_option("--matrix", apply.matrix, "Nine comma-separated entries, row-major");
  s_apply->add_option("--src-illum", apply.src, "Source light R,G,B");
  s_apply->add_option("--dst-illum", apply.dst, "Target light R,G,B");
  s_apply->add_option("--illum", apply.illum, "Light R,G,B (sensor model)");
  s_apply->add_option("--in", apply.in, "Input RAWF")->required();
  s_apply->add_option("--out", apply.out, "Output RAWF")->required();

  BaselineArgs base;
  auto* s_base = app.add_subcommand("baseline", "Print a baseline transform");
  s_base->add_option("kind", base.kind, "diag or knn")->required()->check(CLI::IsMember({"diag", "knn"}));
  s_base->add_option("--variant", base.variant, "1NN-1NN, 1NN-KNN, KNN-1NN or KNN-D65-KNN");
  s_base->add_option("--bank", base.bank, "Transform bank JSON (knn)");
  s_base->add_option("--k", base.k, "Neighbours on interpolated sides");
  s_base->add_option("--src-illum", base.src, "Source light R,G,B");
  s_base->add_option("--dst-illum", base.dst, "Target light R,G,B");
  s_base->add_option("--illum", base.illum, "Light R,G,B (sensor bank)");

  FitBankArgs bank;
  auto* s_bank = app.add_subcommand("fit-bank", "Fit the least-squares transform bank of a camera");
  s_bank->add_option("--data", bank.data, "Benchmark directory or manifest")->required();
  s_bank->add_option("--camera", bank.camera, "Camera (source sensor for a sensor bank)")->required();
  s_bank->add_option("--camera-b", bank.camera_b, "Target sensor; builds a sensor bank");
  s_bank->add_option("--out", bank.out, "Bank JSON to write")->required();

  OracleArgs orc;
  auto* s_orc = app.add_subcommand("oracle", "Fine-tune a model on one test pair");
  s_orc->add_option("--model", orc.model, "Model JSON")->required();
  s_orc->add_option("--data", orc.data, "Benchmark directory or manifest")->required();
  s_orc->add_option("--camera", orc.camera, "Camera (source sensor in sensor mode)")->required();
  s_orc->add_option("--camera-b", orc.camera_b, "Target sensor (sensor mode)");
  s_orc->add_option("--scene", orc.scene, "Scene id")->required();
  s_orc->add_option("--pair", orc.pair, "SRC,DST light ids (illumination mode)");
  s_orc->add_option("--illum", orc.illum, "Light id (sensor mode)");
  s_orc->add_option("--seed", orc.seed, "Sampling seed");
  s_orc->add_option("--epochs", orc.epochs, "Fine-tuning epochs");
  s_orc->add_option("--lr", orc.lr, "Fine-tuning learning rate");

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate mapping methods on the test split");
  s_eval->add_option("--method", ev.method,
                     "Comma-separated: diag, knn, knn:<variant>, <variant>, mlp, oracle, all");
  s_eval->add_option("--data,--manifest", ev.data, "Benchmark directory or manifest")->required();
  s_eval->add_option("--camera", ev.camera, "Camera(s); all cameras when omitted");
  s_eval->add_option("--camera-b", ev.camera_b, "Target sensor; switches to sensor mapping");
  s_eval->add_option("--model", ev.model, "Use this model instead of training one");
  s_eval->add_option("--bank", ev.bank, "Use this bank instead of fitting one");
  s_eval->add_option("--config", ev.config, "JSON overrides of the training configuration");
  s_eval->add_option("--epochs", ev.epochs, "Override the epoch count");
  s_eval->add_option("--seed", ev.seed, "Training and oracle seed");
  s_eval->add_option("--repeats", ev.repeats, "Train this many models and average per pair");
  s_eval->add_option("--threads", ev.threads, "Worker threads for evaluation");
  s_eval->add_option("--k", ev.k, "Neighbours for KNN interpolation");
  s_eval->add_option("--out-report", ev.out_report, "Per-pair report CSV");
  s_eval->add_option("--out-aggregate", ev.out_aggregate, "Per-camera aggregate CSV");
  s_eval->add_option("--out-table", ev.out_table, "Rendered table");
  s_eval->add_option("--error-maps", ev.error_maps, "Directory for per-pair error maps (RAWF)");

  PreprocessArgs pre;
  auto* s_pre = app.add_subcommand("preprocess", "Level-correct, demosaic and downsample a mosaic");
  s_pre->add_option("--in", pre.in, "Mosaic RAWF")->required();
  s_pre->add_option("--sidecar", pre.sidecar, "JSON with black_level, white_level and cfa");
  s_pre->add_option("--black", pre.black, "Black level (DN)");
  s_pre->add_option("--white", pre.white, "White level (DN)");
  s_pre->add_option("--downscale", pre.downscale, "Integer downscale factor");
  s_pre->add_option("--out", pre.out, "Output RAWF")->required();

  BenchArgs bench;
  auto* s_bench = app.add_subcommand("bench", "Generate (or load) a benchmark and run every method on it");
  add_gen_options(s_bench, bench.gen);
  s_bench->add_option("--out", bench.gen.out, "Output directory")->required();
  s_bench->add_option("--data", bench.data, "Use an existing benchmark instead of generating one");
  s_bench->add_option("--train-seed", bench.seed, "Training and oracle seed");
  s_bench->add_option("--threads", bench.threads, "Worker threads for evaluation");
  s_bench->add_option("--repeats", bench.repeats, "Models trained per experiment");
  s_bench->add_option("--epochs", bench.epochs, "Override the epoch count");
  s_bench->add_flag("--no-oracle", bench.no_oracle, "Skip the per-pair oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*s_gen) return cmd_gen(gen);
    if (*s_train) return cmd_train(train);
    if (*s_pred) return cmd_predict(pred);
    if (*s_apply) return cmd_apply(apply);
    if (*s_base) return cmd_baseline(base);
    if (*s_bank) return cmd_fit_bank(bank);
    if (*s_orc) return cmd_oracle(orc);
    if (*s_eval) return cmd_eval(ev);
    if (*s_pre) return cmd_preprocess(pre);
    if (*s_bench) return cmd_bench(bench);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}
