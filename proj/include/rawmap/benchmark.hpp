// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/io.hpp"
#include "rawmap/spectral.hpp"

namespace rawmap {

inline constexpr double kSpdPower = 800.0;

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  [[nodiscard]] std::vector<std::string> all() const {
    std::vector<std::string> out(train);
    out.insert(out.end(), val.begin(), val.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
  }

  void validate() const {
    auto ids = all();
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw DataError("dataset split lists overlap");
  }
};

struct BenchmarkOptions {
  std::uint64_t seed = 7;
  int n_train = 60;  // includes the mandatory D65 light
  int n_val = 10;
  int n_test = 20;
  double blackbody_fraction = 0.5;  // share of random lights drawn from the blackbody family
  double led_sigma_min = 25.0;
  double led_sigma_max = 60.0;
  std::vector<std::string> cameras = {"broadband_a", "broadband_b"};
  int train_size = 64;
  int train_colors = 240;
  int train_neutrals = 16;
  int test_scenes = 4;
  int test_size = 48;
  int test_colors = 128;
  int test_neutrals = 16;
  int block = 4;
  int chart_neutrals = 6;
  int test_charts = 2;
  ChartLayout chart;
  bool raw_mosaics = true;
  // Auto exposure (99th-percentile green at 0.9) for scenes, or peak exposure
  // everywhere so that nothing clips.
  bool peak_exposure_only = false;

  void validate() const {
    if (n_train < 2 || n_val < 1 || n_test < 1) throw ParameterError("need at least 2 train, 1 val and 1 test illuminant");
    if (cameras.empty()) throw ParameterError("at least one camera is required");
    if (test_scenes < 1 || test_charts < 1) throw ParameterError("need at least one test scene and test chart");
    if (chart_neutrals < 0 || chart_neutrals >= chart.patches()) throw ParameterError("bad chart neutral count");
    if (!(blackbody_fraction >= 0.0 && blackbody_fraction <= 1.0)) throw ParameterError("blackbody_fraction must lie in [0, 1]");
    if (!(led_sigma_min > 0.0 && led_sigma_max >= led_sigma_min)) throw ParameterError("bad LED width range");
  }
};

/// Everything the simulator needs to render the benchmark.
struct Benchmark {
  BenchmarkOptions options;
  std::vector<SpectralCurve> spds;  // split order: train, val, test
  DatasetSplit split;
  std::vector<CameraModel> cameras;
  SpectralScene train_scene;
  std::vector<SpectralScene> test_scenes;
  SpectralScene chart_train;
  SpectralScene chart_val;
  std::vector<SpectralScene> chart_tests;

  [[nodiscard]] const SpectralCurve& spd(const std::string& id) const {
    for (const auto& s : spds) {
      if (s.id == id) return s;
    }
    throw DataError("unknown illuminant '" + id + "'");
  }
};

namespace detail {

inline std::string numbered(const std::string& prefix, int i, int width = 3) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

inline std::vector<SpectralCurve> random_palette(std::mt19937_64& rng, const std::string& prefix, int colors,
                                                 int neutrals) {
  std::vector<SpectralCurve> p;
  for (int i = 0; i < colors; ++i) p.push_back(random_reflectance(rng, numbered(prefix + "_r", i)));
  for (int i = 0; i < neutrals; ++i) p.push_back(random_neutral(rng, numbered(prefix + "_n", i, 2)));
  return p;
}

inline std::vector<SpectralCurve> chart_palette(std::mt19937_64& rng, const std::string& prefix, const ChartLayout& layout,
                                                int neutrals) {
  std::vector<SpectralCurve> p;
  const int colors = layout.patches() - neutrals;
  for (int i = 0; i < colors; ++i) p.push_back(random_reflectance(rng, numbered(prefix + "_r", i, 2)));
  // Grey ramp, brightest first.
  for (int i = 0; i < neutrals; ++i) {
    const double level = 0.9 * std::pow(0.6, i);
    p.push_back(SpectralCurve::constant(level, CurveKind::kReflectance, numbered(prefix + "_n", i, 2)));
  }
  return p;
}

}  // namespace detail

/// Deterministic benchmark description for a seed. Lights are half blackbody,
/// half LED mixtures, all normalized to the same power; "D65" is always the
/// first training light.
inline Benchmark make_benchmark(const BenchmarkOptions& opt) {
  opt.validate();
  Benchmark b;
  b.options = opt;
  std::mt19937_64 rng(opt.seed);

  b.spds.push_back(normalize_power(blackbody_spd(6500.0, std::string(kD65Id)), kSpdPower));
  b.split.train.push_back(std::string(kD65Id));
  const int n_random = opt.n_train - 1 + opt.n_val + opt.n_test;
  std::bernoulli_distribution family(opt.blackbody_fraction);
  for (int i = 0; i < n_random; ++i) {
    const std::string id = detail::numbered("L", i);
    auto spd = family(rng) ? random_blackbody(rng, id) : random_led(rng, id, opt.led_sigma_min, opt.led_sigma_max);
    b.spds.push_back(normalize_power(std::move(spd), kSpdPower));
    if (i < opt.n_train - 1) {
      b.split.train.push_back(id);
    } else if (i < opt.n_train - 1 + opt.n_val) {
      b.split.val.push_back(id);
    } else {
      b.split.test.push_back(id);
    }
  }
  b.split.validate();

  for (const auto& name : opt.cameras) b.cameras.push_back(make_camera(name));

  b.train_scene = make_block_scene("train", opt.train_size, opt.train_size, opt.block,
                                   detail::random_palette(rng, "train", opt.train_colors, opt.train_neutrals), rng);
  for (int s = 0; s < opt.test_scenes; ++s) {
    const std::string id = "test_" + std::to_string(s);
    b.test_scenes.push_back(make_block_scene(id, opt.test_size, opt.test_size, opt.block,
                                             detail::random_palette(rng, id, opt.test_colors, opt.test_neutrals), rng));
  }
  b.chart_train = make_chart_scene("chart_train", detail::chart_palette(rng, "chart_train", opt.chart, opt.chart_neutrals), opt.chart);
  b.chart_val = make_chart_scene("chart_val", detail::chart_palette(rng, "chart_val", opt.chart, opt.chart_neutrals), opt.chart);
  for (int s = 0; s < opt.test_charts; ++s) {
    const std::string id = "chart_test_" + std::to_string(s);
    b.chart_tests.push_back(make_chart_scene(id, detail::chart_palette(rng, id, opt.chart, opt.chart_neutrals), opt.chart));
  }
  return b;
}

/// Scene of `neutrals` spectrally flat patches laid out in square blocks.
inline SpectralScene make_neutral_scene(std::string id, int neutrals, int block, std::mt19937_64& rng) {
  std::vector<SpectralCurve> palette;
  for (int i = 0; i < neutrals; ++i) palette.push_back(random_neutral(rng, detail::numbered("n", i)));
  int side = 1;
  while (side * side < neutrals) ++side;
  return make_block_scene(std::move(id), side * block, side * block, block, std::move(palette), rng);
}

// ---------------------------------------------------------------------------
// Materialized dataset: per-camera illuminant tables and rendered images.

struct SceneRoles {
  std::string train;
  std::vector<std::string> test;
  std::string chart_train;
  std::string chart_val;
  std::vector<std::string> chart_test;
};

struct Dataset {
  std::uint64_t seed = 0;
  DatasetSplit split;
  std::vector<std::string> cameras;
  SceneRoles scenes;
  ChartLayout chart;
  std::map<std::string, std::map<std::string, Illuminant>> illuminants;  // camera -> light id
  std::map<std::string, std::shared_ptr<const RawImage>> images;         // camera/scene/light

  static std::string key(const std::string& cam, const std::string& scene, const std::string& illum) {
    return cam + "/" + scene + "/" + illum;
  }

  [[nodiscard]] const Illuminant& illuminant(const std::string& cam, const std::string& id) const {
    const auto c = illuminants.find(cam);
    if (c == illuminants.end()) throw DataError("camera '" + cam + "' is not in the dataset");
    const auto l = c->second.find(id);
    if (l == c->second.end()) throw DataError("illuminant '" + id + "' is not known for camera '" + cam + "'");
    return l->second;
  }

  [[nodiscard]] std::vector<Illuminant> illuminants_for(const std::string& cam, const std::vector<std::string>& ids) const {
    std::vector<Illuminant> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(illuminant(cam, id));
    return out;
  }

  [[nodiscard]] std::shared_ptr<const RawImage> image(const std::string& cam, const std::string& scene,
                                                      const std::string& illum) const {
    const auto it = images.find(key(cam, scene, illum));
    if (it == images.end()) throw DataError("no image for " + key(cam, scene, illum));
    return it->second;
  }

  [[nodiscard]] bool has_camera(const std::string& cam) const { return illuminants.count(cam) > 0; }
};

/// Which lights each scene is rendered under.
inline std::vector<std::pair<const SpectralScene*, std::vector<std::string>>> render_plan(const Benchmark& b) {
  std::vector<std::string> train_val(b.split.train);
  train_val.insert(train_val.end(), b.split.val.begin(), b.split.val.end());
  std::vector<std::pair<const SpectralScene*, std::vector<std::string>>> plan;
  plan.emplace_back(&b.train_scene, train_val);
  for (const auto& s : b.test_scenes) plan.emplace_back(&s, b.split.test);
  plan.emplace_back(&b.chart_train, b.split.train);
  plan.emplace_back(&b.chart_val, b.split.val);
  for (const auto& s : b.chart_tests) plan.emplace_back(&s, b.split.test);
  return plan;
}

inline bool is_chart(const SpectralScene& s) { return s.id.rfind("chart", 0) == 0; }

/// Charts are exposed so the brightest patch channel sits at 0.9 and never
/// clips; other scenes use auto exposure unless `peak_only` is set.
inline RawImage render_benchmark_image(const CameraModel& cam, const SpectralScene& scene, const SpectralCurve& spd,
                                       bool peak_only = false) {
  const double exposure =
      peak_only || is_chart(scene) ? peak_exposure(scene, spd, cam) : auto_exposure(scene, spd, cam);
  return render(scene, spd, cam, exposure);
}

inline Dataset materialize(const Benchmark& b) {
  Dataset ds;
  ds.seed = b.options.seed;
  ds.split = b.split;
  ds.chart = b.options.chart;
  ds.scenes.train = b.train_scene.id;
  for (const auto& s : b.test_scenes) ds.scenes.test.push_back(s.id);
  ds.scenes.chart_train = b.chart_train.id;
  ds.scenes.chart_val = b.chart_val.id;
  for (const auto& s : b.chart_tests) ds.scenes.chart_test.push_back(s.id);
  const auto plan = render_plan(b);
  for (const auto& cam : b.cameras) {
    ds.cameras.push_back(cam.id);
    auto& table = ds.illuminants[cam.id];
    for (const auto& spd : b.spds) table.emplace(spd.id, illuminant_rgb(spd, cam));
    for (const auto& [scene, ids] : plan) {
      for (const auto& id : ids) {
        ds.images[Dataset::key(cam.id, scene->id, id)] =
            std::make_shared<const RawImage>(render_benchmark_image(cam, *scene, b.spd(id), b.options.peak_exposure_only));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk layout

inline nlohmann::ordered_json scene_to_json(const SpectralScene& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["width"] = s.width;
  j["height"] = s.height;
  auto palette = nlohmann::ordered_json::array();
  for (const auto& c : s.palette) palette.push_back({{"id", c.id}, {"values", c.values}});
  j["palette"] = std::move(palette);
  j["indices"] = s.indices;
  return j;
}

inline SpectralScene scene_from_json(const nlohmann::ordered_json& j) {
  SpectralScene s;
  try {
    s.id = j.at("id").get<std::string>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    for (const auto& p : j.at("palette")) {
      SpectralCurve c;
      c.kind = CurveKind::kReflectance;
      c.id = p.at("id").get<std::string>();
      const auto v = p.at("values").get<std::vector<double>>();
      if (v.size() != c.values.size()) throw DataError("scene palette curve has the wrong sample count");
      std::copy(v.begin(), v.end(), c.values.begin());
      s.palette.push_back(std::move(c));
    }
    s.indices = j.at("indices").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scene JSON: ") + e.what());
  }
  s.validate();
  return s;
}

namespace detail {

inline void prepare_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ParameterError("output directory '" + dir.string() + "' exists (use --force to overwrite)");
    if (!fs::exists(dir / "manifest.json")) {
      throw ParameterError("refusing to overwrite '" + dir.string() + "': it does not look like a benchmark directory");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

}  // namespace detail

/// Writes the benchmark under `dir`; returns the materialized dataset.
inline Dataset write_benchmark(const Benchmark& b, const std::filesystem::path& dir, bool force = false) {
  using Json = nlohmann::ordered_json;
  detail::prepare_output_dir(dir, force);
  Dataset ds = materialize(b);

  Json manifest;
  manifest["format"] = "rawmap-benchmark";
  manifest["version"] = 1;
  manifest["seed"] = b.options.seed;
  manifest["wavelengths"] = {{"min_nm", kWavelengthMin}, {"max_nm", kWavelengthMax}, {"step_nm", kWavelengthStep}};
  manifest["splits"] = {{"train", b.split.train}, {"val", b.split.val}, {"test", b.split.test}};

  Json spds = Json::object();
  for (const auto& spd : b.spds) {
    const std::string rel = "spds/" + spd.id + ".csv";
    io::write_spectral_csv(dir / rel, spd);
    spds[spd.id] = rel;
  }
  manifest["spds"] = std::move(spds);

  Json cams = Json::array();
  for (const auto& cam : b.cameras) {
    const std::string base = "cameras/" + cam.id + "/";
    Json sens = Json::array();
    const char* names[3] = {"R", "G", "B"};
    for (int c = 0; c < 3; ++c) {
      const std::string rel = base + "sensitivity_" + names[c] + ".csv";
      io::write_spectral_csv(dir / rel, cam.sensitivities[c]);
      sens.push_back(rel);
    }
    std::vector<Illuminant> table;
    for (const auto& spd : b.spds) table.push_back(ds.illuminant(cam.id, spd.id));
    io::write_illuminant_csv(dir / (base + "illuminants.csv"), table);
    cams.push_back({{"id", cam.id},
                    {"black_level", cam.black_level},
                    {"white_level", cam.white_level},
                    {"downscale_factor", cam.downscale_factor},
                    {"sensitivities", std::move(sens)},
                    {"illuminants", base + "illuminants.csv"}});
  }
  manifest["cameras"] = std::move(cams);

  const auto plan = render_plan(b);
  Json scenes = Json::array();
  for (const auto& [scene, ids] : plan) {
    const std::string rel = "scenes/" + scene->id + ".json";
    io::write_text(dir / rel, scene_to_json(*scene).dump() + "\n");
    std::string role = "test";
    if (scene == &b.train_scene) role = "train";
    else if (scene == &b.chart_train) role = "chart_train";
    else if (scene == &b.chart_val) role = "chart_val";
    else if (is_chart(*scene)) role = "chart_test";
    scenes.push_back({{"id", scene->id}, {"role", role}, {"file", rel}, {"illuminants", ids}});
  }
  manifest["scenes"] = std::move(scenes);
  manifest["chart_layout"] = {{"cols", b.options.chart.cols}, {"rows", b.options.chart.rows},
                              {"patch_size", b.options.chart.patch_size}};

  Json images = Json::array();
  for (const auto& cam : b.cameras) {
    for (const auto& [scene, ids] : plan) {
      for (const auto& id : ids) {
        const std::string rel = "images/" + cam.id + "/" + scene->id + "/" + id + ".rawf";
        io::write_image(dir / rel, *ds.image(cam.id, scene->id, id));
        images.push_back({{"camera", cam.id}, {"scene", scene->id}, {"illuminant", id}, {"file", rel}});
      }
    }
  }
  manifest["images"] = std::move(images);

  // One full-resolution mosaic per camera, the way a sensor would deliver it.
  Json raw = Json::array();
  if (b.options.raw_mosaics) {
    const auto& d65 = b.spd(std::string(kD65Id));
    for (const auto& cam : b.cameras) {
      const double exposure = auto_exposure(b.train_scene, d65, cam);
      const MosaicImage m = render_mosaic(b.train_scene, d65, cam, exposure, cam.downscale_factor);
      const std::string rel = "raw/" + cam.id + "_" + b.train_scene.id + "_D65.rawf";
      io::write_rawf(dir / rel, io::to_blob(m));
      const std::string sidecar = "raw/" + cam.id + "_" + b.train_scene.id + "_D65.json";
      io::write_json(dir / sidecar, {{"black_level", m.black_level}, {"white_level", m.white_level}, {"cfa", m.cfa},
                                     {"downscale_factor", cam.downscale_factor}});
      raw.push_back({{"camera", cam.id}, {"scene", b.train_scene.id}, {"illuminant", d65.id}, {"file", rel},
                     {"sidecar", sidecar}});
    }
  }
  manifest["raw"] = std::move(raw);
  io::write_json(dir / "manifest.json", manifest);
  return ds;
}

/// Loads the images and illuminant tables referenced by a manifest.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::is_directory(dir) ? dir / "manifest.json" : dir;
  const fs::path root = manifest_path.parent_path();
  const auto m = io::read_json(manifest_path);
  Dataset ds;
  try {
    if (m.at("format") != "rawmap-benchmark") throw DataError("not a rawmap benchmark manifest");
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.split.train = m.at("splits").at("train").get<std::vector<std::string>>();
    ds.split.val = m.at("splits").at("val").get<std::vector<std::string>>();
    ds.split.test = m.at("splits").at("test").get<std::vector<std::string>>();
    ds.split.validate();
    const auto& layout = m.at("chart_layout");
    ds.chart = {layout.at("cols").get<int>(), layout.at("rows").get<int>(), layout.at("patch_size").get<int>()};
    for (const auto& cam : m.at("cameras")) {
      const auto id = cam.at("id").get<std::string>();
      ds.cameras.push_back(id);
      auto& table = ds.illuminants[id];
      for (auto& l : io::read_illuminant_csv(root / cam.at("illuminants").get<std::string>())) {
        const auto lid = l.id;
        table.emplace(lid, std::move(l));
      }
    }
    for (const auto& s : m.at("scenes")) {
      const auto role = s.at("role").get<std::string>();
      const auto id = s.at("id").get<std::string>();
      if (role == "train") ds.scenes.train = id;
      else if (role == "test") ds.scenes.test.push_back(id);
      else if (role == "chart_train") ds.scenes.chart_train = id;
      else if (role == "chart_val") ds.scenes.chart_val = id;
      else if (role == "chart_test") ds.scenes.chart_test.push_back(id);
      else throw DataError("unknown scene role '" + role + "'");
    }
    for (const auto& img : m.at("images")) {
      const auto cam = img.at("camera").get<std::string>();
      const auto scene = img.at("scene").get<std::string>();
      const auto illum = img.at("illuminant").get<std::string>();
      const fs::path file = root / img.at("file").get<std::string>();
      if (!fs::exists(file)) throw DataError("missing image file '" + file.string() + "'");
      auto raw = io::read_image(file);
      if (raw.camera_id != cam || raw.illuminant_id != illum) throw DataError("image metadata disagrees with manifest: " + file.string());
      ds.images[Dataset::key(cam, scene, illum)] = std::make_shared<const RawImage>(std::move(raw));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return ds;
}

}  // namespace rawmap
