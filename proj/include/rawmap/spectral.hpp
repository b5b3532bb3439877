// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/preprocess.hpp"

namespace rawmap {

// Fixed sampling grid: 380..700 nm inclusive, 5 nm step.
inline constexpr int kWavelengthMin = 380;
inline constexpr int kWavelengthMax = 700;
inline constexpr int kWavelengthStep = 5;
inline constexpr int kWavelengthCount = (kWavelengthMax - kWavelengthMin) / kWavelengthStep + 1;
static_assert(kWavelengthCount == 65);

inline constexpr double wavelength_at(int i) { return kWavelengthMin + kWavelengthStep * i; }

enum class CurveKind { kSpd, kSensitivity, kReflectance };

inline std::string_view to_string(CurveKind k) {
  switch (k) {
    case CurveKind::kSpd: return "spd";
    case CurveKind::kSensitivity: return "sensitivity";
    case CurveKind::kReflectance: return "reflectance";
  }
  return "unknown";
}

inline CurveKind curve_kind_from_string(std::string_view s) {
  if (s == "spd") return CurveKind::kSpd;
  if (s == "sensitivity") return CurveKind::kSensitivity;
  if (s == "reflectance") return CurveKind::kReflectance;
  throw ParameterError("unknown curve kind '" + std::string(s) + "'");
}

struct SpectralCurve {
  std::array<double, kWavelengthCount> values{};
  CurveKind kind = CurveKind::kSpd;
  std::string id;

  static SpectralCurve constant(double v, CurveKind kind, std::string id = {}) {
    SpectralCurve c;
    c.values.fill(v);
    c.kind = kind;
    c.id = std::move(id);
    return c;
  }

  /// Rectangular-rule integral, sum(values) * 5 nm.
  [[nodiscard]] double integral() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * kWavelengthStep;
  }

  [[nodiscard]] int argmax() const {
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
  }

  void validate() const {
    for (double v : values) {
      if (!std::isfinite(v) || v < 0.0) throw DataError("curve '" + id + "' has negative or non-finite samples");
      if (kind == CurveKind::kReflectance && v > 1.0) throw DataError("reflectance '" + id + "' exceeds 1");
    }
  }
};

struct CameraModel {
  std::string id;
  std::array<SpectralCurve, 3> sensitivities;
  int black_level = 0;
  int white_level = 65535;
  int downscale_factor = 1;

  void validate() const {
    if (black_level >= white_level) throw ParameterError("camera '" + id + "': black level must be below white level");
    if (downscale_factor < 1) throw ParameterError("camera '" + id + "': downscale factor must be positive");
    for (const auto& s : sensitivities) {
      s.validate();
      if (!(s.integral() > 0.0)) throw DegenerateError("camera '" + id + "': sensitivity with zero area");
    }
  }
};

/// Per-pixel reflectance given as indices into a palette of curves.
struct SpectralScene {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<SpectralCurve> palette;
  std::vector<std::uint32_t> indices;

  void validate() const {
    if (width <= 0 || height <= 0) throw ShapeError("scene '" + id + "': dimensions must be positive");
    if (indices.size() != static_cast<std::size_t>(width) * height) {
      throw ShapeError("scene '" + id + "': index map size mismatch");
    }
    for (auto i : indices) {
      if (i >= palette.size()) throw DataError("scene '" + id + "': pixel index outside palette");
    }
    for (const auto& c : palette) {
      if (c.kind != CurveKind::kReflectance) throw ParameterError("scene '" + id + "': palette curves must be reflectances");
      c.validate();
    }
  }
};

// ---------------------------------------------------------------------------
// Curve construction

inline SpectralCurve gaussian_curve(double center_nm, double sigma_nm, double amplitude, CurveKind kind,
                                    std::string id = {}) {
  SpectralCurve c;
  c.kind = kind;
  c.id = std::move(id);
  for (int i = 0; i < kWavelengthCount; ++i) {
    const double d = (wavelength_at(i) - center_nm) / sigma_nm;
    c.values[i] = amplitude * std::exp(-0.5 * d * d);
  }
  return c;
}

/// Single non-zero sample at the grid point nearest `center_nm`.
inline SpectralCurve delta_curve(double center_nm, double value, CurveKind kind, std::string id = {}) {
  SpectralCurve c;
  c.kind = kind;
  c.id = std::move(id);
  const int i = static_cast<int>(std::lround((center_nm - kWavelengthMin) / kWavelengthStep));
  if (i < 0 || i >= kWavelengthCount) throw ParameterError("delta_curve: wavelength outside the grid");
  c.values[i] = value;
  return c;
}

inline SpectralCurve peak_normalized(SpectralCurve c) {
  const double peak = *std::max_element(c.values.begin(), c.values.end());
  if (!(peak > 0.0)) throw DegenerateError("curve '" + c.id + "' is identically zero");
  for (double& v : c.values) v /= peak;
  return c;
}

/// Planck's law sampled on the grid and scaled to unit peak.
inline SpectralCurve blackbody_spd(double temperature_k, std::string id = {}) {
  if (!(temperature_k >= 1500.0 && temperature_k <= 20000.0)) {
    throw ParameterError("blackbody_spd: temperature must lie in [1500, 20000] K");
  }
  constexpr double kSecondRadiation = 1.438776877e-2;  // hc/k_B in m*K
  SpectralCurve c;
  c.kind = CurveKind::kSpd;
  c.id = std::move(id);
  for (int i = 0; i < kWavelengthCount; ++i) {
    const double lambda = wavelength_at(i) * 1e-9;
    c.values[i] = 1.0 / (std::pow(lambda, 5) * std::expm1(kSecondRadiation / (lambda * temperature_k)));
  }
  return peak_normalized(std::move(c));
}

struct LedPeak {
  double center_nm;
  double width_nm;  // Gaussian standard deviation
  double amplitude;
};

/// Sum of Gaussian emission peaks, scaled to unit peak.
inline SpectralCurve led_spd(std::span<const LedPeak> peaks, std::string id = {}) {
  if (peaks.empty()) throw ParameterError("led_spd: no peaks given");
  SpectralCurve c;
  c.kind = CurveKind::kSpd;
  c.id = std::move(id);
  for (const auto& p : peaks) {
    if (p.center_nm < kWavelengthMin || p.center_nm > kWavelengthMax) throw ParameterError("led_spd: peak outside 380-700 nm");
    if (!(p.width_nm > 0.0) || !(p.amplitude > 0.0)) throw ParameterError("led_spd: widths and amplitudes must be positive");
    const auto g = gaussian_curve(p.center_nm, p.width_nm, p.amplitude, CurveKind::kSpd);
    for (int i = 0; i < kWavelengthCount; ++i) c.values[i] += g.values[i];
  }
  return peak_normalized(std::move(c));
}

/// Scales `spd` so its rectangular integral equals `target`.
inline SpectralCurve normalize_power(SpectralCurve spd, double target) {
  if (!(target > 0.0)) throw ParameterError("normalize_power: target must be positive");
  const double power = spd.integral();
  if (!(power > 0.0)) throw DegenerateError("normalize_power: spectrum '" + spd.id + "' has zero power");
  const double k = target / power;
  for (double& v : spd.values) v *= k;
  return spd;
}

// ---------------------------------------------------------------------------
// Image formation

/// Unclipped camera response sum_l S_c(l) P(l) R(l) dl for one reflectance.
inline Rgb spectral_response(const SpectralCurve& reflectance, const SpectralCurve& spd, const CameraModel& cam) {
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    const auto& s = cam.sensitivities[c].values;
    double acc = 0.0;
    for (int i = 0; i < kWavelengthCount; ++i) acc += s[i] * spd.values[i] * reflectance.values[i];
    out[c] = acc * kWavelengthStep;
  }
  return out;
}

inline void require_spd(const SpectralCurve& spd) {
  if (spd.kind != CurveKind::kSpd) {
    throw ParameterError("expected an spd curve for illumination, got a " + std::string(to_string(spd.kind)));
  }
}

inline std::vector<Rgb> palette_responses(const SpectralScene& scene, const SpectralCurve& spd, const CameraModel& cam) {
  std::vector<Rgb> out;
  out.reserve(scene.palette.size());
  for (const auto& r : scene.palette) {
    if (r.kind != CurveKind::kReflectance) throw ParameterError("scene palette curves must be reflectances");
    out.push_back(spectral_response(r, spd, cam));
  }
  return out;
}

/// Renders `scene` under `spd`. With `clip` the result saturates at 1.0
/// (white level).
inline RawImage render(const SpectralScene& scene, const SpectralCurve& spd, const CameraModel& cam, double exposure,
                       bool clip = true) {
  require_spd(spd);
  if (!(exposure > 0.0)) throw ParameterError("render: exposure must be positive");
  scene.validate();
  const auto responses = palette_responses(scene, spd, cam);
  RawImage img(scene.width, scene.height, 3);
  img.camera_id = cam.id;
  img.illuminant_id = spd.id;
  for (std::size_t i = 0; i < scene.indices.size(); ++i) {
    Rgb p = scaled(responses[scene.indices[i]], exposure);
    if (clip) {
      for (double& v : p) v = std::clamp(v, 0.0, 1.0);
    }
    img.set_pixel(i, p);
  }
  return img;
}

/// Camera RGB of a perfect white reflector, scaled so the largest channel is 1.
inline Illuminant illuminant_rgb(const SpectralCurve& spd, const CameraModel& cam) {
  require_spd(spd);
  if (!(spd.integral() > 0.0)) throw DegenerateError("illuminant_rgb: spectrum '" + spd.id + "' has zero power");
  const auto white = SpectralCurve::constant(1.0, CurveKind::kReflectance);
  Rgb rgb = spectral_response(white, spd, cam);
  const double m = std::max({rgb[0], rgb[1], rgb[2]});
  if (!(m > 0.0)) throw DegenerateError("illuminant_rgb: camera does not respond to '" + spd.id + "'");
  return {scaled(rgb, 1.0 / m), spd.id};
}

/// Exposure that places the given quantile of pre-clip green values at `level`.
inline double auto_exposure(const SpectralScene& scene, const SpectralCurve& spd, const CameraModel& cam,
                            double quantile = 0.99, double level = 0.9) {
  const auto responses = palette_responses(scene, spd, cam);
  std::vector<double> green(scene.indices.size());
  for (std::size_t i = 0; i < green.size(); ++i) green[i] = responses[scene.indices[i]][1];
  std::sort(green.begin(), green.end());
  // Nearest-rank quantile.
  const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(green.size())));
  const double g = green[std::clamp<std::size_t>(rank, 1, green.size()) - 1];
  if (!(g > 0.0)) throw DegenerateError("auto_exposure: scene is black under '" + spd.id + "'");
  return level / g;
}

/// Exposure that places the brightest channel of any pixel at `level`.
inline double peak_exposure(const SpectralScene& scene, const SpectralCurve& spd, const CameraModel& cam,
                            double level = 0.9) {
  const auto responses = palette_responses(scene, spd, cam);
  double m = 0.0;
  for (const auto& r : responses) m = std::max({m, r[0], r[1], r[2]});
  if (!(m > 0.0)) throw DegenerateError("peak_exposure: scene is black under '" + spd.id + "'");
  return level / m;
}

/// RGGB mosaic of the scene at `upscale` times its resolution, in sensor DN
/// (unquantized) between the camera's black and white levels.
inline MosaicImage render_mosaic(const SpectralScene& scene, const SpectralCurve& spd, const CameraModel& cam,
                                 double exposure, int upscale = 1) {
  if (upscale < 1) throw ParameterError("render_mosaic: upscale must be positive");
  const RawImage rgb = render(scene, spd, cam, exposure, true);
  MosaicImage m;
  m.width = scene.width * upscale;
  m.height = scene.height * upscale;
  m.black_level = cam.black_level;
  m.white_level = cam.white_level;
  m.camera_id = cam.id;
  m.illuminant_id = spd.id;
  m.data.resize(static_cast<std::size_t>(m.width) * m.height);
  const double range = cam.white_level - cam.black_level;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const std::size_t src = static_cast<std::size_t>(y / upscale) * scene.width + x / upscale;
      const int c = cfa_channel(x, y);
      m.data[static_cast<std::size_t>(y) * m.width + x] = cam.black_level + range * rgb.at(c, src);
    }
  }
  if (m.width % 2 != 0 || m.height % 2 != 0) throw ShapeError("render_mosaic: mosaic dimensions must be even");
  return m;
}

// ---------------------------------------------------------------------------
// Camera presets

inline CameraModel make_gaussian_camera(std::string id, const std::array<double, 3>& centers,
                                        const std::array<double, 3>& sigmas, const std::array<double, 3>& gains,
                                        int black, int white, int downscale) {
  CameraModel cam;
  cam.id = std::move(id);
  const char* names[3] = {"R", "G", "B"};
  for (int c = 0; c < 3; ++c) {
    cam.sensitivities[c] = gaussian_curve(centers[c], sigmas[c], gains[c], CurveKind::kSensitivity, cam.id + "_" + names[c]);
  }
  cam.black_level = black;
  cam.white_level = white;
  cam.downscale_factor = downscale;
  return cam;
}

/// Known presets: broadband_a, broadband_b, narrowband, delta.
inline CameraModel make_camera(std::string_view name) {
  if (name == "broadband_a") {
    return make_gaussian_camera("broadband_a", {600, 535, 460}, {40, 40, 38}, {0.9, 1.0, 0.8}, 512, 16383, 4);
  }
  if (name == "broadband_b") {
    auto cam = make_gaussian_camera("broadband_b", {615, 545, 450}, {35, 45, 32}, {0.85, 1.0, 0.9}, 1024, 16383, 4);
    // Secondary blue-range lobe on the red filter.
    const auto lobe = gaussian_curve(445, 25, 0.08, CurveKind::kSensitivity);
    for (int i = 0; i < kWavelengthCount; ++i) cam.sensitivities[0].values[i] += lobe.values[i];
    return cam;
  }
  if (name == "narrowband") {
    return make_gaussian_camera("narrowband", {605, 540, 460}, {15, 15, 15}, {1.0, 1.0, 1.0}, 256, 4095, 6);
  }
  if (name == "delta") {
    CameraModel cam;
    cam.id = "delta";
    cam.sensitivities = {delta_curve(610, 1.0, CurveKind::kSensitivity, "delta_R"),
                         delta_curve(540, 1.0, CurveKind::kSensitivity, "delta_G"),
                         delta_curve(460, 1.0, CurveKind::kSensitivity, "delta_B")};
    cam.black_level = 0;
    cam.white_level = 65535;
    cam.downscale_factor = 1;
    return cam;
  }
  throw ParameterError("unknown camera preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Random families

/// Blackbody with temperature log-uniform in [t_min, t_max].
inline SpectralCurve random_blackbody(std::mt19937_64& rng, std::string id, double t_min = 2500.0, double t_max = 10000.0) {
  std::uniform_real_distribution<double> u(std::log(t_min), std::log(t_max));
  return blackbody_spd(std::exp(u(rng)), std::move(id));
}

/// 2-4 peak LED mixture. Peak k is centered in the k-th of n equal slices of
/// 400-680 nm, so every mixture reaches across the visible range.
inline SpectralCurve random_led(std::mt19937_64& rng, std::string id, double sigma_min = 25.0, double sigma_max = 60.0) {
  std::uniform_int_distribution<int> count(2, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> width(sigma_min, sigma_max);
  std::uniform_real_distribution<double> amp(0.3, 1.0);
  const int n = count(rng);
  const double slice = (680.0 - 400.0) / n;
  std::vector<LedPeak> peaks(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto& p = peaks[static_cast<std::size_t>(k)];
    p.center_nm = 400.0 + slice * (k + unit(rng));
    p.width_nm = width(rng);
    p.amplitude = amp(rng);
  }
  return led_spd(peaks, std::move(id));
}

/// Smooth reflectance: a base level plus 1-3 Gaussian bumps, clamped to [0, 1].
inline SpectralCurve random_reflectance(std::mt19937_64& rng, std::string id) {
  std::uniform_real_distribution<double> base(0.03, 0.25);
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_real_distribution<double> center(380.0, 700.0);
  std::uniform_real_distribution<double> width(20.0, 80.0);
  std::uniform_real_distribution<double> amp(0.2, 0.8);
  auto c = SpectralCurve::constant(base(rng), CurveKind::kReflectance, std::move(id));
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const auto g = gaussian_curve(center(rng), width(rng), amp(rng), CurveKind::kReflectance);
    for (int i = 0; i < kWavelengthCount; ++i) c.values[i] += g.values[i];
  }
  for (double& v : c.values) v = std::clamp(v, 0.0, 1.0);
  return c;
}

/// Spectrally flat (achromatic) reflectance with a random level.
inline SpectralCurve random_neutral(std::mt19937_64& rng, std::string id) {
  std::uniform_real_distribution<double> level(0.15, 0.9);
  return SpectralCurve::constant(level(rng), CurveKind::kReflectance, std::move(id));
}

/// Scene made of square blocks, one palette entry per block in shuffled order
/// (palette entries are reused once every entry has been placed).
inline SpectralScene make_block_scene(std::string id, int width, int height, int block,
                                      std::vector<SpectralCurve> palette, std::mt19937_64& rng) {
  if (palette.empty()) throw ParameterError("make_block_scene: empty palette");
  if (block < 1 || width % block != 0 || height % block != 0) throw ShapeError("make_block_scene: block must divide the scene");
  SpectralScene s;
  s.id = std::move(id);
  s.width = width;
  s.height = height;
  s.palette = std::move(palette);
  const int bw = width / block;
  const int bh = height / block;
  std::vector<std::uint32_t> order;
  while (order.size() < static_cast<std::size_t>(bw * bh)) {
    std::vector<std::uint32_t> round(s.palette.size());
    for (std::uint32_t i = 0; i < round.size(); ++i) round[i] = i;
    std::shuffle(round.begin(), round.end(), rng);
    order.insert(order.end(), round.begin(), round.end());
  }
  s.indices.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      s.indices[static_cast<std::size_t>(y) * width + x] = order[static_cast<std::size_t>((y / block) * bw + x / block)];
    }
  }
  return s;
}

struct ChartLayout {
  int cols = 6;
  int rows = 4;
  int patch_size = 4;

  [[nodiscard]] int patches() const { return cols * rows; }
};

/// Chart scene with patch k at column k % cols, row k / cols.
inline SpectralScene make_chart_scene(std::string id, std::vector<SpectralCurve> patches, const ChartLayout& layout) {
  if (static_cast<int>(patches.size()) != layout.patches()) throw ParameterError("make_chart_scene: patch count mismatch");
  SpectralScene s;
  s.id = std::move(id);
  s.width = layout.cols * layout.patch_size;
  s.height = layout.rows * layout.patch_size;
  s.palette = std::move(patches);
  s.indices.resize(static_cast<std::size_t>(s.width) * s.height);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      s.indices[static_cast<std::size_t>(y) * s.width + x] =
          static_cast<std::uint32_t>((y / layout.patch_size) * layout.cols + x / layout.patch_size);
    }
  }
  return s;
}

/// Mean RGB of each chart patch, in patch order.
inline std::vector<Rgb> chart_patch_means(const RawImage& img, const ChartLayout& layout) {
  img.require_rgb("chart_patch_means");
  if (img.width != layout.cols * layout.patch_size || img.height != layout.rows * layout.patch_size) {
    throw ShapeError("chart image does not match the chart layout");
  }
  std::vector<Rgb> out(static_cast<std::size_t>(layout.patches()), Rgb{});
  const double inv = 1.0 / (layout.patch_size * layout.patch_size);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto& acc = out[static_cast<std::size_t>((y / layout.patch_size) * layout.cols + x / layout.patch_size)];
      const Rgb p = img.pixel(static_cast<std::size_t>(y) * img.width + x);
      for (int c = 0; c < 3; ++c) acc[c] += p[c] * inv;
    }
  }
  return out;
}

}  // namespace rawmap
