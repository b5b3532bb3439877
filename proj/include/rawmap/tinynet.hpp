// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"

namespace rawmap {

/// Illumination mode predicts T(L_u -> L_v) from both lights; sensor mode
/// predicts T(A -> B) from the light seen by sensor A.
enum class MapMode { kIllum, kSensor };

inline std::string_view to_string(MapMode m) { return m == MapMode::kIllum ? "illum" : "sensor"; }

inline MapMode map_mode_from_string(std::string_view s) {
  if (s == "illum") return MapMode::kIllum;
  if (s == "sensor") return MapMode::kSensor;
  throw ParameterError("unknown mode '" + std::string(s) + "' (expected illum or sensor)");
}

inline int input_dim_for(MapMode m) { return m == MapMode::kIllum ? 6 : 3; }

struct TrainConfig {
  double lr0 = 0.01;
  double decay = 0.5;
  int period = 50;
  int epochs = 400;
  int batch_size = 8;
  int pixels_per_pair = 1000;  // <= 0 means every valid pixel
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double hard_pair_fraction = 0.282;
  std::vector<int> hidden{32, 32};

  static TrainConfig illum_defaults() { return {}; }
  static TrainConfig sensor_defaults() {
    TrainConfig c;
    c.lr0 = 0.001;
    return c;
  }
  static TrainConfig defaults_for(MapMode m) { return m == MapMode::kIllum ? illum_defaults() : sensor_defaults(); }

  /// Step decay: lr0 * decay^floor(epoch / period).
  [[nodiscard]] double learning_rate(int epoch) const {
    return lr0 * std::pow(decay, static_cast<double>(epoch / period));
  }

  void validate() const {
    if (!(lr0 > 0.0) || !(decay > 0.0) || period < 1 || epochs < 0 || batch_size < 1) {
      throw ParameterError("train config: lr0, decay, period and batch size must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
      throw ParameterError("train config: invalid Adam constants");
    }
    if (!(hard_pair_fraction > 0.0 && hard_pair_fraction <= 1.0)) {
      throw ParameterError("train config: hard_pair_fraction must lie in (0, 1]");
    }
    if (hidden.empty()) throw ParameterError("train config: need at least one hidden layer");
    for (int h : hidden) {
      if (h < 1) throw ParameterError("train config: hidden widths must be positive");
    }
  }
};

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
  j = nlohmann::ordered_json{{"lr0", c.lr0},
                             {"decay", c.decay},
                             {"period", c.period},
                             {"epochs", c.epochs},
                             {"batch_size", c.batch_size},
                             {"pixels_per_pair", c.pixels_per_pair},
                             {"betas", {c.beta1, c.beta2}},
                             {"eps", c.eps},
                             {"hard_pair_fraction", c.hard_pair_fraction},
                             {"hidden", c.hidden}};
}

/// Missing keys keep the value already in `c`, so a partial JSON object acts
/// as a set of overrides.
template <typename Json>
void merge_train_config(const Json& j, TrainConfig& c) {
  if (!j.is_object()) throw DataError("train config must be a JSON object");
  if (j.contains("lr0")) c.lr0 = j.at("lr0").template get<double>();
  if (j.contains("decay")) c.decay = j.at("decay").template get<double>();
  if (j.contains("period")) c.period = j.at("period").template get<int>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").template get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").template get<int>();
  if (j.contains("pixels_per_pair")) c.pixels_per_pair = j.at("pixels_per_pair").template get<int>();
  if (j.contains("betas")) {
    c.beta1 = j.at("betas").at(0).template get<double>();
    c.beta2 = j.at("betas").at(1).template get<double>();
  }
  if (j.contains("eps")) c.eps = j.at("eps").template get<double>();
  if (j.contains("hard_pair_fraction")) c.hard_pair_fraction = j.at("hard_pair_fraction").template get<double>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").template get<std::vector<int>>();
  c.validate();
}

/// Fully connected ReLU network with a 9-way linear head. Parameters live in
/// one flat vector; each layer stores its weights (out x in, row-major)
/// followed by its biases.
class MlpModel {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // start of the weight block in params
    [[nodiscard]] std::size_t weight_count() const { return static_cast<std::size_t>(in) * out; }
    [[nodiscard]] std::size_t bias_offset() const { return offset + weight_count(); }
    [[nodiscard]] std::size_t end() const { return bias_offset() + static_cast<std::size_t>(out); }
  };

  static constexpr int kOutputDim = 9;

  MlpModel() = default;

  MlpModel(MapMode mode, std::vector<int> hidden, std::uint64_t seed)
      : mode_(mode), input_dim_(input_dim_for(mode)), hidden_(std::move(hidden)), seed_(seed) {
    build_layout();
    params_.assign(parameter_count(), 0.0);
  }

  /// Hidden layers uniform in +-sqrt(1/fan_in); zero output weights and an
  /// identity output bias, so a fresh model predicts I/sqrt(3).
  static MlpModel create(MapMode mode, const std::vector<int>& hidden, std::uint64_t seed) {
    MlpModel model(mode, hidden, seed);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < model.layers_.size(); ++l) {
      const auto& layer = model.layers_[l];
      const double bound = std::sqrt(1.0 / layer.in);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = layer.offset; i < layer.end(); ++i) model.params_[i] = u(rng);
    }
    const auto& head = model.layers_.back();
    for (int k = 0; k < kOutputDim; ++k) model.params_[head.bias_offset() + k] = (k % 4 == 0) ? 1.0 : 0.0;
    return model;
  }

  [[nodiscard]] MapMode mode() const { return mode_; }
  [[nodiscard]] int input_dim() const { return input_dim_; }
  [[nodiscard]] const std::vector<int>& hidden() const { return hidden_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  [[nodiscard]] std::size_t parameter_count() const { return layers_.empty() ? 0 : layers_.back().end(); }

  [[nodiscard]] std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  TrainConfig train_config;
  double val_mae = std::numeric_limits<double>::quiet_NaN();

  void validate() const {
    if (params_.size() != parameter_count()) throw DataError("model parameter vector has the wrong length");
    for (double p : params_) {
      if (!std::isfinite(p)) throw NumericError("model has non-finite parameters");
    }
  }

 private:
  void build_layout() {
    if (hidden_.empty()) throw ParameterError("MlpModel: need at least one hidden layer");
    layers_.clear();
    int in = input_dim_;
    std::size_t offset = 0;
    auto push = [&](int out) {
      Layer l{in, out, offset};
      offset = l.end();
      layers_.push_back(l);
      in = out;
    };
    for (int h : hidden_) {
      if (h < 1) throw ParameterError("MlpModel: hidden widths must be positive");
      push(h);
    }
    push(kOutputDim);
  }

  MapMode mode_ = MapMode::kIllum;
  int input_dim_ = 6;
  std::vector<int> hidden_{32, 32};
  std::uint64_t seed_ = 0;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<double>> activations;  // [0] = input, then post-ReLU hidden outputs
  std::array<double, 9> raw{};                   // linear head output
  double raw_norm = 0.0;
  Transform3 transform;                          // raw / raw_norm
};

inline ForwardCache forward_cached(const MlpModel& model, std::span<const double> input) {
  if (static_cast<int>(input.size()) != model.input_dim()) {
    throw ParameterError("forward: input has " + std::to_string(input.size()) + " values, model expects " +
                         std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  cache.activations.emplace_back(input.begin(), input.end());
  const auto p = model.params();
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& x = cache.activations.back();
    std::vector<double> y(static_cast<std::size_t>(layer.out));
    for (int o = 0; o < layer.out; ++o) {
      double acc = p[layer.bias_offset() + o];
      const double* w = p.data() + layer.offset + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    if (l + 1 < layers.size()) {
      for (double& v : y) v = std::max(v, 0.0);
      cache.activations.push_back(std::move(y));
    } else {
      std::copy(y.begin(), y.end(), cache.raw.begin());
    }
  }
  double s = 0.0;
  for (double v : cache.raw) s += v * v;
  cache.raw_norm = std::sqrt(s);
  if (!(cache.raw_norm > 0.0) || !std::isfinite(cache.raw_norm)) {
    throw DegenerateError("forward: network produced a zero or non-finite matrix");
  }
  for (std::size_t i = 0; i < 9; ++i) cache.transform.m[i] = cache.raw[i] / cache.raw_norm;
  return cache;
}

/// Predicted transform, normalized to unit Frobenius norm.
inline Transform3 forward(const MlpModel& model, std::span<const double> input) {
  return forward_cached(model, input).transform;
}

/// Corresponding source/target pixel samples.
struct PixelSampleSet {
  std::vector<Rgb> src;
  std::vector<Rgb> dst;
};

/// Mean angular error (degrees) of pred * src_i against dst_i. When `grad_t`
/// is given it receives d(mean loss)/d(pred), zero for samples whose cosine
/// falls in the clamp band. A transformed sample of zero length contributes
/// 90 degrees with no gradient.
inline double angular_loss_with_grad(const Transform3& pred, std::span<const Rgb> src, std::span<const Rgb> dst,
                                     std::array<double, 9>* grad_t) {
  if (src.empty()) throw ParameterError("loss_angular: empty sample set");
  if (src.size() != dst.size()) throw ParameterError("loss_angular: sample lists differ in length");
  if (grad_t) grad_t->fill(0.0);
  const double inv_n = 1.0 / static_cast<double>(src.size());
  double total = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Rgb& s = src[i];
    const Rgb& d = dst[i];
    const Rgb y = pred.apply(s);
    const double ny = norm(y);
    const double nd = norm(d);
    if (!(nd > 0.0)) throw DomainError("loss_angular: zero-norm target sample");
    if (!(ny > 0.0)) {
      total += 90.0;
      continue;
    }
    const double cosv = dot(y, d) / (ny * nd);
    const Rgb uy = scaled(y, 1.0 / ny);
    const Rgb ud = scaled(d, 1.0 / nd);
    total += std::atan2(norm(cross(uy, ud)), dot(uy, ud)) * kRadToDeg;
    if (grad_t && cosv > -1.0 + kCosineClamp && cosv < 1.0 - kCosineClamp) {
      // dA/dy = dA/dcos * (d/(|y||d|) - cos y/|y|^2)
      const double da_dcos = -kRadToDeg / std::sqrt(1.0 - cosv * cosv) * inv_n;
      Rgb gy;
      for (int c = 0; c < 3; ++c) gy[c] = da_dcos * (d[c] / (ny * nd) - cosv * y[c] / (ny * ny));
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) (*grad_t)[r * 3 + c] += gy[r] * s[c];
      }
    }
  }
  return total * inv_n;
}

inline double loss_angular(const Transform3& pred, const PixelSampleSet& samples) {
  return angular_loss_with_grad(pred, samples.src, samples.dst, nullptr);
}

/// One training example: network input plus the pixels it must map.
struct BatchItem {
  std::span<const double> input;
  std::span<const Rgb> src;
  std::span<const Rgb> dst;
};

/// Accumulates d(loss)/d(params) * weight into `grad` for one item and returns
/// the item's loss.
inline double accumulate_item_gradient(const MlpModel& model, const BatchItem& item, double weight,
                                       std::span<double> grad) {
  const ForwardCache cache = forward_cached(model, item.input);
  std::array<double, 9> g_t{};
  const double loss = angular_loss_with_grad(cache.transform, item.src, item.dst, &g_t);

  // Through T = M / |M|: dL/dM = (G - <G,T> T) / |M|.
  double gt_dot_t = 0.0;
  for (std::size_t k = 0; k < 9; ++k) gt_dot_t += g_t[k] * cache.transform.m[k];
  std::vector<double> delta(9);
  for (std::size_t k = 0; k < 9; ++k) {
    delta[k] = (g_t[k] - gt_dot_t * cache.transform.m[k]) / cache.raw_norm * weight;
  }

  const auto p = model.params();
  const auto& layers = model.layers();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& x = cache.activations[l];
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* gw = grad.data() + layer.offset + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) gw[i] += d * x[i];
      grad[layer.bias_offset() + o] += d;
    }
    if (l == 0) break;
    // Input of this layer is the ReLU output of the previous one; x > 0 marks
    // the active units.
    std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = p.data() + layer.offset + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) prev[i] += w[i] * d;
    }
    for (int i = 0; i < layer.in; ++i) {
      if (!(x[i] > 0.0)) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return loss;
}

/// Exact gradient of the mean batch loss with respect to every parameter.
/// Returns the mean loss; `grad` is resized and overwritten.
inline double backward(const MlpModel& model, std::span<const BatchItem> batch, std::vector<double>& grad) {
  if (batch.empty()) throw ParameterError("backward: empty batch");
  grad.assign(model.parameter_count(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& item : batch) loss += accumulate_item_gradient(model, item, w, grad) * w;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient");
  }
  return loss;
}

/// Bias-corrected Adam moments.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double b1, double b2, double e) : m(n, 0.0), v(n, 0.0), beta1(b1), beta2(b2), eps(e) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, double lr) {
  if (params.size() != grad.size() || state.m.size() != params.size()) {
    throw ParameterError("adam_step: size mismatch between parameters, gradient and state");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Ordered pairs of illuminants that lie far apart in chromaticity. Keeps the
/// round(fraction * n(n-1)/2) most distant unordered pairs (ties broken by
/// index) together with both of their orderings; coincident chromaticities
/// are never selected. Output is sorted by (u, v).
inline std::vector<IndexPair> select_hard_pairs(std::span<const Illuminant> illums, double fraction) {
  if (illums.size() < 2) throw ParameterError("select_hard_pairs: need at least two illuminants");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("select_hard_pairs: fraction must lie in (0, 1]");
  std::vector<Chromaticity> chroma;
  chroma.reserve(illums.size());
  for (const auto& l : illums) chroma.push_back(to_chromaticity(l));

  struct Candidate {
    double dist;
    std::size_t u, v;
  };
  std::vector<Candidate> cands;
  for (std::size_t u = 0; u < illums.size(); ++u) {
    for (std::size_t v = u + 1; v < illums.size(); ++v) cands.push_back({distance(chroma[u], chroma[v]), u, v});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.dist > b.dist; });
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cands.size()))));

  std::vector<IndexPair> out;
  for (std::size_t k = 0; k < std::min(keep, cands.size()); ++k) {
    if (!(cands[k].dist > 1e-12)) break;
    out.emplace_back(cands[k].u, cands[k].v);
    out.emplace_back(cands[k].v, cands[k].u);
  }
  if (out.empty()) throw DegenerateError("select_hard_pairs: all chromaticities coincide");
  std::sort(out.begin(), out.end());
  return out;
}

/// Network input for one light: RGB scaled to unit maximum.
inline std::vector<double> encode_illuminant(const Illuminant& l) {
  const auto n = l.max_normalized();
  return {n.rgb[0], n.rgb[1], n.rgb[2]};
}

inline std::vector<double> encode_illuminant_pair(const Illuminant& src, const Illuminant& dst) {
  auto a = encode_illuminant(src);
  const auto b = encode_illuminant(dst);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json model_to_json(const MlpModel& model) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(model.mode()));
  j["input_dim"] = model.input_dim();
  j["hidden_dims"] = model.hidden();
  j["seed"] = model.seed();
  auto layers = nlohmann::ordered_json::array();
  const auto p = model.params();
  for (const auto& layer : model.layers()) {
    nlohmann::ordered_json lj;
    lj["in"] = layer.in;
    lj["out"] = layer.out;
    lj["W"] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(layer.offset),
                                  p.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset()));
    lj["b"] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset()),
                                  p.begin() + static_cast<std::ptrdiff_t>(layer.end()));
    layers.push_back(std::move(lj));
  }
  j["weights"] = std::move(layers);
  j["train_config"] = model.train_config;
  if (std::isfinite(model.val_mae)) {
    j["val_mae"] = model.val_mae;
  } else {
    j["val_mae"] = nullptr;
  }
  return j;
}

template <typename Json>
MlpModel model_from_json(const Json& j) {
  try {
    const MapMode mode = map_mode_from_string(j.at("mode").template get<std::string>());
    MlpModel model(mode, j.at("hidden_dims").template get<std::vector<int>>(), j.at("seed").template get<std::uint64_t>());
    if (j.at("input_dim").template get<int>() != model.input_dim()) throw DataError("model input_dim does not match its mode");
    const auto& layers = j.at("weights");
    if (layers.size() != model.layers().size()) throw DataError("model layer count mismatch");
    auto p = model.params();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = model.layers()[l];
      const auto w = layers[l].at("W").template get<std::vector<double>>();
      const auto b = layers[l].at("b").template get<std::vector<double>>();
      if (w.size() != layer.weight_count() || b.size() != static_cast<std::size_t>(layer.out)) {
        throw DataError("model layer " + std::to_string(l) + " has the wrong shape");
      }
      std::copy(w.begin(), w.end(), p.begin() + static_cast<std::ptrdiff_t>(layer.offset));
      std::copy(b.begin(), b.end(), p.begin() + static_cast<std::ptrdiff_t>(layer.bias_offset()));
    }
    model.train_config = TrainConfig::defaults_for(mode);
    if (j.contains("train_config")) merge_train_config(j.at("train_config"), model.train_config);
    if (j.contains("val_mae") && !j.at("val_mae").is_null()) model.val_mae = j.at("val_mae").template get<double>();
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace rawmap
