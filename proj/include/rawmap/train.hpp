// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/tinynet.hpp"

namespace rawmap {

using SamplesPtr = std::shared_ptr<const std::vector<Rgb>>;

/// One training unit: an illuminant pair (illumination mode) or a single
/// illuminant (sensor mode), with the corresponding pixels it must map.
struct TrainItem {
  std::string label;
  std::vector<double> input;
  SamplesPtr src;
  SamplesPtr dst;
  std::vector<std::uint32_t> valid;  // usable sample indices
};

struct TrainingSet {
  std::vector<TrainItem> train;
  std::vector<TrainItem> val;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Pixel indices usable for training: neither side saturated, both non-zero.
inline std::vector<std::uint32_t> valid_sample_indices(const std::vector<Rgb>& src, const std::vector<Rgb>& dst) {
  if (src.size() != dst.size()) throw ShapeError("source and target sample counts differ");
  std::vector<std::uint32_t> out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (is_saturated(src[i]) || is_saturated(dst[i])) continue;
    out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

/// Items for ordered illuminant pairs over images of one scene with per-pixel
/// correspondence. `images[k]` is the scene under `illums[k]`. Pairs without a
/// single usable pixel are an error unless `dropped` is given, in which case
/// their labels are appended there and the pair is left out.
inline std::vector<TrainItem> make_pair_items(std::span<const Illuminant> illums, std::span<const SamplesPtr> images,
                                              std::span<const IndexPair> pairs,
                                              std::vector<std::string>* dropped = nullptr) {
  if (illums.size() != images.size()) throw ParameterError("make_pair_items: illuminant/image count mismatch");
  std::vector<TrainItem> items;
  items.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    TrainItem item;
    item.label = illums[u].id + "->" + illums[v].id;
    item.input = encode_illuminant_pair(illums[u], illums[v]);
    item.src = images[u];
    item.dst = images[v];
    item.valid = valid_sample_indices(*item.src, *item.dst);
    if (item.valid.empty()) {
      if (!dropped) throw DataError("pair " + item.label + " has no unsaturated corresponding pixels");
      dropped->push_back(item.label);
      continue;
    }
    items.push_back(std::move(item));
  }
  return items;
}

/// Sensor-mode items: one per illuminant, mapping chart samples of sensor A
/// (`src[k]`) to sensor B (`dst[k]`). `illums` are expressed in sensor A.
inline std::vector<TrainItem> make_sensor_items(std::span<const Illuminant> illums, std::span<const SamplesPtr> src,
                                                std::span<const SamplesPtr> dst) {
  if (illums.size() != src.size() || illums.size() != dst.size()) {
    throw ParameterError("make_sensor_items: illuminant/sample count mismatch");
  }
  std::vector<TrainItem> items;
  for (std::size_t k = 0; k < illums.size(); ++k) {
    TrainItem item;
    item.label = illums[k].id;
    item.input = encode_illuminant(illums[k]);
    item.src = src[k];
    item.dst = dst[k];
    item.valid = valid_sample_indices(*item.src, *item.dst);
    if (item.valid.size() < 3) throw DataError("illuminant " + item.label + ": fewer than 3 usable chart samples");
    items.push_back(std::move(item));
  }
  return items;
}

inline PixelSampleSet gather(const TrainItem& item, std::span<const std::uint32_t> idx) {
  PixelSampleSet s;
  s.src.reserve(idx.size());
  s.dst.reserve(idx.size());
  for (auto i : idx) {
    s.src.push_back((*item.src)[i]);
    s.dst.push_back((*item.dst)[i]);
  }
  return s;
}

/// Draws min(k, n) distinct indices into the front of `pool` (partial
/// Fisher-Yates) and returns that prefix. k <= 0 takes the whole pool.
inline std::span<const std::uint32_t> sample_subset(std::vector<std::uint32_t>& pool, int k, std::mt19937_64& rng) {
  const std::size_t n = pool.size();
  if (k <= 0 || static_cast<std::size_t>(k) >= n) return pool;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  return std::span<const std::uint32_t>(pool).first(static_cast<std::size_t>(k));
}

/// Mean angular error of the transform on every valid sample of the item.
inline double item_mae(const Transform3& t, const TrainItem& item) {
  const auto s = gather(item, item.valid);
  return loss_angular(t, s);
}

/// Mean over items of the model's full-sample angular error.
inline double validation_mae(const MlpModel& model, std::span<const TrainItem> items) {
  if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (const auto& item : items) acc += item_mae(forward(model, item.input), item);
  return acc / static_cast<double>(items.size());
}

/// Trains a fresh model. Each epoch visits every training item once in a
/// seeded shuffle, in batches of `batch_size` items, redrawing
/// `pixels_per_pair` samples per item. The returned model is the epoch
/// checkpoint with the lowest validation MAE (training loss when no
/// validation items are given).
inline TrainResult train_mlp(const TrainingSet& data, MapMode mode, const TrainConfig& config, std::uint64_t seed,
                             const EpochCallback& on_epoch = {}) {
  config.validate();
  if (data.train.empty()) throw DataError("train_mlp: no training items");
  const int dim = input_dim_for(mode);
  for (const auto* set : {&data.train, &data.val}) {
    for (const auto& item : *set) {
      if (static_cast<int>(item.input.size()) != dim) throw DataError("train_mlp: item input does not match the mode");
    }
  }

  TrainResult result;
  MlpModel model = MlpModel::create(mode, config.hidden, seed);
  model.train_config = config;
  AdamState adam(model.parameter_count(), config.beta1, config.beta2, config.eps);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::vector<std::uint32_t>> pools;
  pools.reserve(data.train.size());
  for (const auto& item : data.train) pools.push_back(item.valid);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  MlpModel best = model;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<double> grad;
  std::vector<PixelSampleSet> samples;
  std::vector<BatchItem> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      samples.clear();
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = sample_subset(pools[order[k]], config.pixels_per_pair, rng);
        samples.push_back(gather(data.train[order[k]], idx));
      }
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[k - start];
        batch.push_back({data.train[order[k]].input, s.src, s.dst});
      }
      const double loss = backward(model, batch, grad);
      epoch_loss += loss * static_cast<double>(end - start);
      adam_step(model.params(), grad, adam, lr);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_mae = data.val.empty() ? rec.train_loss : validation_mae(model, data.val);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_mae < best_score) {
      best_score = rec.val_mae;
      best = model;
      result.best_epoch = epoch;
    }
  }
  if (config.epochs == 0) best_score = data.val.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_mae(model, data.val);
  best.val_mae = best_score;
  result.model = std::move(best);
  return result;
}

struct OracleConfig {
  int epochs = 200;
  double lr = 0.001;
  int pixels_per_pair = 1000;
};

struct OracleResult {
  Transform3 transform;
  double initial_mae = 0.0;
  double final_mae = 0.0;
  int best_epoch = 0;  // 0 = the unmodified model
};

/// Fine-tunes a copy of `model` on a single test item at a constant learning
/// rate and returns the transform with the lowest full-sample MAE seen,
/// counting the starting point.
inline OracleResult finetune_oracle(const MlpModel& model, const TrainItem& item, const OracleConfig& config,
                                    std::uint64_t seed) {
  if (item.valid.empty()) throw EmptyMaskError("finetune_oracle: item has no usable samples");
  MlpModel tuned = model;
  AdamState adam(tuned.parameter_count(), model.train_config.beta1, model.train_config.beta2, model.train_config.eps);
  std::mt19937_64 rng(seed);
  auto pool = item.valid;
  const auto full = gather(item, item.valid);

  OracleResult result;
  result.transform = forward(tuned, item.input);
  result.initial_mae = loss_angular(result.transform, full);
  result.final_mae = result.initial_mae;

  std::vector<double> grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto s = gather(item, sample_subset(pool, config.pixels_per_pair, rng));
    const BatchItem b{item.input, s.src, s.dst};
    backward(tuned, std::span<const BatchItem>(&b, 1), grad);
    adam_step(tuned.params(), grad, adam, config.lr);
    const Transform3 t = forward(tuned, item.input);
    const double mae = loss_angular(t, full);
    if (mae < result.final_mae) {
      result.final_mae = mae;
      result.transform = t;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace rawmap
