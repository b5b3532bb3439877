// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"

namespace rawmap {

/// Single-plane Bayer mosaic. Only the RGGB layout is supported.
struct MosaicImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;
  double black_level = 0.0;
  double white_level = 1.0;
  std::string cfa = "RGGB";
  std::string camera_id;
  std::string illuminant_id;

  void validate() const {
    if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
      throw ShapeError("mosaic dimensions must be positive and even");
    }
    if (data.size() != static_cast<std::size_t>(width) * height) throw ShapeError("mosaic buffer size mismatch");
    if (cfa != "RGGB") throw ParameterError("unsupported CFA pattern '" + cfa + "'");
    if (!(white_level > black_level)) throw ParameterError("white level must exceed black level");
  }
};

/// Channel index (0=R, 1=G, 2=B) sampled at (x, y) in an RGGB mosaic.
inline constexpr int cfa_channel(int x, int y) {
  const bool odd_row = (y & 1) != 0;
  const bool odd_col = (x & 1) != 0;
  if (!odd_row && !odd_col) return 0;
  if (odd_row && odd_col) return 2;
  return 1;
}

/// (x - black) / (white - black), clamped to [0, 1]. The result has levels 0/1.
inline MosaicImage level_correct(const MosaicImage& m) {
  if (!(m.white_level > m.black_level)) throw ParameterError("level_correct: white level must exceed black level");
  MosaicImage out = m;
  const double range = m.white_level - m.black_level;
  for (double& v : out.data) v = std::clamp((v - m.black_level) / range, 0.0, 1.0);
  out.black_level = 0.0;
  out.white_level = 1.0;
  return out;
}

/// Bilinear demosaic: each missing channel is the mean of the nearest in-bounds
/// neighbours of that channel within the 3x3 window.
inline RawImage demosaic_bilinear(const MosaicImage& m) {
  m.validate();
  RawImage out(m.width, m.height, 3);
  out.camera_id = m.camera_id;
  out.illuminant_id = m.illuminant_id;
  const auto sample = [&](int x, int y) { return m.data[static_cast<std::size_t>(y) * m.width + x]; };

  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * m.width + x;
      const int native = cfa_channel(x, y);
      for (int c = 0; c < 3; ++c) {
        if (c == native) {
          out.at(c, idx) = static_cast<float>(sample(x, y));
          continue;
        }
        int best = 3;  // squared distance; 1 = edge neighbour, 2 = diagonal
        double sum = 0.0;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            const int ny = y + dy;
            if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            if (cfa_channel(nx, ny) != c) continue;
            const int d2 = dx * dx + dy * dy;
            if (d2 < best) {
              best = d2;
              sum = 0.0;
              count = 0;
            }
            if (d2 == best) {
              sum += sample(nx, ny);
              ++count;
            }
          }
        }
        out.at(c, idx) = count > 0 ? static_cast<float>(sum / count) : 0.0f;
      }
    }
  }
  return out;
}

/// Box-mean decimation by an integer factor (aligned-grid bilinear).
inline RawImage downsample_bilinear(const RawImage& img, int factor) {
  if (factor < 1) throw ParameterError("downsample_bilinear: factor must be positive");
  if (img.width % factor != 0 || img.height % factor != 0) {
    throw ShapeError("downsample_bilinear: factor must divide the image dimensions");
  }
  if (factor == 1) return img;
  RawImage out(img.width / factor, img.height / factor, img.channels);
  out.camera_id = img.camera_id;
  out.illuminant_id = img.illuminant_id;
  const double inv = 1.0 / (factor * factor);
  const std::size_t in_plane = img.pixel_count();
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            acc += img.data[c * in_plane + static_cast<std::size_t>(y * factor + dy) * img.width + (x * factor + dx)];
          }
        }
        out.at(c, static_cast<std::size_t>(y) * out.width + x) = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

/// Full chain: level correction (which also normalizes), demosaic, downsample.
inline RawImage preprocess_mosaic(const MosaicImage& m, int downscale) {
  return downsample_bilinear(demosaic_bilinear(level_correct(m)), downscale);
}

}  // namespace rawmap
