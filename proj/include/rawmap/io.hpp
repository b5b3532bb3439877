// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/preprocess.hpp"
#include "rawmap/spectral.hpp"

namespace rawmap::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Plain files

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// RAWF: "RAWF", u32 version, width, height, channels, float32 planar samples,
// u32 length + UTF-8 JSON metadata. All little-endian.

inline constexpr std::uint32_t kRawfVersion = 1;

struct RawfBlob {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;
  Json meta = Json::object();
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("RAWF: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

inline std::string encode_rawf(const RawfBlob& blob) {
  const std::size_t n = static_cast<std::size_t>(blob.width) * blob.height * blob.channels;
  if (blob.data.size() != n) throw ShapeError("RAWF: buffer length does not match dimensions");
  std::string out = "RAWF";
  detail::put_u32(out, kRawfVersion);
  detail::put_u32(out, blob.width);
  detail::put_u32(out, blob.height);
  detail::put_u32(out, blob.channels);
  out.reserve(out.size() + 4 * n + 256);
  for (float f : blob.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  const std::string meta = blob.meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  return out;
}

inline RawfBlob decode_rawf(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "RAWF") throw DataError("RAWF: bad magic");
  std::size_t pos = 4;
  const auto version = detail::get_u32(bytes, pos);
  if (version != kRawfVersion) throw DataError("RAWF: unsupported version " + std::to_string(version));
  RawfBlob blob;
  blob.width = detail::get_u32(bytes, pos);
  blob.height = detail::get_u32(bytes, pos);
  blob.channels = detail::get_u32(bytes, pos);
  const std::uint64_t n = static_cast<std::uint64_t>(blob.width) * blob.height * blob.channels;
  if (pos + 4 * n > bytes.size()) throw DataError("RAWF: truncated sample block");
  blob.data.resize(static_cast<std::size_t>(n));
  for (auto& f : blob.data) f = std::bit_cast<float>(detail::get_u32(bytes, pos));
  const auto len = detail::get_u32(bytes, pos);
  if (pos + len != bytes.size()) throw DataError("RAWF: metadata length mismatch");
  try {
    blob.meta = Json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("RAWF: metadata is not valid JSON: ") + e.what());
  }
  return blob;
}

inline void write_rawf(const fs::path& path, const RawfBlob& blob) { write_text(path, encode_rawf(blob)); }
inline RawfBlob read_rawf(const fs::path& path) {
  try {
    return decode_rawf(read_text(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline RawfBlob to_blob(const RawImage& img) {
  img.validate();
  RawfBlob b;
  b.width = static_cast<std::uint32_t>(img.width);
  b.height = static_cast<std::uint32_t>(img.height);
  b.channels = static_cast<std::uint32_t>(img.channels);
  b.data = img.data;
  b.meta = Json{{"camera_id", img.camera_id}, {"illuminant_id", img.illuminant_id}};
  return b;
}

inline RawImage to_image(const RawfBlob& b) {
  RawImage img;
  img.width = static_cast<int>(b.width);
  img.height = static_cast<int>(b.height);
  img.channels = static_cast<int>(b.channels);
  img.data = b.data;
  img.camera_id = b.meta.value("camera_id", "");
  img.illuminant_id = b.meta.value("illuminant_id", "");
  img.validate();
  return img;
}

inline RawfBlob to_blob(const MosaicImage& m) {
  m.validate();
  RawfBlob b;
  b.width = static_cast<std::uint32_t>(m.width);
  b.height = static_cast<std::uint32_t>(m.height);
  b.channels = 1;
  b.data.assign(m.data.begin(), m.data.end());
  b.meta = Json{{"camera_id", m.camera_id},
                {"illuminant_id", m.illuminant_id},
                {"black_level", m.black_level},
                {"white_level", m.white_level},
                {"cfa", m.cfa}};
  return b;
}

/// Levels come from the RAWF metadata when present; callers may override.
inline MosaicImage to_mosaic(const RawfBlob& b) {
  if (b.channels != 1) throw ShapeError("expected a single-channel mosaic");
  MosaicImage m;
  m.width = static_cast<int>(b.width);
  m.height = static_cast<int>(b.height);
  m.data.assign(b.data.begin(), b.data.end());
  m.black_level = b.meta.value("black_level", 0.0);
  m.white_level = b.meta.value("white_level", 1.0);
  m.cfa = b.meta.value("cfa", "RGGB");
  m.camera_id = b.meta.value("camera_id", "");
  m.illuminant_id = b.meta.value("illuminant_id", "");
  return m;
}

inline void write_image(const fs::path& path, const RawImage& img) { write_rawf(path, to_blob(img)); }
inline RawImage read_image(const fs::path& path) { return to_image(read_rawf(path)); }

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace detail

inline constexpr std::string_view kSpectralHeader = "wavelength_nm,value";
inline constexpr std::string_view kIlluminantHeader = "illuminant_id,R,G,B";

inline std::string format_spectral_csv(const SpectralCurve& c) {
  std::string out(kSpectralHeader);
  out += '\n';
  for (int i = 0; i < kWavelengthCount; ++i) {
    out += std::to_string(static_cast<int>(wavelength_at(i))) + "," + detail::format_double(c.values[i]) + "\n";
  }
  return out;
}

inline SpectralCurve parse_spectral_csv(const std::string& text, CurveKind kind, std::string id) {
  const auto lines = detail::lines_of(text);
  if (lines.empty() || lines[0] != kSpectralHeader) throw DataError("spectral CSV: missing 'wavelength_nm,value' header");
  if (lines.size() != kWavelengthCount + 1) throw DataError("spectral CSV: expected 65 samples");
  SpectralCurve c;
  c.kind = kind;
  c.id = std::move(id);
  for (int i = 0; i < kWavelengthCount; ++i) {
    const auto f = detail::split(lines[static_cast<std::size_t>(i) + 1]);
    if (f.size() != 2) throw DataError("spectral CSV: expected two columns");
    if (detail::parse_double(f[0], "spectral CSV") != wavelength_at(i)) throw DataError("spectral CSV: wavelengths must be 380..700 step 5");
    c.values[i] = detail::parse_double(f[1], "spectral CSV");
  }
  c.validate();
  return c;
}

inline void write_spectral_csv(const fs::path& path, const SpectralCurve& c) { write_text(path, format_spectral_csv(c)); }
inline SpectralCurve read_spectral_csv(const fs::path& path, CurveKind kind) {
  return parse_spectral_csv(read_text(path), kind, path.stem().string());
}

inline std::string format_illuminant_csv(std::span<const Illuminant> illums) {
  std::string out(kIlluminantHeader);
  out += '\n';
  for (const auto& l : illums) {
    out += l.id + "," + detail::format_double(l.rgb[0]) + "," + detail::format_double(l.rgb[1]) + "," +
           detail::format_double(l.rgb[2]) + "\n";
  }
  return out;
}

inline std::vector<Illuminant> parse_illuminant_csv(const std::string& text) {
  const auto lines = detail::lines_of(text);
  if (lines.empty() || lines[0] != kIlluminantHeader) throw DataError("illuminant CSV: missing 'illuminant_id,R,G,B' header");
  std::vector<Illuminant> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split(lines[i]);
    if (f.size() != 4) throw DataError("illuminant CSV: expected four columns on line " + std::to_string(i + 1));
    Illuminant l;
    l.id = f[0];
    for (int c = 0; c < 3; ++c) l.rgb[c] = detail::parse_double(f[static_cast<std::size_t>(c) + 1], "illuminant CSV");
    l.validate();
    out.push_back(std::move(l));
  }
  return out;
}

inline void write_illuminant_csv(const fs::path& path, std::span<const Illuminant> illums) {
  write_text(path, format_illuminant_csv(illums));
}
inline std::vector<Illuminant> read_illuminant_csv(const fs::path& path) { return parse_illuminant_csv(read_text(path)); }

/// Parses "a,b,c" into three numbers.
inline Rgb parse_triplet(const std::string& s) {
  const auto f = detail::split(s);
  if (f.size() != 3) throw ParameterError("expected three comma-separated numbers, got '" + s + "'");
  Rgb out;
  for (int i = 0; i < 3; ++i) {
    try {
      out[i] = detail::parse_double(f[static_cast<std::size_t>(i)], "triplet");
    } catch (const DataError& e) {
      throw ParameterError(e.what());
    }
  }
  return out;
}

}  // namespace rawmap::io
