#pragma once

// Dense row-major rasters and the PFM / PGM codecs used for every on-disk
// image artifact. PFM is written little-endian (scale -1.0) with bottom-to-top
// scanlines; 16-bit PGM samples are big-endian per the netpbm format.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deflect_gaze/error.hpp"

namespace deflect_gaze {

template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Image<std::uint8_t>;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Parses whitespace-separated netpbm header tokens, returning the offset of
/// the first raster byte.
inline std::size_t parse_header(const std::string& bytes, int n_tokens, std::vector<std::string>& tokens,
                                const std::string& path) {
  std::size_t pos = 0;
  while (static_cast<int>(tokens.size()) < n_tokens) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw Error(ErrorCode::ParseError, "truncated header in '" + path + "'");
    tokens.push_back(bytes.substr(start, pos - start));
  }
  return pos + 1;  // exactly one whitespace byte precedes the raster
}

}  // namespace detail

/// Writes 1 or 3 float channels; `channels` holds planes of equal size.
inline void write_pfm(const std::string& path, const std::vector<const Image<double>*>& channels) {
  if (channels.empty() || channels.size() > 3 || channels.size() == 2) {
    throw Error(ErrorCode::InvalidArgument, "PFM holds 1 or 3 channels");
  }
  const int w = channels[0]->width();
  const int h = channels[0]->height();
  std::string bytes = (channels.size() == 3 ? "PF\n" : "Pf\n") + std::to_string(w) + " " + std::to_string(h) +
                      "\n-1.0\n";
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (const auto* c : channels) {
        const float f = static_cast<float>((*c)(x, y));
        std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        char buf[4];
        std::memcpy(buf, &bits, 4);
        bytes.append(buf, 4);
      }
    }
  }
  detail::write_file(path, bytes);
}

inline std::vector<Image<double>> read_pfm(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::vector<std::string> tok;
  const std::size_t off = detail::parse_header(bytes, 4, tok, path);
  int n_ch = 0;
  if (tok[0] == "Pf") n_ch = 1;
  else if (tok[0] == "PF") n_ch = 3;
  else throw Error(ErrorCode::ParseError, "'" + path + "' is not a PFM file");
  const int w = std::stoi(tok[1]);
  const int h = std::stoi(tok[2]);
  const double scale = std::stod(tok[3]);
  const bool little = scale < 0.0;
  const std::size_t need = static_cast<std::size_t>(w) * h * n_ch * 4;
  if (bytes.size() < off + need) throw Error(ErrorCode::ParseError, "truncated raster in '" + path + "'");
  std::vector<Image<double>> out(n_ch, Image<double>(w, h));
  std::size_t p = off;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < n_ch; ++c) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + p, 4);
        p += 4;
        const bool swap = little != (std::endian::native == std::endian::little);
        if (swap) bits = __builtin_bswap32(bits);
        out[c](x, y) = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
  }
  return out;
}

/// 16-bit PGM of intensities in [0, 1].
inline void write_pgm16(const std::string& path, const Image<double>& img) {
  std::string bytes = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n65535\n";
  bytes.reserve(bytes.size() + img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i], 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xff));
  }
  detail::write_file(path, bytes);
}

inline void write_pgm8(const std::string& path, const Mask& mask) {
  std::string bytes = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
  for (std::size_t i = 0; i < mask.size(); ++i) bytes.push_back(static_cast<char>(mask[i] ? 255 : 0));
  detail::write_file(path, bytes);
}

/// Reads an 8- or 16-bit binary PGM, scaled to [0, 1].
inline Image<double> read_pgm(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::vector<std::string> tok;
  const std::size_t off = detail::parse_header(bytes, 4, tok, path);
  if (tok[0] != "P5") throw Error(ErrorCode::ParseError, "'" + path + "' is not a binary PGM");
  const int w = std::stoi(tok[1]);
  const int h = std::stoi(tok[2]);
  const int maxval = std::stoi(tok[3]);
  const int bps = maxval > 255 ? 2 : 1;
  if (bytes.size() < off + static_cast<std::size_t>(w) * h * bps) {
    throw Error(ErrorCode::ParseError, "truncated raster in '" + path + "'");
  }
  Image<double> img(w, h);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + off);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const int v = bps == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

inline Mask read_mask(const std::string& path) {
  const Image<double> img = read_pgm(path);
  Mask m(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) m[i] = img[i] >= 0.5 ? 1 : 0;
  return m;
}

}  // namespace deflect_gaze
