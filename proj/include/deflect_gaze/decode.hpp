#pragma once

// Screen-camera correspondence from intensity frames: single-shot 2D Morlet
// wavelet ridge phase, N-step phase shifting, quality-guided unwrapping and
// phase-to-screen-coordinate conversion.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <queue>
#include <span>
#include <vector>

#include "deflect_gaze/image.hpp"
#include "deflect_gaze/parallel.hpp"
#include "deflect_gaze/render.hpp"

namespace deflect_gaze {

struct PhaseMap {
  PhaseMap() = default;
  PhaseMap(int width, int height)
      : phase(width, height, 0.0), quality(width, height, 0.0), valid(width, height, 0) {}

  int width() const { return valid.width(); }
  int height() const { return valid.height(); }
  bool is_valid(int x, int y) const { return valid.in_bounds(x, y) && valid(x, y) != 0; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto m : valid.data()) n += m != 0;
    return n;
  }

  Image<double> phase;    // radians; wrapped maps lie in (-pi, pi]
  Image<double> quality;  // [0, 1]
  Mask valid;
  bool wrapped = true;
};

struct WaveletParams {
  double omega0 = 5.5;
  double scale_min = 10.5;  // px; fringe period = 2 pi scale / omega0
  double scale_max = 21.0;
  int n_scales = 16;
  Axis orientation = Axis::X;
  double q_min = 0.15;

  /// Scale range whose matched periods cover [period_min, period_max] px.
  static WaveletParams for_periods(double period_min, double period_max, Axis orientation) {
    WaveletParams p;
    p.scale_min = period_min * p.omega0 / (2.0 * std::numbers::pi);
    p.scale_max = period_max * p.omega0 / (2.0 * std::numbers::pi);
    p.orientation = orientation;
    return p;
  }

  /// Pixels this close to the frame edge cannot be decoded with whole kernels.
  int border() const { return static_cast<int>(std::ceil(4.0 * scale_max)); }
};

inline double wrap_phase(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(phi, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

namespace detail {

/// Correlates `frame` with a separable 2D Morlet at one scale. Only pixels at
/// least `margin` from the edge are computed; others are left zero.
inline Image<std::complex<double>> morlet_response(const Frame& frame, double scale, double omega0, Axis orientation,
                                                   int margin) {
  const int w = frame.width();
  const int h = frame.height();
  const int radius = static_cast<int>(std::ceil(4.0 * scale));
  std::vector<double> env(2 * radius + 1);
  std::vector<std::complex<double>> carrier(2 * radius + 1);
  double env_sum = 0.0;
  std::complex<double> carrier_sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double g = std::exp(-0.5 * t * t / (scale * scale));
    env[t + radius] = g;
    env_sum += g;
    // conj(psi): correlation yields the local phase, not its negative.
    carrier[t + radius] = g * std::polar(1.0, -omega0 * t / scale);
    carrier_sum += carrier[t + radius];
  }
  // Zero-mean correction so the constant fringe bias leaves no response.
  const std::complex<double> dc = carrier_sum / env_sum;
  for (int t = -radius; t <= radius; ++t) carrier[t + radius] -= dc * env[t + radius];
  const double norm = 1.0 / (env_sum * env_sum);

  // Pass 1 along the carrier axis, pass 2 across it.
  const bool along_x = orientation == Axis::X;
  Image<std::complex<double>> pass1(w, h, 0.0);
  const int m1x = along_x ? margin : std::max(0, margin - radius);
  const int m1y = along_x ? std::max(0, margin - radius) : margin;
  parallel_for(static_cast<std::size_t>(std::max(0, h - 2 * m1y)), [&](std::size_t r) {
    const int y = m1y + static_cast<int>(r);
    for (int x = m1x; x < w - m1x; ++x) {
      std::complex<double> acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const int sx = along_x ? x + t : x;
        const int sy = along_x ? y : y + t;
        if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
        acc += frame(sx, sy) * carrier[t + radius];
      }
      pass1(x, y) = acc;
    }
  });
  Image<std::complex<double>> out(w, h, 0.0);
  parallel_for(static_cast<std::size_t>(std::max(0, h - 2 * margin)), [&](std::size_t r) {
    const int y = margin + static_cast<int>(r);
    for (int x = margin; x < w - margin; ++x) {
      std::complex<double> acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const int sx = along_x ? x : x + t;
        const int sy = along_x ? y + t : y;
        if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
        acc += pass1(sx, sy) * env[t + radius];
      }
      out(x, y) = acc * norm;
    }
  });
  return out;
}

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

}  // namespace detail

/// Single-shot wrapped phase of the fringe component along
/// `params.orientation`: wavelet ridge over a log-spaced scale sweep.
inline PhaseMap cwt2_phase(const Frame& frame, const WaveletParams& params) {
  if (!(params.scale_min > 0.0 && params.scale_min < params.scale_max) || params.n_scales < 8) {
    throw Error(ErrorCode::InvalidArgument, "wavelet scales need 0 < scale_min < scale_max and n_scales >= 8");
  }
  const int w = frame.width();
  const int h = frame.height();
  const int margin = params.border();
  PhaseMap out(w, h);
  if (2 * margin >= w || 2 * margin >= h) {
    throw Error(ErrorCode::NoRidge, "frame too small for the largest wavelet support");
  }

  Image<double> best_mod(w, h, -1.0);
  const double ratio = std::pow(params.scale_max / params.scale_min, 1.0 / (params.n_scales - 1));
  for (int k = 0; k < params.n_scales; ++k) {
    const double scale = params.scale_min * std::pow(ratio, k);
    const auto resp = detail::morlet_response(frame, scale, params.omega0, params.orientation, margin);
    for (int y = margin; y < h - margin; ++y) {
      for (int x = margin; x < w - margin; ++x) {
        const double m = std::abs(resp(x, y));
        if (m > best_mod(x, y)) {
          best_mod(x, y) = m;
          out.phase(x, y) = wrap_phase(std::arg(resp(x, y)));
        }
      }
    }
  }

  std::vector<double> moduli;
  moduli.reserve(static_cast<std::size_t>(w - 2 * margin) * (h - 2 * margin));
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x) moduli.push_back(best_mod(x, y));
  const double ref = detail::percentile(moduli, 0.95);
  // Absolute floor: a frame with no carrier along this axis has only
  // round-off response, which relative normalization would inflate.
  constexpr double kModulusFloor = 1e-3;

  std::size_t n_valid = 0;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double m = best_mod(x, y);
      const double q = ref > 0.0 ? std::min(1.0, m / ref) : 0.0;
      out.quality(x, y) = q;
      if (q >= params.q_min && m >= kModulusFloor) {
        out.valid(x, y) = 1;
        ++n_valid;
      }
    }
  }
  if (static_cast<double>(n_valid) < 0.01 * static_cast<double>(w) * h) {
    throw Error(ErrorCode::NoRidge, "fewer than 1% of pixels carry a fringe ridge");
  }
  out.wrapped = true;
  return out;
}

/// N-step phase shifting; quality is the modulation amplitude relative to the
/// pattern's nominal 0.4 amplitude.
inline PhaseMap phase_shift_decode(std::span<const Frame> frames, const PhaseShiftSet& pattern, double m_min = 0.05) {
  const int n = pattern.n_shifts;
  if (n < 3 || static_cast<int>(frames.size()) != n) {
    throw Error(ErrorCode::ShiftCountMismatch,
                "expected " + std::to_string(n) + " frames, got " + std::to_string(frames.size()));
  }
  const int w = frames[0].width();
  const int h = frames[0].height();
  for (const auto& f : frames) {
    if (f.width() != w || f.height() != h) throw Error(ErrorCode::InvalidArgument, "frame sizes differ");
  }
  std::vector<double> cs(n), sn(n);
  for (int k = 0; k < n; ++k) {
    cs[k] = std::cos(2.0 * std::numbers::pi * k / n);
    sn[k] = std::sin(2.0 * std::numbers::pi * k / n);
  }
  PhaseMap out(w, h);
  for (std::size_t i = 0; i < out.phase.size(); ++i) {
    double c = 0.0, s = 0.0;
    for (int k = 0; k < n; ++k) {
      c += frames[k][i] * cs[k];
      s += frames[k][i] * sn[k];
    }
    const double amp = 2.0 / n * std::hypot(c, s);
    out.phase[i] = wrap_phase(std::atan2(-s, c));
    out.quality[i] = std::min(1.0, amp / 0.4);
    out.valid[i] = out.quality[i] >= m_min ? 1 : 0;
  }
  out.wrapped = true;
  return out;
}

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
};

/// Quality-guided flood fill from `seed`. Valid pixels not 4-connected to the
/// seed come back invalid.
inline PhaseMap unwrap2(const PhaseMap& wrapped, Pixel seed) {
  if (!wrapped.is_valid(seed.x, seed.y)) throw Error(ErrorCode::InvalidSeed, "seed pixel is not valid");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const int w = wrapped.width();
  const int h = wrapped.height();
  PhaseMap out(w, h);
  out.quality = wrapped.quality;
  out.wrapped = false;

  struct Entry {
    double quality;
    std::size_t index;
    bool operator<(const Entry& o) const {
      return quality < o.quality || (quality == o.quality && index > o.index);
    }
  };
  std::priority_queue<Entry> frontier;
  std::vector<std::uint8_t> queued(static_cast<std::size_t>(w) * h, 0);
  const std::size_t seed_idx = wrapped.valid.index(seed.x, seed.y);
  out.phase[seed_idx] = wrapped.phase[seed_idx];
  out.valid[seed_idx] = 1;
  queued[seed_idx] = 1;

  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  auto push_neighbors = [&](int x, int y) {
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (!wrapped.is_valid(nx, ny)) continue;
      const std::size_t ni = wrapped.valid.index(nx, ny);
      if (queued[ni]) continue;
      queued[ni] = 1;
      frontier.push({wrapped.quality[ni], ni});
    }
  };
  push_neighbors(seed.x, seed.y);

  while (!frontier.empty()) {
    const std::size_t idx = frontier.top().index;
    frontier.pop();
    const int x = static_cast<int>(idx % w);
    const int y = static_cast<int>(idx / w);
    // Reference: the already-unwrapped neighbor of highest quality.
    std::size_t ref = idx;
    double ref_q = -1.0;
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (!out.is_valid(nx, ny)) continue;
      const std::size_t ni = out.valid.index(nx, ny);
      if (wrapped.quality[ni] > ref_q) {
        ref_q = wrapped.quality[ni];
        ref = ni;
      }
    }
    const double phi = wrapped.phase[idx];
    out.phase[idx] = phi + two_pi * std::round((out.phase[ref] - phi) / two_pi);
    out.valid[idx] = 1;
    push_neighbors(x, y);
  }
  return out;
}

struct Anchor {
  Pixel pixel;
  double u0 = 0.0;
  double v0 = 0.0;
};

inline CorrespondenceMap phase_to_correspondence(const PhaseMap& phase_x, const PhaseMap& phase_y,
                                                 const CrossedFringe& pattern, const Anchor& anchor) {
  if (phase_x.width() != phase_y.width() || phase_x.height() != phase_y.height()) {
    throw Error(ErrorCode::InvalidArgument, "phase maps differ in size");
  }
  if (!phase_x.is_valid(anchor.pixel.x, anchor.pixel.y) || !phase_y.is_valid(anchor.pixel.x, anchor.pixel.y)) {
    throw Error(ErrorCode::InvalidAnchor, "anchor pixel is not valid in both phase maps");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double ax = phase_x.phase(anchor.pixel.x, anchor.pixel.y);
  const double ay = phase_y.phase(anchor.pixel.x, anchor.pixel.y);
  CorrespondenceMap out(phase_x.width(), phase_x.height());
  for (std::size_t i = 0; i < out.valid.size(); ++i) {
    if (!phase_x.valid[i] || !phase_y.valid[i]) continue;
    out.u[i] = (phase_x.phase[i] - ax) * pattern.period_x / two_pi + anchor.u0;
    out.v[i] = (phase_y.phase[i] - ay) * pattern.period_y / two_pi + anchor.v0;
    out.valid[i] = 1;
  }
  return out;
}

/// Phase channel, quality channel and a zero pad plane (PFM carries 1 or 3
/// channels), plus an 8-bit validity mask.
inline void write_phase_map(const std::string& pfm_path, const std::string& mask_path, const PhaseMap& map) {
  Image<double> zero(map.width(), map.height(), 0.0);
  write_pfm(pfm_path, {&map.phase, &map.quality, &zero});
  write_pgm8(mask_path, map.valid);
}

inline PhaseMap read_phase_map(const std::string& pfm_path, const std::string& mask_path, bool wrapped) {
  const auto ch = read_pfm(pfm_path);
  const Mask mask = read_mask(mask_path);
  if (ch.size() != 3 || mask.width() != ch[0].width() || mask.height() != ch[0].height()) {
    throw Error(ErrorCode::ParseError, "phase map files disagree in size");
  }
  PhaseMap map(mask.width(), mask.height());
  map.phase = ch[0];
  map.quality = ch[1];
  map.valid = mask;
  map.wrapped = wrapped;
  return map;
}

}  // namespace deflect_gaze
