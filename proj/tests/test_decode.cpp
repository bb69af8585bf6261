#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>

#include "deflect_gaze/decode.hpp"

using namespace deflect_gaze;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Synthetic crossed fringe with optional additive Gaussian noise.
Frame crossed_frame(int n, double px, double py, double sigma, std::uint64_t seed) {
  Frame f(n, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      f(x, y) = 0.5 + 0.2 * std::cos(kTwoPi * x / px) + 0.2 * std::cos(kTwoPi * y / py) + sigma * g(rng);
  return f;
}

double phase_rmse(const PhaseMap& pm, const std::function<double(int, int)>& truth) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pm.height(); ++y)
    for (int x = 0; x < pm.width(); ++x) {
      if (!pm.is_valid(x, y)) continue;
      const double e = wrap_phase(pm.phase(x, y) - truth(x, y));
      s += e * e;
      ++n;
    }
  EXPECT_GT(n, 0u);
  return std::sqrt(s / n);
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

std::vector<Frame> shifted_frames(const CorrespondenceMap& corr, const PhaseShiftSet& set, double sigma,
                                  std::uint64_t seed) {
  std::vector<Frame> frames;
  for (int k = 0; k < set.n_shifts; ++k) frames.push_back(render_frame(corr, set, k, {sigma, seed}));
  return frames;
}

// Affine screen mapping over a large synthetic camera.
CorrespondenceMap affine_map(int n) {
  CorrespondenceMap m(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) m.set(x, y, 20.0 + 0.9 * x + 0.1 * y, 15.0 - 0.05 * x + 1.1 * y);
  return m;
}

}  // namespace

TEST(Cwt, PureFringeAnalyticPhase) {
  Frame f(256, 256);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) f(x, y) = 0.5 + 0.4 * std::cos(kTwoPi * x / 16.0);
  const PhaseMap pm = cwt2_phase(f, WaveletParams{});
  int checked = 0;
  for (int y = 0; y < 256; ++y)
    for (int x = 4; x < 256; x += 16) {
      if (!pm.is_valid(x, y)) continue;
      ASSERT_NEAR(wrap_phase(pm.phase(x, y) - std::numbers::pi / 2), 0.0, 0.05);
      ++checked;
    }
  EXPECT_GT(checked, 500);
}

TEST(Cwt, NoCarrierAlongOtherAxis) {
  Frame f(256, 256);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) f(x, y) = 0.5 + 0.4 * std::cos(kTwoPi * x / 16.0);
  WaveletParams p;
  p.orientation = Axis::Y;
  try {
    const PhaseMap pm = cwt2_phase(f, p);
    EXPECT_LE(pm.valid_count(), pm.valid.size() / 100);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoRidge);
  }
}

TEST(Cwt, CrossedFringeMatchesPureReference) {
  Frame pure(256, 256);
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x) pure(x, y) = 0.5 + 0.4 * std::cos(kTwoPi * x / 16.0);
  const PhaseMap a = cwt2_phase(crossed_frame(256, 16.0, 22.0, 0.0, 0), WaveletParams{});
  const PhaseMap b = cwt2_phase(pure, WaveletParams{});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.valid.size(); ++i)
    if (a.valid[i] && b.valid[i]) worst = std::max(worst, std::abs(wrap_phase(a.phase[i] - b.phase[i])));
  EXPECT_LT(worst, 0.1);
}

TEST(Cwt, CrossedFringeRmseNoiseless) {
  const Frame f = crossed_frame(256, 16.0, 22.0, 0.0, 0);
  WaveletParams px, py;
  py.orientation = Axis::Y;
  EXPECT_LT(phase_rmse(cwt2_phase(f, px), [](int x, int) { return kTwoPi * x / 16.0; }), 0.05);
  EXPECT_LT(phase_rmse(cwt2_phase(f, py), [](int, int y) { return kTwoPi * y / 22.0; }), 0.05);
}

TEST(Cwt, CrossedFringeRmseWithIntensityNoise) {
  const Frame f = crossed_frame(256, 16.0, 22.0, 0.01, 42);
  WaveletParams px, py;
  py.orientation = Axis::Y;
  EXPECT_LT(phase_rmse(cwt2_phase(f, px), [](int x, int) { return kTwoPi * x / 16.0; }), 0.1);
  EXPECT_LT(phase_rmse(cwt2_phase(f, py), [](int, int y) { return kTwoPi * y / 22.0; }), 0.1);
}

TEST(Cwt, BorderPixelsInvalid) {
  const WaveletParams p;
  const PhaseMap pm = cwt2_phase(crossed_frame(256, 16.0, 22.0, 0.0, 0), p);
  const int b = p.border();
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x)
      if (x < b || y < b || x >= 256 - b || y >= 256 - b) ASSERT_FALSE(pm.is_valid(x, y));
  EXPECT_GT(pm.valid_count(), 0u);
  EXPECT_THROW(cwt2_phase(crossed_frame(128, 16.0, 22.0, 0.0, 0), p), Error);
}

TEST(Cwt, InvalidParamsRejected) {
  WaveletParams p;
  p.n_scales = 7;
  EXPECT_THROW(cwt2_phase(crossed_frame(256, 16, 22, 0, 0), p), Error);
  p = WaveletParams{};
  p.scale_min = p.scale_max;
  EXPECT_THROW(cwt2_phase(crossed_frame(256, 16, 22, 0, 0), p), Error);
}

TEST(PhaseShift, FourStepExactOnSyntheticFrames) {
  const PhaseShiftSet set{32.0, 4, Axis::X};
  CorrespondenceMap m(64, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 64; ++x) m.set(x, y, 0.37 * x + 2.0 * y, 0.0);
  const auto frames = shifted_frames(m, set, 0.0, 0);
  const PhaseMap pm = phase_shift_decode(frames, set);
  EXPECT_EQ(pm.valid_count(), pm.valid.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < pm.valid.size(); ++i)
    worst = std::max(worst, std::abs(wrap_phase(pm.phase[i] - kTwoPi * m.u[i] / 32.0)));
  EXPECT_LT(worst, 1e-6);
}

TEST(PhaseShift, QuarterPeriodGivesHalfPi) {
  const PhaseShiftSet set{32.0, 4, Axis::X};
  CorrespondenceMap m(1, 1);
  m.set(0, 0, 8.0, 0.0);
  const PhaseMap pm = phase_shift_decode(shifted_frames(m, set, 0.0, 0), set);
  EXPECT_NEAR(pm.phase[0], std::numbers::pi / 2, 1e-12);
}

TEST(PhaseShift, ConstantFramesAllInvalid) {
  const PhaseShiftSet set{32.0, 4, Axis::X};
  const std::vector<Frame> frames(4, Frame(16, 16, 0.5));
  EXPECT_EQ(phase_shift_decode(frames, set).valid_count(), 0u);
}

TEST(PhaseShift, EightStepNoiseRmse) {
  const PhaseShiftSet set{32.0, 8, Axis::Y};
  CorrespondenceMap m(128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) m.set(x, y, 0.0, 0.8 * y + 0.3 * x);
  const PhaseMap pm = phase_shift_decode(shifted_frames(m, set, 0.01, 17), set);
  double s = 0.0;
  for (std::size_t i = 0; i < pm.valid.size(); ++i) s += std::pow(wrap_phase(pm.phase[i] - kTwoPi * m.v[i] / 32.0), 2);
  EXPECT_LT(std::sqrt(s / pm.valid.size()), 0.02);
}

TEST(PhaseShift, ShiftCountMismatch) {
  const PhaseShiftSet set{32.0, 4, Axis::X};
  const std::vector<Frame> frames(3, Frame(4, 4, 0.5));
  try {
    phase_shift_decode(frames, set);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShiftCountMismatch);
  }
}

TEST(Unwrap, LinearRamp) {
  PhaseMap w(64, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 64; ++x) {
      w.phase(x, y) = wrap_phase(0.7 * x);
      w.quality(x, y) = 1.0;
      w.valid(x, y) = 1;
    }
  const PhaseMap u = unwrap2(w, {10, 1});
  EXPECT_FALSE(u.wrapped);
  const double offset = u.phase(0, 0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 64; ++x) ASSERT_NEAR(u.phase(x, y) - offset, 0.7 * x, 1e-6);
}

TEST(Unwrap, ContinuousMapUnchangedUpToGlobalMultiple) {
  PhaseMap w(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      w.phase(x, y) = 0.1 * std::sin(0.3 * x) + 0.05 * y - 0.5;
      w.quality(x, y) = 0.5 + 0.01 * x;
      w.valid(x, y) = 1;
    }
  const PhaseMap u = unwrap2(w, {7, 7});
  const double k = std::round((u.phase[0] - w.phase[0]) / kTwoPi);
  for (std::size_t i = 0; i < w.valid.size(); ++i) ASSERT_NEAR(u.phase[i], w.phase[i] + kTwoPi * k, 1e-12);
}

TEST(Unwrap, DisconnectedComponentStaysInvalid) {
  PhaseMap w(10, 3);
  for (int x = 0; x < 10; ++x) {
    w.phase(x, 1) = 0.0;
    w.quality(x, 1) = 1.0;
    w.valid(x, 1) = x != 5;
  }
  const PhaseMap u = unwrap2(w, {1, 1});
  EXPECT_TRUE(u.is_valid(4, 1));
  EXPECT_FALSE(u.is_valid(6, 1));
  EXPECT_EQ(u.valid_count(), 5u);
}

TEST(Unwrap, InvalidSeedRejected) {
  PhaseMap w(4, 4);
  try {
    unwrap2(w, {1, 1});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSeed);
  }
}

// Rendered eye phase restricted to the cornea, the anchor's smooth
// component; the sclera meets it across a correspondence jump.
TEST(Unwrap, RenderedCorneaPhaseRecoveredUpToGlobalOffset) {
  const SceneConfig scene = default_scene();
  const RenderTruth truth = render_truth(scene, 0);
  constexpr double period = 64.0;
  PhaseMap w(truth.map.width(), truth.map.height());
  for (std::size_t i = 0; i < w.valid.size(); ++i) {
    if (!truth.map.valid[i] || truth.region[i] != static_cast<std::uint8_t>(Region::Cornea)) continue;
    w.phase[i] = wrap_phase(kTwoPi * truth.map.u[i] / period);
    w.quality[i] = 1.0;
    w.valid[i] = 1;
  }
  std::size_t seed = 0;
  while (!w.valid[seed]) ++seed;
  const PhaseMap u = unwrap2(w, {static_cast<int>(seed % w.width()), static_cast<int>(seed / w.width())});
  for (int y = 0; y < u.height(); ++y)
    for (int x = 0; x + 1 < u.width(); ++x)
      if (u.is_valid(x, y) && u.is_valid(x + 1, y)) ASSERT_LT(std::abs(u.phase(x + 1, y) - u.phase(x, y)), std::numbers::pi);
  const double offset = u.phase[seed] - kTwoPi * truth.map.u[seed] / period;
  std::size_t good = 0, n = 0;
  for (std::size_t i = 0; i < u.valid.size(); ++i) {
    if (!u.valid[i]) continue;
    ++n;
    good += std::abs(u.phase[i] - offset - kTwoPi * truth.map.u[i] / period) < 0.05;
  }
  EXPECT_GT(n, 1000u);
  EXPECT_GE(good, static_cast<std::size_t>(0.99 * n));
}

TEST(PhaseToCorrespondence, AnchorReproducesTruthAndGauge) {
  const CorrespondenceMap truth = affine_map(64);
  const CrossedFringe cf{16.0, 22.0};
  PhaseMap px(64, 64), py(64, 64);
  for (std::size_t i = 0; i < truth.valid.size(); ++i) {
    px.phase[i] = kTwoPi * truth.u[i] / 16.0 + 3.0;
    py.phase[i] = kTwoPi * truth.v[i] / 22.0 - 1.0;
    px.valid[i] = py.valid[i] = 1;
  }
  px.valid[5] = 0;
  const Anchor anchor{{30, 30}, truth.u(30, 30), truth.v(30, 30)};
  const auto c = phase_to_correspondence(px, py, cf, anchor);
  EXPECT_FALSE(c.is_valid(5, 0));
  for (std::size_t i = 0; i < truth.valid.size(); ++i) {
    if (!c.valid[i]) continue;
    ASSERT_NEAR(c.u[i], truth.u[i], 1e-9);
    ASSERT_NEAR(c.v[i], truth.v[i], 1e-9);
  }
  for (auto& p : px.phase.data()) p += kTwoPi;
  const auto shifted = phase_to_correspondence(px, py, cf, anchor);
  for (std::size_t i = 0; i < truth.valid.size(); ++i)
    if (c.valid[i]) ASSERT_NEAR(shifted.u[i], c.u[i], 1e-9);
}

TEST(PhaseToCorrespondence, InvalidAnchorRejected) {
  PhaseMap px(4, 4), py(4, 4);
  try {
    phase_to_correspondence(px, py, CrossedFringe{}, Anchor{{1, 1}, 0, 0});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidAnchor);
  }
}

// Both decoders read the same screen-x phase off one synthetic scene.
TEST(DecoderAgreement, CwtMatchesPhaseShift) {
  const CorrespondenceMap m = affine_map(256);
  const Frame crossed = render_frame(m, CrossedFringe{16.0, 22.0}, 0, {});
  const PhaseMap a = cwt2_phase(crossed, WaveletParams::for_periods(12.0, 24.0, Axis::X));
  const PhaseShiftSet set{16.0, 4, Axis::X};
  const PhaseMap b = phase_shift_decode(shifted_frames(m, set, 0.0, 0), set);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.valid.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    s += std::pow(wrap_phase(a.phase[i] - b.phase[i]), 2);
    ++n;
  }
  ASSERT_GT(n, 1000u);
  EXPECT_LT(std::sqrt(s / n), 0.1);
}

// Phase shift -> unwrap -> anchored correspondence on the default render,
// scored on the anchor's smooth component.
TEST(DecoderConsistency, DefaultSceneMedianError) {
  const SceneConfig scene = default_scene();
  const RenderTruth truth = render_truth(scene, 0);
  const int w = truth.map.width();
  constexpr double period = 64.0;
  for (double sigma : {0.0, 0.01}) {
    PhaseMap wrapped[2];
    for (int a = 0; a < 2; ++a) {
      const PhaseShiftSet set{period, 8, a ? Axis::Y : Axis::X};
      wrapped[a] = phase_shift_decode(shifted_frames(truth.map, set, sigma, 100 + a), set);
    }
    // Anchor: the cornea pixel nearest the cornea centroid.
    double cx = 0, cy = 0;
    int nc = 0;
    for (std::size_t i = 0; i < truth.region.size(); ++i)
      if (truth.map.valid[i] && truth.region[i] == static_cast<std::uint8_t>(Region::Cornea)) {
        cx += i % w;
        cy += i / w;
        ++nc;
      }
    cx /= nc;
    cy /= nc;
    std::size_t anchor = 0;
    double best = 1e18;
    for (std::size_t i = 0; i < truth.region.size(); ++i) {
      if (!wrapped[0].valid[i] || !wrapped[1].valid[i]) continue;
      const double d = std::hypot(double(i % w) - cx, double(i / w) - cy);
      if (d < best) best = d, anchor = i;
    }
    const Pixel px{static_cast<int>(anchor % w), static_cast<int>(anchor / w)};
    const auto decoded = phase_to_correspondence(unwrap2(wrapped[0], px), unwrap2(wrapped[1], px),
                                                 CrossedFringe{period, period},
                                                 Anchor{px, truth.map.u[anchor], truth.map.v[anchor]});
    std::vector<double> err;
    for (std::size_t i = 0; i < decoded.valid.size(); ++i) {
      if (!decoded.valid[i] || truth.region[i] != static_cast<std::uint8_t>(Region::Cornea)) continue;
      err.push_back(std::hypot(decoded.u[i] - truth.map.u[i], decoded.v[i] - truth.map.v[i]));
    }
    ASSERT_GT(err.size(), 1000u);
    EXPECT_LT(median(err), sigma == 0.0 ? 0.1 : 0.5) << "sigma_I " << sigma;
  }
}

TEST(PhaseMapIo, RoundTrip) {
  PhaseMap pm = cwt2_phase(crossed_frame(256, 16.0, 22.0, 0.0, 0), WaveletParams{});
  const auto dir = std::filesystem::temp_directory_path();
  const auto pfm = (dir / "deflect_gaze_phase.pfm").string();
  const auto pgm = (dir / "deflect_gaze_phase.pgm").string();
  write_phase_map(pfm, pgm, pm);
  const PhaseMap back = read_phase_map(pfm, pgm, true);
  EXPECT_EQ(back.valid, pm.valid);
  for (std::size_t i = 0; i < pm.valid.size(); ++i) {
    ASSERT_EQ(back.phase[i], static_cast<double>(static_cast<float>(pm.phase[i])));
    ASSERT_EQ(back.quality[i], static_cast<double>(static_cast<float>(pm.quality[i])));
  }
  std::filesystem::remove(pfm);
  std::filesystem::remove(pgm);
}
