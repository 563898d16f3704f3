#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "prosody/feature_extraction.hpp"
#include "prosody/spectral.hpp"
#include "prosody/synthesis.hpp"

using namespace prosody;

namespace {

AudioBuffer noise(int sr, double seconds, double sd, std::uint64_t seed) {
  auto x = synth::white_noise(synth::sample_count(seconds, sr), sd, seed);
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return AudioBuffer(x, sr);
}

}  // namespace

TEST(ComputeFeatures, ShapeForOneSecond) {
  for (auto scheme : {FeatureScheme::Mfcc, FeatureScheme::Plp}) {
    const auto m = compute_features(synth::sine(440.0, 16000, 1.0), scheme);
    EXPECT_EQ(m.dim(), 13);
    EXPECT_EQ(m.frames(), 100);
    EXPECT_EQ(m.scheme, scheme);
    const auto full = extract_features(synth::sine(440.0, 16000, 1.0), scheme);
    EXPECT_EQ(full.dim(), 39);
    EXPECT_TRUE(full.values.allFinite());
  }
}

TEST(ComputeFeatures, SilenceIsFloored) {
  for (auto scheme : {FeatureScheme::Mfcc, FeatureScheme::Plp}) {
    const auto m = compute_features(synth::silence(16000, 0.5), scheme);
    for (Eigen::Index t = 0; t < m.frames(); ++t) {
      EXPECT_DOUBLE_EQ(m.values(t, 12), std::log(kEnergyFloor));
      for (Eigen::Index d = 0; d < 12; ++d) EXPECT_NEAR(m.values(t, d), 0.0, 1e-9);
    }
  }
}

TEST(ComputeFeatures, BufferTooShort) {
  try {
    compute_mfcc(AudioBuffer(std::vector<double>(100, 0.0), 16000));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BufferTooShort);
  }
}

TEST(MelFilterbank, PeakChannelFollowsDftOracle) {
  const int sr = 16000;
  const CepstralAnalyzer an(FeatureScheme::Mfcc, sr, {});
  const auto& bank = an.mel_filterbank();
  std::vector<std::size_t> channels;
  for (double f : {1000.0, 3000.0}) {
    const auto tone = synth::sine(f, sr, 0.025);
    std::vector<double> frame(tone.samples().begin(), tone.samples().end());
    const auto energies = an.mel_energies(frame);
    const std::size_t channel = std::max_element(energies.begin(), energies.end()) - energies.begin();

    // Oracle: locate the DFT peak on the same zero-padded grid, then pick the
    // filter whose centre lies nearest that frequency.
    std::vector<double> padded(spectral::next_pow2(frame.size()), 0.0);
    std::copy(frame.begin(), frame.end(), padded.begin());
    const double peak_hz = static_cast<double>(oracle::dft_peak_bin(padded)) * sr / padded.size();
    std::size_t nearest = 0;
    for (std::size_t m = 0; m < bank.size(); ++m) {
      if (std::abs(bank.center_frequencies()[m] - peak_hz) < std::abs(bank.center_frequencies()[nearest] - peak_hz)) {
        nearest = m;
      }
    }
    EXPECT_EQ(channel, nearest) << f;
    channels.push_back(channel);
  }
  EXPECT_LT(channels[0], channels[1]);
}

TEST(MelFilterbank, DefaultCounts) {
  EXPECT_EQ(default_mel_count(16000), 26u);
  EXPECT_EQ(default_mel_count(8000), 26u);
  EXPECT_GT(default_mel_count(44100), 26u);
}

TEST(PlpFrontEnd, WhiteNoiseGivesFlatCriticalBands) {
  const int sr = 16000;
  const CepstralAnalyzer an(FeatureScheme::Plp, sr, {});
  const auto buf = noise(sr, 1000 * 0.010 + 0.015, 0.1, 77);
  const auto frames = frame_signal(buf, 25.0, 10.0);
  std::vector<double> mean(an.bark_filterbank().size(), 0.0);
  std::size_t used = 0;
  for (const auto& f : frames.frames) {
    if (used == 1000) break;
    const auto b = an.critical_band_spectrum(f);
    for (std::size_t j = 0; j < b.size(); ++j) mean[j] += b[j];
    ++used;
  }
  ASSERT_EQ(used, 1000u);
  double lo = 1e300, hi = 0.0;
  for (std::size_t j = 2; j + 2 < mean.size(); ++j) {
    lo = std::min(lo, mean[j]);
    hi = std::max(hi, mean[j]);
  }
  EXPECT_LT(10.0 * std::log10(hi / lo), 3.0);
}

TEST(Spectral, CepstrumRecursionMatchesSpectralOracle) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    // A stable predictor from an autocorrelation sequence of random data.
    std::vector<double> x(400);
    for (double& v : x) v = g(rng);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] += 0.9 * x[i - 1];
    const auto r = spectral::autocorrelation(x, 12);
    const auto lpc = spectral::levinson_durbin(r, 12);
    const auto c = spectral::lpc_to_cepstrum(lpc.alpha, 12);
    const std::vector<double> tail(lpc.alpha.begin() + 1, lpc.alpha.end());
    const auto ref = oracle::all_pole_cepstrum(tail, 12);
    for (std::size_t q = 1; q <= 12; ++q) EXPECT_NEAR(c[q], ref[q - 1], 1e-6) << q;
  }
}

TEST(Spectral, FftAutocorrelationMatchesDirect) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> x(500);
  for (double& v : x) v = g(rng);
  Eigen::FFT<double> fft;
  const auto a = spectral::autocorrelation_fft(x, 40, fft);
  const auto b = spectral::autocorrelation(x, 40);
  for (std::size_t k = 0; k <= 40; ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
}

TEST(FeatureProperty, GainShiftsOnlyLogEnergy) {
  const auto v = synth::vowel(std::vector<synth::Resonance>{{700, 100}, {1200, 120}, {2600, 190}}, 120.0, 16000, 0.5);
  std::vector<double> quiet(v.samples().begin(), v.samples().end());
  for (double& s : quiet) s *= 0.25;
  const AudioBuffer base(quiet, 16000);
  for (double c : {1.5, 2.0, 3.9}) {
    std::vector<double> loud(quiet);
    for (double& s : loud) s *= c;
    for (auto scheme : {FeatureScheme::Mfcc, FeatureScheme::Plp}) {
      const auto a = compute_features(base, scheme);
      const auto b = compute_features(AudioBuffer(loud, 16000), scheme);
      for (Eigen::Index t = 0; t < a.frames(); ++t) {
        EXPECT_NEAR(b.values(t, 12) - a.values(t, 12), 2.0 * std::log(c), 1e-9);
        for (Eigen::Index d = 0; d < 12; ++d) EXPECT_NEAR(b.values(t, d), a.values(t, d), 1e-6);
      }
    }
  }
}

TEST(AppendDeltas, ConstantRampAndSingleFrame) {
  FeatureMatrix m;
  m.values = Eigen::MatrixXd::Constant(8, 13, 2.5);
  auto d = append_deltas(m);
  EXPECT_EQ(d.dim(), 39);
  EXPECT_TRUE(d.values.rightCols(26).isZero(0.0));

  m.values = Eigen::MatrixXd(10, 13);
  for (Eigen::Index t = 0; t < 10; ++t) {
    for (Eigen::Index k = 0; k < 13; ++k) m.values(t, k) = 3.0 * t + k;
  }
  d = append_deltas(m);
  for (Eigen::Index t = 2; t < 8; ++t) {
    for (Eigen::Index k = 0; k < 13; ++k) EXPECT_NEAR(d.values(t, 13 + k), 3.0, 1e-12);
  }
  for (Eigen::Index t = 4; t < 6; ++t) {
    for (Eigen::Index k = 0; k < 13; ++k) EXPECT_NEAR(d.values(t, 26 + k), 0.0, 1e-12);
  }

  FeatureMatrix one;
  one.values = Eigen::MatrixXd::Random(1, 13);
  EXPECT_TRUE(append_deltas(one).values.rightCols(26).isZero(0.0));

  FeatureMatrix bad;
  bad.values = Eigen::MatrixXd::Zero(3, 12);
  EXPECT_THROW(append_deltas(bad), Error);
}

TEST(AppendDeltasProperty, ReversalNegatesDeltas) {
  FeatureMatrix m;
  m.values = Eigen::MatrixXd::Random(30, 13);
  FeatureMatrix r;
  r.values = m.values.colwise().reverse();
  const auto a = append_deltas(m);
  const auto b = append_deltas(r);
  for (Eigen::Index t = 4; t < 26; ++t) {
    const Eigen::Index u = 29 - t;
    for (Eigen::Index k = 0; k < 13; ++k) {
      EXPECT_NEAR(b.values(u, 13 + k), -a.values(t, 13 + k), 1e-12);
      EXPECT_NEAR(b.values(u, 26 + k), a.values(t, 26 + k), 1e-12);
    }
  }
}

TEST(ComputeStats, Examples) {
  Eigen::MatrixXd two(2, 39);
  two.row(0).setZero();
  two.row(1).setConstant(2.0);
  const auto s = compute_stats("p", two);
  EXPECT_TRUE(s.mean.isApproxToConstant(1.0));
  EXPECT_TRUE(s.variance.isApproxToConstant(1.0));
  EXPECT_EQ(s.count, 2u);

  const auto single = compute_stats("p", Eigen::MatrixXd::Random(1, 39));
  EXPECT_TRUE((single.variance.array() == kVarianceFloor).all());
  const auto same = compute_stats("p", Eigen::MatrixXd::Constant(5, 39, 0.3));
  EXPECT_TRUE((same.variance.array() == kVarianceFloor).all());
  try {
    compute_stats("p", Eigen::MatrixXd(0, 39));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(ComputeStatsProperty, MeanMatchesBruteForce) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 5.0);
  Eigen::MatrixXd x(57, 39);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const auto s = compute_stats("p", x);
  for (Eigen::Index d = 0; d < 39; ++d) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < 57; ++t) sum += x(t, d);
    EXPECT_NEAR(s.mean(d), sum / 57, 1e-9);
    EXPECT_GE(s.variance(d), kVarianceFloor);
  }
}

TEST(FeatureCsv, RoundTrip) {
  const auto m = extract_features(synth::sine(300.0, 16000, 0.2), FeatureScheme::Plp);
  const auto dir = oracle::fresh_dir("feat");
  {
    std::ofstream out(dir / "f.csv", std::ios::binary);
    write_feature_csv(out, m);
  }
  const auto back = read_feature_csv(dir / "f.csv", FeatureScheme::Plp);
  ASSERT_EQ(back.frames(), m.frames());
  ASSERT_EQ(back.dim(), 39);
  EXPECT_EQ(back.values, m.values);
  const auto header = feature_csv_header();
  EXPECT_EQ(header.size(), 40u);
  EXPECT_EQ(header[0], "frame");
}
