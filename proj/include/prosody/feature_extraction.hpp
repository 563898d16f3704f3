#pragma once

// 13 static cepstral features per frame (12 cepstra + log energy) from either
// a mel filterbank (MFCC) or perceptual linear prediction (PLP), regression
// deltas up to 39 dimensions, and per-phoneme diagonal Gaussian statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "prosody/audio_io.hpp"
#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/spectral.hpp"

namespace prosody {

inline constexpr Eigen::Index kStaticDim = 13;
inline constexpr Eigen::Index kFeatureDim = 39;
inline constexpr double kEnergyFloor = 1e-10;
inline constexpr double kVarianceFloor = 1e-4;

enum class FeatureScheme { Mfcc, Plp };

constexpr std::string_view to_string(FeatureScheme s) { return s == FeatureScheme::Mfcc ? "mfcc" : "plp"; }

inline FeatureScheme parse_feature_scheme(std::string_view text) {
  if (text == "mfcc") return FeatureScheme::Mfcc;
  if (text == "plp") return FeatureScheme::Plp;
  throw Error(ErrorCode::InvalidArgument, "feature scheme must be 'mfcc' or 'plp', got '" + std::string(text) + "'");
}

/// One row per frame. Columns are c1..c12 then log energy, optionally
/// followed by 13 deltas and 13 delta-deltas.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  double frame_hop_ms = 10.0;
  FeatureScheme scheme = FeatureScheme::Mfcc;

  Eigen::Index frames() const noexcept { return values.rows(); }
  Eigen::Index dim() const noexcept { return values.cols(); }
};

struct FeatureConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double pre_emphasis = 0.97;  // MFCC only; PLP relies on its loudness curve
  std::size_t n_mels = 0;      // 0: 26 at 16 kHz, scaled with the mel width above
  std::size_t n_ceps = 12;
  std::size_t plp_order = 12;
  double energy_floor = kEnergyFloor;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
inline double hz_to_bark(double hz) { return 6.0 * std::asinh(hz / 600.0); }

/// 26 filters for an 8 kHz band; wider bands keep the same mel spacing.
inline std::size_t default_mel_count(int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (nyquist <= 8000.0) return 26;
  return static_cast<std::size_t>(std::lround(26.0 * hz_to_mel(nyquist) / hz_to_mel(8000.0)));
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_filters, std::size_t nfft, int sample_rate)
      : nfft_(nfft), sample_rate_(sample_rate), weights_(n_filters, std::vector<double>(nfft / 2 + 1, 0.0)) {
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_filters + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_filters + 1));
    }
    centers_.assign(edges.begin() + 1, edges.end() - 1);
    for (std::size_t m = 0; m < n_filters; ++m) {
      const double lo = edges[m];
      const double mid = edges[m + 1];
      const double hi = edges[m + 2];
      for (std::size_t k = 0; k <= nfft / 2; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
        if (f > lo && f < hi) weights_[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
    }
  }

  std::size_t size() const noexcept { return weights_.size(); }
  const std::vector<double>& center_frequencies() const noexcept { return centers_; }

  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> out(weights_.size(), 0.0);
    for (std::size_t m = 0; m < weights_.size(); ++m) {
      for (std::size_t k = 0; k < power.size() && k < weights_[m].size(); ++k) out[m] += weights_[m][k] * power[k];
    }
    return out;
  }

 private:
  std::size_t nfft_;
  int sample_rate_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> centers_;
};

/// Critical-band integration on the Bark scale with the classic asymmetric
/// masking curve. Each band's weights sum to one, so a flat power spectrum
/// maps to a flat band spectrum.
class BarkFilterbank {
 public:
  BarkFilterbank(std::size_t nfft, int sample_rate) {
    const double bark_hi = hz_to_bark(sample_rate / 2.0);
    const std::size_t n_bands = static_cast<std::size_t>(std::floor(bark_hi)) + 2;
    const double step = bark_hi / static_cast<double>(n_bands - 1);
    weights_.assign(n_bands, std::vector<double>(nfft / 2 + 1, 0.0));
    for (std::size_t j = 0; j < n_bands; ++j) {
      const double center = step * static_cast<double>(j);
      centers_hz_.push_back(600.0 * std::sinh(center / 6.0));
      double total = 0.0;
      for (std::size_t k = 0; k <= nfft / 2; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
        const double w = masking(hz_to_bark(f) - center);
        weights_[j][k] = w;
        total += w;
      }
      if (total > 0.0) {
        for (double& w : weights_[j]) w /= total;
      }
    }
  }

  std::size_t size() const noexcept { return weights_.size(); }
  const std::vector<double>& center_frequencies() const noexcept { return centers_hz_; }

  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> out(weights_.size(), 0.0);
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      for (std::size_t k = 0; k < power.size() && k < weights_[j].size(); ++k) out[j] += weights_[j][k] * power[k];
    }
    return out;
  }

  static double masking(double dz) {
    if (dz < -1.3 || dz > 2.5) return 0.0;
    if (dz < -0.5) return std::pow(10.0, 2.5 * (dz + 0.5));
    if (dz <= 0.5) return 1.0;
    return std::pow(10.0, -(dz - 0.5));
  }

 private:
  std::vector<std::vector<double>> weights_;
  std::vector<double> centers_hz_;
};

/// Equal-loudness weighting at frequency `hz` (40 dB curve approximation).
inline double equal_loudness(double hz) {
  const double w2 = std::pow(2.0 * std::numbers::pi * hz, 2);
  return (w2 + 56.8e6) * w2 * w2 / (std::pow(w2 + 6.3e6, 2) * (w2 + 0.38e9));
}

/// Orthonormal DCT-II coefficients 1..n_ceps of `x`.
inline std::vector<double> dct_cepstra(std::span<const double> x, std::size_t n_ceps) {
  const std::size_t n = x.size();
  std::vector<double> out(n_ceps, 0.0);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 1; k <= n_ceps; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n));
    }
    out[k - 1] = scale * acc;
  }
  return out;
}

/// Front-end state shared by every frame of one buffer.
class CepstralAnalyzer {
 public:
  CepstralAnalyzer(FeatureScheme scheme, int sample_rate, const FeatureConfig& cfg)
      : scheme_(scheme),
        cfg_(cfg),
        sample_rate_(sample_rate),
        frame_len_(ms_to_samples(cfg.frame_ms, sample_rate)),
        nfft_(spectral::next_pow2(std::max<std::size_t>(frame_len_, 2))),
        window_(make_window(WindowKind::Hamming, frame_len_)),
        mel_(cfg.n_mels ? cfg.n_mels : default_mel_count(sample_rate), nfft_, sample_rate),
        bark_(nfft_, sample_rate) {
    if (cfg.n_ceps != 12) throw Error(ErrorCode::InvalidArgument, "feature layout requires 12 cepstra");
    validate_framing(cfg.frame_ms, cfg.hop_ms, sample_rate);
    for (double hz : bark_.center_frequencies()) loudness_.push_back(equal_loudness(hz));
  }

  std::size_t frame_length() const noexcept { return frame_len_; }
  const MelFilterbank& mel_filterbank() const noexcept { return mel_; }
  const BarkFilterbank& bark_filterbank() const noexcept { return bark_; }

  /// Power spectrum of the windowed frame; MFCC frames are pre-emphasized first.
  std::vector<double> frame_power(std::span<const double> frame) const {
    std::vector<double> x(frame.begin(), frame.end());
    if (scheme_ == FeatureScheme::Mfcc) x = pre_emphasize(x, cfg_.pre_emphasis);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= window_[i];
    return spectral::power_spectrum(x, nfft_);
  }

  std::vector<double> mel_energies(std::span<const double> frame) const { return mel_.apply(frame_power(frame)); }

  std::vector<double> critical_band_spectrum(std::span<const double> frame) const {
    return bark_.apply(frame_power(frame));
  }

  /// c1..c12 followed by log frame energy of the raw frame.
  std::array<double, kStaticDim> statics(std::span<const double> frame) const {
    std::array<double, kStaticDim> out{};
    const auto ceps = scheme_ == FeatureScheme::Mfcc ? mfcc_cepstra(frame) : plp_cepstra(frame);
    std::copy(ceps.begin(), ceps.end(), out.begin());
    double energy = 0.0;
    for (double v : frame) energy += v * v;
    out[kStaticDim - 1] = std::log(std::max(energy, cfg_.energy_floor));
    return out;
  }

 private:
  std::vector<double> mfcc_cepstra(std::span<const double> frame) const {
    auto bands = mel_energies(frame);
    for (double& b : bands) b = std::log(std::max(b, cfg_.energy_floor));
    return dct_cepstra(bands, cfg_.n_ceps);
  }

  std::vector<double> plp_cepstra(std::span<const double> frame) const {
    auto bands = critical_band_spectrum(frame);
    const std::size_t m = bands.size();
    for (std::size_t j = 0; j < m; ++j) {
      bands[j] = std::cbrt(std::max(bands[j] * loudness_[j], cfg_.energy_floor));
    }
    // Edge bands fall outside the loudness curve's useful range.
    bands[0] = bands[1];
    bands[m - 1] = bands[m - 2];

    // Autocorrelation of the auditory spectrum sampled on [0, pi].
    const std::size_t order = cfg_.plp_order;
    std::vector<double> r(order + 1, 0.0);
    const double span = static_cast<double>(m - 1);
    for (std::size_t k = 0; k <= order; ++k) {
      double acc = bands[0] + (k % 2 == 0 ? 1.0 : -1.0) * bands[m - 1];
      for (std::size_t j = 1; j + 1 < m; ++j) {
        acc += 2.0 * bands[j] * std::cos(std::numbers::pi * static_cast<double>(k * j) / span);
      }
      r[k] = acc / (2.0 * span);
    }
    const auto lpc = spectral::levinson_durbin(r, order);
    auto c = spectral::lpc_to_cepstrum(lpc.alpha, cfg_.n_ceps);
    return std::vector<double>(c.begin() + 1, c.end());
  }

  FeatureScheme scheme_;
  FeatureConfig cfg_;
  int sample_rate_;
  std::size_t frame_len_;
  std::size_t nfft_;
  std::vector<double> window_;
  MelFilterbank mel_;
  BarkFilterbank bark_;
  std::vector<double> loudness_;
};

/// 13 static features per frame (no deltas).
inline FeatureMatrix compute_features(const AudioBuffer& buf, FeatureScheme scheme, const FeatureConfig& cfg = {}) {
  const CepstralAnalyzer analyzer(scheme, buf.sample_rate(), cfg);
  if (buf.size() < analyzer.frame_length()) {
    throw Error(ErrorCode::BufferTooShort, "buffer shorter than one " + std::to_string(cfg.frame_ms) + " ms frame");
  }
  const auto frames = frame_signal(buf, cfg.frame_ms, cfg.hop_ms);
  FeatureMatrix out;
  out.scheme = scheme;
  out.frame_hop_ms = cfg.hop_ms;
  out.values.resize(static_cast<Eigen::Index>(frames.size()), kStaticDim);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto row = analyzer.statics(frames.frames[i]);
    for (Eigen::Index d = 0; d < kStaticDim; ++d) out.values(static_cast<Eigen::Index>(i), d) = row[d];
  }
  return out;
}

inline FeatureMatrix compute_mfcc(const AudioBuffer& buf, const FeatureConfig& cfg = {}) {
  return compute_features(buf, FeatureScheme::Mfcc, cfg);
}

inline FeatureMatrix compute_plp(const AudioBuffer& buf, const FeatureConfig& cfg = {}) {
  return compute_features(buf, FeatureScheme::Plp, cfg);
}

namespace detail {

/// Regression delta over +/-2 frames with edge replication.
inline Eigen::MatrixXd regression_delta(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, x.cols());
  auto at = [&](Eigen::Index t) { return x.row(std::clamp<Eigen::Index>(t, 0, n - 1)); };
  for (Eigen::Index t = 0; t < n; ++t) {
    d.row(t) = (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
  }
  return d;
}

}  // namespace detail

/// Extends 13 statics to 39 columns: statics, deltas, delta-deltas.
inline FeatureMatrix append_deltas(const FeatureMatrix& m) {
  if (m.dim() != kStaticDim) {
    throw Error(ErrorCode::DimensionMismatch, "append_deltas expects 13 static columns, got " + std::to_string(m.dim()));
  }
  if (m.frames() == 0) throw Error(ErrorCode::EmptyInput, "append_deltas of an empty matrix");
  const Eigen::MatrixXd delta = detail::regression_delta(m.values);
  const Eigen::MatrixXd delta2 = detail::regression_delta(delta);
  FeatureMatrix out = m;
  out.values.resize(m.frames(), kFeatureDim);
  out.values << m.values, delta, delta2;
  return out;
}

/// Static features plus deltas for a whole buffer.
inline FeatureMatrix extract_features(const AudioBuffer& buf, FeatureScheme scheme, const FeatureConfig& cfg = {}) {
  return append_deltas(compute_features(buf, scheme, cfg));
}

// ---------------------------------------------------------------------------

struct PhonemeStats {
  std::string label;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // diagonal covariance, floored
  std::size_t count = 0;
};

/// Per-dimension mean and population variance over the rows of `frames`.
inline PhonemeStats compute_stats(std::string label, const Eigen::MatrixXd& frames,
                                  double variance_floor = kVarianceFloor) {
  if (frames.rows() == 0) throw Error(ErrorCode::EmptyInput, "no frames for " + label);
  if (frames.cols() != kFeatureDim) {
    throw Error(ErrorCode::DimensionMismatch, "expected 39-dimensional frames, got " + std::to_string(frames.cols()));
  }
  PhonemeStats stats;
  stats.label = std::move(label);
  stats.count = static_cast<std::size_t>(frames.rows());
  stats.mean = frames.colwise().mean().transpose();
  const Eigen::MatrixXd centered = frames.rowwise() - stats.mean.transpose();
  stats.variance = (centered.array().square().colwise().sum() / static_cast<double>(frames.rows())).transpose();
  stats.variance = stats.variance.cwiseMax(variance_floor);
  return stats;
}

// ---------------------------------------------------------------------------
// CSV

inline std::vector<std::string> feature_csv_header() {
  std::vector<std::string> statics;
  for (int i = 1; i <= 12; ++i) statics.push_back("c" + std::to_string(i));
  statics.push_back("log_energy");
  std::vector<std::string> header = {"frame"};
  for (const auto& s : statics) header.push_back(s);
  for (const auto& s : statics) header.push_back("d_" + s);
  for (const auto& s : statics) header.push_back("dd_" + s);
  return header;
}

/// One row per frame: frame index then 39 values in shortest round-trip form.
inline void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
  if (m.dim() != kFeatureDim) {
    throw Error(ErrorCode::DimensionMismatch, "feature CSV holds 39-dimensional rows");
  }
  out << csv::join(feature_csv_header()) << '\n';
  for (Eigen::Index t = 0; t < m.frames(); ++t) {
    out << t;
    for (Eigen::Index d = 0; d < kFeatureDim; ++d) out << ',' << csv::format_exact(m.values(t, d));
    out << '\n';
  }
}

inline FeatureMatrix read_feature_csv(const std::filesystem::path& path, FeatureScheme scheme = FeatureScheme::Mfcc,
                                      double frame_hop_ms = 10.0) {
  const auto table = csv::read_file(path);
  csv::require_header(table, feature_csv_header(), path.string());
  FeatureMatrix m;
  m.scheme = scheme;
  m.frame_hop_ms = frame_hop_ms;
  m.values.resize(static_cast<Eigen::Index>(table.rows.size()), kFeatureDim);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(row.line);
    if (row.fields.size() != static_cast<std::size_t>(kFeatureDim) + 1) {
      throw Error(ErrorCode::MalformedRow, where + ": expected 40 fields");
    }
    if (csv::parse_int(row.fields[0], where) != static_cast<long long>(r)) {
      throw Error(ErrorCode::MalformedRow, where + ": frame index out of sequence");
    }
    for (Eigen::Index d = 0; d < kFeatureDim; ++d) {
      m.values(static_cast<Eigen::Index>(r), d) = csv::parse_double(row.fields[static_cast<std::size_t>(d) + 1], where);
    }
  }
  return m;
}

}  // namespace prosody
