#pragma once

// Vowel formant estimation by linear prediction, plus the reference formant
// tables for the nine Kazakh vowels and vowel-chart export.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prosody/audio_io.hpp"
#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/speaker.hpp"
#include "prosody/spectral.hpp"

namespace prosody {

struct FormantEstimate {
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  std::array<double, 3> bandwidths{};
  std::size_t frames_used = 0;
};

struct VowelChartEntry {
  std::string vowel_label;
  SpeakerGroup speaker_group = SpeakerGroup::Male;
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
};

enum class LpcMethod {
  /// Least squares over the unwindowed frame, refit once without the rows
  /// whose prediction residual marks an excitation pulse.
  PulseExcludedCovariance,
  /// Hamming window followed by the Levinson-Durbin recursion.
  Autocorrelation,
};

struct FormantConfig {
  LpcMethod method = LpcMethod::PulseExcludedCovariance;
  double pre_emphasis = 0.97;
  double frame_ms = 30.0;
  double hop_ms = 10.0;
  double min_frequency = 90.0;   // Hz
  double max_bandwidth = 400.0;  // Hz
  std::size_t order = 0;         // 0 selects sample_rate/1000 + 2
  double outlier_factor = 3.0;   // residual rows above this multiple of the median are dropped
  double ridge = 1e-8;           // relative diagonal loading of the covariance system
};

// ---------------------------------------------------------------------------
// Reference tables

struct ReferenceRow {
  std::string_view label;
  std::string_view glyph;  // Kazakh Cyrillic letter
  std::array<int, 3> male;
  std::array<int, 3> female;
};

/// Average F1/F2/F3 (Hz) of the nine Kazakh vowels for male and female
/// speakers, in table order.
inline constexpr std::array<ReferenceRow, 9> kReferenceFormants = {{
    {"ae", "ә", {734, 1627, 2769}, {858, 1929, 3180}},
    {"uo", "ө", {517, 1437, 2500}, {662, 1424, 2892}},
    {"i", "і", {540, 1700, 2705}, {697, 1844, 2986}},
    {"y", "ү", {513, 1405, 2505}, {572, 1529, 2801}},
    {"a", "а", {811, 1258, 2640}, {948, 1397, 3048}},
    {"o", "о", {577, 808, 2765}, {583, 969, 3220}},
    {"yi", "ы", {590, 1307, 2652}, {743, 1175, 3072}},
    {"uy", "ұ", {566, 961, 2605}, {696, 1116, 3155}},
    {"e", "е", {443, 2087, 2900}, {554, 2559, 3150}},
}};

inline VowelChartEntry reference_formants(std::string_view vowel_label, SpeakerGroup group) {
  for (const auto& row : kReferenceFormants) {
    if (row.label == vowel_label || row.glyph == vowel_label) {
      const auto& f = group == SpeakerGroup::Male ? row.male : row.female;
      return {std::string(row.label), group, double(f[0]), double(f[1]), double(f[2])};
    }
  }
  throw Error(ErrorCode::UnknownVowel, "no reference formants for '" + std::string(vowel_label) + "'");
}

/// Full table for one speaker group, in table order.
inline std::vector<VowelChartEntry> reference_table(SpeakerGroup group) {
  std::vector<VowelChartEntry> out;
  for (const auto& row : kReferenceFormants) out.push_back(reference_formants(row.label, group));
  return out;
}

/// Reference table text: label,glyph,group,f1,f2,f3 with male rows first.
inline std::string reference_table_csv() {
  std::string out = "label,glyph,group,f1,f2,f3\n";
  for (SpeakerGroup g : {SpeakerGroup::Male, SpeakerGroup::Female}) {
    for (const auto& row : kReferenceFormants) {
      const auto& f = g == SpeakerGroup::Male ? row.male : row.female;
      out += csv::join({std::string(row.label), std::string(row.glyph), std::string(to_string(g)),
                        std::to_string(f[0]), std::to_string(f[1]), std::to_string(f[2])});
      out += '\n';
    }
  }
  return out;
}

/// Vowel-chart points as label,group,f1,f2 in input order.
inline void emit_vowel_chart(std::ostream& out, std::span<const VowelChartEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::EmptyInput, "vowel chart needs at least one entry");
  out << "label,group,f1,f2\n";
  for (const auto& e : entries) {
    out << csv::join({e.vowel_label, std::string(to_string(e.speaker_group)), csv::format_exact(e.f1),
                      csv::format_exact(e.f2)})
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Estimation

struct Resonance {
  double frequency = 0.0;
  double bandwidth = 0.0;
};

namespace detail {

/// Predictor coefficients minimizing the squared residual over the rows
/// n in [order, N) with use[n] set.
inline std::vector<double> covariance_lpc(std::span<const double> x, std::size_t order,
                                          const std::vector<char>& use, double ridge) {
  const auto p = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd past(p);
  for (std::size_t n = order; n < x.size(); ++n) {
    if (!use[n]) continue;
    for (Eigen::Index k = 0; k < p; ++k) past(k) = x[n - 1 - static_cast<std::size_t>(k)];
    phi.selfadjointView<Eigen::Lower>().rankUpdate(past);
    psi += past * x[n];
  }
  phi.triangularView<Eigen::StrictlyUpper>() = phi.transpose();
  const double trace = phi.trace();
  if (!(trace > 0.0)) return {};
  phi.diagonal().array() += ridge * trace / static_cast<double>(p);
  const Eigen::VectorXd a = phi.ldlt().solve(psi);
  std::vector<double> alpha(order + 1, 0.0);
  alpha[0] = 1.0;
  for (Eigen::Index k = 0; k < p; ++k) alpha[static_cast<std::size_t>(k) + 1] = a(k);
  return alpha;
}

inline std::vector<double> pulse_excluded_lpc(std::span<const double> x, std::size_t order,
                                              const FormantConfig& cfg) {
  if (x.size() <= 2 * order) return {};
  std::vector<char> use(x.size(), 1);
  auto alpha = covariance_lpc(x, order, use, cfg.ridge);
  if (alpha.empty()) return alpha;

  std::vector<double> residual(x.size(), 0.0);
  std::vector<double> magnitudes;
  magnitudes.reserve(x.size() - order);
  for (std::size_t n = order; n < x.size(); ++n) {
    double pred = 0.0;
    for (std::size_t k = 1; k <= order; ++k) pred += alpha[k] * x[n - k];
    residual[n] = std::abs(x[n] - pred);
    magnitudes.push_back(residual[n]);
  }
  const auto mid = magnitudes.begin() + static_cast<std::ptrdiff_t>(magnitudes.size() / 2);
  std::nth_element(magnitudes.begin(), mid, magnitudes.end());
  const double limit = cfg.outlier_factor * *mid;
  std::size_t kept = 0;
  for (std::size_t n = order; n < x.size(); ++n) {
    use[n] = residual[n] <= limit;
    kept += use[n] ? 1 : 0;
  }
  if (kept < 2 * order) return alpha;
  return covariance_lpc(x, order, use, cfg.ridge);
}

}  // namespace detail

/// Resonances of one analysis frame, ascending in frequency, filtered by the
/// frequency floor and bandwidth ceiling of `cfg`.
inline std::vector<Resonance> frame_resonances(std::span<const double> frame, int sample_rate,
                                               const FormantConfig& cfg) {
  const std::size_t order = cfg.order ? cfg.order : static_cast<std::size_t>(sample_rate / 1000 + 2);
  const auto emphasized = pre_emphasize(frame, cfg.pre_emphasis);
  std::vector<double> alpha;
  if (cfg.method == LpcMethod::Autocorrelation) {
    const auto windowed = apply_window(emphasized, WindowKind::Hamming);
    const auto r = spectral::autocorrelation(windowed, order);
    if (!(r[0] > 0.0)) return {};
    alpha = spectral::levinson_durbin(r, order).alpha;
  } else {
    alpha = detail::pulse_excluded_lpc(emphasized, order, cfg);
    if (alpha.empty()) return {};
  }

  std::vector<Resonance> out;
  for (const auto& root : spectral::inverse_filter_roots(alpha)) {
    const double angle = std::arg(root);
    const double radius = std::abs(root);
    if (angle <= 0.0 || radius <= 0.0) continue;
    const double freq = angle * sample_rate / (2.0 * std::numbers::pi);
    const double bw = -(sample_rate / std::numbers::pi) * std::log(radius);
    if (freq > cfg.min_frequency && bw > 0.0 && bw < cfg.max_bandwidth && freq < sample_rate / 2.0) {
      out.push_back({freq, bw});
    }
  }
  std::sort(out.begin(), out.end(), [](const Resonance& a, const Resonance& b) { return a.frequency < b.frequency; });
  return out;
}

/// F1-F3 averaged over frames in the middle half of a voiced vowel segment.
inline FormantEstimate estimate_formants(const AudioBuffer& segment, const FormantConfig& cfg = {}) {
  const int sr = segment.sample_rate();
  const std::size_t frame_len = ms_to_samples(cfg.frame_ms, sr);
  if (segment.size() < frame_len || frame_len == 0) {
    throw Error(ErrorCode::SegmentTooShort, "vowel segment shorter than " + std::to_string(cfg.frame_ms) + " ms");
  }
  const auto samples = segment.samples();
  const std::size_t n = samples.size();
  std::size_t lo = n / 4;
  std::size_t hi = n - n / 4;
  if (hi - lo < frame_len) {
    lo = (n - frame_len) / 2;
    hi = lo + frame_len;
  }
  const std::size_t hop = std::max<std::size_t>(1, ms_to_samples(cfg.hop_ms, sr));

  FormantEstimate est;
  std::array<double, 3> freq_sum{};
  std::array<double, 3> bw_sum{};
  for (std::size_t start = lo; start + frame_len <= hi; start += hop) {
    const auto res = frame_resonances(samples.subspan(start, frame_len), sr, cfg);
    if (res.size() < 3) continue;
    for (std::size_t k = 0; k < 3; ++k) {
      freq_sum[k] += res[k].frequency;
      bw_sum[k] += res[k].bandwidth;
    }
    ++est.frames_used;
  }
  if (est.frames_used == 0) {
    throw Error(ErrorCode::NoResonancesFound, "no frame produced three resonances");
  }
  const double count = static_cast<double>(est.frames_used);
  est.f1 = freq_sum[0] / count;
  est.f2 = freq_sum[1] / count;
  est.f3 = freq_sum[2] / count;
  for (std::size_t k = 0; k < 3; ++k) est.bandwidths[k] = bw_sum[k] / count;
  return est;
}

}  // namespace prosody
