#pragma once

// Fundamental-frequency tracking on a fixed hop grid and the pitch variation
// quotient (std/mean of voiced f0) used to grade intonation.

#include <algorithm>
#include <cmath>
#include <map>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "prosody/audio_io.hpp"
#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/spectral.hpp"

namespace prosody {

/// Default monotone/dynamic boundary on the pitch variation quotient.
inline constexpr double kDefaultPvqThreshold = 0.16;
/// Default perception-mark boundary between low and high ratings.
inline constexpr double kDefaultMarkBoundary = 2.0;

struct PitchConfig {
  double f_min = 60.0;
  double f_max = 400.0;
  double frame_ms = 30.0;
  double hop_ms = 7.5;
  double voicing_threshold = 0.30;  // on the normalized correlation peak
  double octave_ratio = 0.85;       // earliest peak within this fraction of the best wins
  double silence_power = 1e-10;     // mean-square below this is unvoiced outright
  double min_energy_balance = 0.1;  // lags whose two correlated spans differ more in energy are ignored
  double relative_silence_db = -30.0;  // frames (or frame halves) this far below the loudest frame are unvoiced
  std::size_t median_span = 5;      // running median over voiced runs; 1 disables
};

struct PitchContour {
  std::vector<double> f0;     // Hz, 0 where unvoiced
  std::vector<bool> voiced;
  double hop_ms = 7.5;
  int sample_rate = 0;
  double f_min = 0.0;
  double f_max = 0.0;

  std::size_t size() const noexcept { return f0.size(); }
  std::size_t voiced_count() const noexcept {
    return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
  }
};

enum class IntonationLabel { Monotone = 0, Dynamic = 1 };

constexpr std::string_view to_string(IntonationLabel label) {
  return label == IntonationLabel::Dynamic ? "Dynamic" : "Monotone";
}

struct PvqReport {
  double mean_f0 = 0.0;
  double std_f0 = 0.0;
  double pvq = 0.0;
  double voiced_fraction = 0.0;
  IntonationLabel label = IntonationLabel::Monotone;
};

struct PerceptionRecord {
  std::string segment_id;
  std::vector<int> marks;
  double average_mark = 0.0;
};

struct SegmentPvq {
  std::string segment_id;
  PvqReport report;
};

struct SegmentAgreement {
  std::string segment_id;
  double pvq = 0.0;
  double average_mark = 0.0;
  bool agree = true;
};

struct AgreementReport {
  std::size_t n_segments = 0;
  std::size_t n_disagreements = 0;
  double error_rate = 0.0;
  std::vector<SegmentAgreement> per_segment;  // ordered by segment_id
};

// ---------------------------------------------------------------------------

namespace detail {

struct LagPeak {
  double lag = 0.0;    // refined (fractional) lag in samples
  double value = 0.0;  // normalized correlation at the integer peak
};

/// Normalized cross-correlation of a frame with itself,
/// r(k) = sum x[n]x[n+k] / sqrt(sum_{n<N-k} x[n]^2 * sum_{n>=k} x[n]^2).
/// Lags where one span carries less than `min_balance` of the other's energy
/// (onsets, offsets) are zeroed.
inline std::vector<double> normalized_correlation(std::span<const double> frame, std::size_t max_lag,
                                                  double min_balance, Eigen::FFT<double>& fft) {
  const auto raw = spectral::autocorrelation_fft(frame, max_lag, fft);
  const std::size_t n = frame.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + frame[i] * frame[i];
  std::vector<double> out(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
    const double head = prefix[n - k];
    const double tail = prefix[n] - prefix[k];
    const double denom = std::sqrt(head * tail);
    if (denom <= 0.0 || std::min(head, tail) < min_balance * std::max(head, tail)) continue;
    out[k] = raw[k] / denom;
  }
  return out;
}

/// Running median of width `span` applied within each run of voiced frames;
/// the window is truncated at run edges (lower median for even counts).
inline void median_smooth_voiced(PitchContour& contour, std::size_t span) {
  const std::size_t half = span / 2;
  const std::size_t n = contour.size();
  std::vector<double> smoothed = contour.f0;
  std::vector<double> window;
  std::size_t i = 0;
  while (i < n) {
    if (!contour.voiced[i]) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < n && contour.voiced[end]) ++end;
    for (std::size_t k = i; k < end; ++k) {
      const std::size_t lo = k - std::min(half, k - i);
      const std::size_t hi = std::min(end, k + half + 1);
      window.assign(contour.f0.begin() + static_cast<std::ptrdiff_t>(lo),
                    contour.f0.begin() + static_cast<std::ptrdiff_t>(hi));
      const auto mid = window.begin() + static_cast<std::ptrdiff_t>((window.size() - 1) / 2);
      std::nth_element(window.begin(), mid, window.end());
      smoothed[k] = *mid;
    }
    i = end;
  }
  contour.f0 = std::move(smoothed);
}

}  // namespace detail

inline void validate_pitch_band(double f_min, double f_max, int sample_rate) {
  if (!(f_min > 0.0) || !(f_max <= sample_rate / 2.0)) {
    throw Error(ErrorCode::InvalidArgument, "pitch band must satisfy 0 < f_min < f_max <= sample_rate/2");
  }
  if (!(f_max / f_min >= 1.1)) {
    throw Error(ErrorCode::BandTooNarrow, "f_max/f_min must be at least 1.1");
  }
}

/// Autocorrelation pitch tracker: one (f0, voiced) pair per hop. Each frame's
/// analysis window starts at the hop position and is pulled back inside the
/// buffer near the end so every frame sees `frame_ms` of real signal.
inline PitchContour estimate_pitch(const AudioBuffer& buf, const PitchConfig& cfg) {
  const int sr = buf.sample_rate();
  validate_pitch_band(cfg.f_min, cfg.f_max, sr);
  validate_framing(cfg.frame_ms, cfg.hop_ms, sr);
  const std::size_t frame_len = ms_to_samples(cfg.frame_ms, sr);
  if (buf.size() < frame_len || frame_len < 4) {
    throw Error(ErrorCode::BufferTooShort, "buffer shorter than one " + std::to_string(cfg.frame_ms) + " ms frame");
  }

  const std::size_t lag_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / cfg.f_max)));
  std::size_t lag_max = static_cast<std::size_t>(std::ceil(sr / cfg.f_min));
  // Keep at least a quarter frame of overlap at the longest lag.
  lag_max = std::min(lag_max, frame_len - frame_len / 4 - 2);
  if (lag_max <= lag_min) {
    throw Error(ErrorCode::BufferTooShort, "frame too short for the requested pitch band");
  }

  PitchContour contour;
  contour.hop_ms = cfg.hop_ms;
  contour.sample_rate = sr;
  contour.f_min = cfg.f_min;
  contour.f_max = cfg.f_max;

  const auto samples = buf.samples();
  const std::size_t n_frames = frame_count(samples.size(), cfg.hop_ms, sr);
  contour.f0.assign(n_frames, 0.0);
  contour.voiced.assign(n_frames, false);

  // Copies frame i with its mean removed; returns the mean-square of the
  // weaker half so onsets and offsets that fill only part of the window can
  // be rejected.
  auto load_frame = [&](std::size_t i, std::vector<double>& frame) {
    const std::size_t start = std::min(frame_start(i, cfg.hop_ms, sr), samples.size() - frame_len);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), frame_len, frame.begin());
    const double mean = std::accumulate(frame.begin(), frame.end(), 0.0) / static_cast<double>(frame_len);
    const std::size_t mid = frame_len / 2;
    double first = 0.0;
    double second = 0.0;
    for (std::size_t k = 0; k < frame_len; ++k) {
      frame[k] -= mean;
      (k < mid ? first : second) += frame[k] * frame[k];
    }
    return std::min(first / static_cast<double>(mid), second / static_cast<double>(frame_len - mid));
  };

  std::vector<double> frame(frame_len);
  std::vector<double> powers(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) powers[i] = load_frame(i, frame);
  const double loudest = *std::max_element(powers.begin(), powers.end());
  const double gate = std::max(cfg.silence_power, loudest * std::pow(10.0, cfg.relative_silence_db / 10.0));

  Eigen::FFT<double> fft;
  for (std::size_t i = 0; i < n_frames; ++i) {
    if (powers[i] < gate) continue;
    load_frame(i, frame);

    const auto r = detail::normalized_correlation(frame, lag_max + 1, cfg.min_energy_balance, fft);
    std::vector<detail::LagPeak> peaks;
    double best = 0.0;
    for (std::size_t k = lag_min; k <= lag_max; ++k) {
      if (r[k] >= r[k - 1] && r[k] > r[k + 1] && r[k] > 0.0) {
        const double denom = r[k - 1] - 2.0 * r[k] + r[k + 1];
        const double shift = denom < 0.0 ? 0.5 * (r[k - 1] - r[k + 1]) / denom : 0.0;
        peaks.push_back({static_cast<double>(k) + std::clamp(shift, -0.5, 0.5), r[k]});
        best = std::max(best, r[k]);
      }
    }
    if (peaks.empty() || best < cfg.voicing_threshold) continue;
    const auto chosen = std::find_if(peaks.begin(), peaks.end(),
                                     [&](const detail::LagPeak& p) { return p.value >= cfg.octave_ratio * best; });
    contour.f0[i] = std::clamp(sr / chosen->lag, cfg.f_min, cfg.f_max);
    contour.voiced[i] = true;
  }
  if (cfg.median_span > 1) detail::median_smooth_voiced(contour, cfg.median_span);
  return contour;
}

inline PitchContour estimate_pitch(const AudioBuffer& buf, double f_min, double f_max) {
  PitchConfig cfg;
  cfg.f_min = f_min;
  cfg.f_max = f_max;
  return estimate_pitch(buf, cfg);
}

inline PitchContour estimate_pitch(const AudioBuffer& buf) { return estimate_pitch(buf, PitchConfig{}); }

// ---------------------------------------------------------------------------

inline IntonationLabel classify_intonation(double pvq, double threshold = kDefaultPvqThreshold) {
  if (!(pvq >= 0.0)) throw Error(ErrorCode::InvalidArgument, "pvq must be non-negative");
  if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be positive");
  return pvq >= threshold ? IntonationLabel::Dynamic : IntonationLabel::Monotone;
}

/// Mean and population standard deviation of the voiced frames only.
inline PvqReport compute_pvq(const PitchContour& contour, double threshold = kDefaultPvqThreshold) {
  std::vector<double> values;
  values.reserve(contour.f0.size());
  for (std::size_t i = 0; i < contour.f0.size(); ++i) {
    if (contour.voiced[i]) values.push_back(contour.f0[i]);
  }
  if (values.size() < 2) {
    throw Error(ErrorCode::InsufficientVoicedFrames,
                std::to_string(values.size()) + " voiced frame(s), need at least 2");
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);

  PvqReport report;
  report.mean_f0 = mean;
  report.std_f0 = std::sqrt(ss / n);
  report.pvq = mean > 0.0 ? report.std_f0 / mean : 0.0;
  report.voiced_fraction = n / static_cast<double>(contour.f0.size());
  report.label = classify_intonation(report.pvq, threshold);
  return report;
}

inline double mean_pvq(std::span<const PvqReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "mean_pvq of no reports");
  double sum = 0.0;
  for (const auto& r : reports) sum += r.pvq;
  return sum / static_cast<double>(reports.size());
}

inline double mean_pvq(std::span<const SegmentPvq> reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "mean_pvq of no reports");
  double sum = 0.0;
  for (const auto& r : reports) sum += r.report.pvq;
  return sum / static_cast<double>(reports.size());
}

inline PerceptionRecord make_perception_record(std::string segment_id, std::vector<int> marks) {
  if (marks.empty()) throw Error(ErrorCode::EmptyInput, "segment " + segment_id + " has no marks");
  for (int m : marks) {
    if (m < 1 || m > 3) {
      throw Error(ErrorCode::MarkOutOfRange, "segment " + segment_id + ": mark " + std::to_string(m));
    }
  }
  PerceptionRecord rec;
  rec.segment_id = std::move(segment_id);
  rec.average_mark = static_cast<double>(std::accumulate(marks.begin(), marks.end(), 0)) /
                     static_cast<double>(marks.size());
  rec.marks = std::move(marks);
  return rec;
}

/// A segment disagrees when its pitch variation and its perceived liveliness
/// fall on opposite sides of their boundaries. Values equal to a boundary
/// count as the high side.
inline bool segment_agrees(double pvq, double average_mark, double pvq_boundary, double mark_boundary) {
  return (pvq >= pvq_boundary) == (average_mark >= mark_boundary);
}

inline AgreementReport evaluate_agreement(std::span<const SegmentPvq> reports,
                                          std::span<const PerceptionRecord> labels,
                                          double pvq_boundary = kDefaultPvqThreshold,
                                          double mark_boundary = kDefaultMarkBoundary) {
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no segments to evaluate");
  std::map<std::string, double, std::less<>> marks;
  for (const auto& rec : labels) marks[rec.segment_id] = rec.average_mark;

  AgreementReport out;
  out.per_segment.reserve(reports.size());
  for (const auto& seg : reports) {
    const auto it = marks.find(seg.segment_id);
    if (it == marks.end()) throw Error(ErrorCode::MissingLabel, "no perception label for " + seg.segment_id);
    SegmentAgreement row;
    row.segment_id = seg.segment_id;
    row.pvq = seg.report.pvq;
    row.average_mark = it->second;
    row.agree = segment_agrees(row.pvq, row.average_mark, pvq_boundary, mark_boundary);
    if (!row.agree) ++out.n_disagreements;
    out.per_segment.push_back(std::move(row));
  }
  std::sort(out.per_segment.begin(), out.per_segment.end(),
            [](const SegmentAgreement& a, const SegmentAgreement& b) { return a.segment_id < b.segment_id; });
  out.n_segments = reports.size();
  out.error_rate = static_cast<double>(out.n_disagreements) / static_cast<double>(out.n_segments);
  return out;
}

// ---------------------------------------------------------------------------
// CSV export

inline const std::vector<std::string>& intonation_csv_header() {
  static const std::vector<std::string> header = {"segment_id", "pvq",         "mean_f0", "std_f0",
                                                  "voiced_fraction", "average_mark", "label", "agree"};
  return header;
}

/// Per-segment results ordered by segment_id. The mark and agreement columns
/// stay empty when no agreement report is supplied.
inline void write_intonation_csv(std::ostream& out, std::span<const SegmentPvq> reports,
                                 const AgreementReport* agreement = nullptr) {
  std::vector<const SegmentPvq*> order;
  for (const auto& r : reports) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const SegmentPvq* a, const SegmentPvq* b) { return a->segment_id < b->segment_id; });
  std::map<std::string, const SegmentAgreement*, std::less<>> rows;
  if (agreement) {
    for (const auto& s : agreement->per_segment) rows[s.segment_id] = &s;
  }
  out << csv::join(intonation_csv_header()) << '\n';
  for (const SegmentPvq* seg : order) {
    const auto& r = seg->report;
    std::vector<std::string> fields = {seg->segment_id,
                                       csv::format_fixed(r.pvq, 6),
                                       csv::format_fixed(r.mean_f0, 3),
                                       csv::format_fixed(r.std_f0, 3),
                                       csv::format_fixed(r.voiced_fraction, 4),
                                       "",
                                       std::string(to_string(r.label)),
                                       ""};
    if (const auto it = rows.find(seg->segment_id); it != rows.end()) {
      fields[5] = csv::format_fixed(it->second->average_mark, 4);
      fields[7] = it->second->agree ? "true" : "false";
    }
    out << csv::join(fields) << '\n';
  }
}

struct IntonationRow {
  std::string segment_id;
  PvqReport report;
  std::optional<double> average_mark;
};

/// Reads a file produced by write_intonation_csv.
inline std::vector<IntonationRow> read_intonation_csv(std::istream& in, const std::string& name) {
  const auto table = csv::parse(in, name);
  csv::require_header(table, intonation_csv_header(), name);
  std::vector<IntonationRow> rows;
  for (const auto& row : table.rows) {
    const std::string where = name + ":" + std::to_string(row.line);
    if (row.fields.size() != intonation_csv_header().size()) {
      throw Error(ErrorCode::MalformedRow, where + ": expected " + std::to_string(intonation_csv_header().size()) +
                                               " fields, found " + std::to_string(row.fields.size()));
    }
    IntonationRow r;
    r.segment_id = row.fields[0];
    r.report.pvq = csv::parse_double(row.fields[1], where);
    r.report.mean_f0 = csv::parse_double(row.fields[2], where);
    r.report.std_f0 = csv::parse_double(row.fields[3], where);
    r.report.voiced_fraction = csv::parse_double(row.fields[4], where);
    if (!row.fields[5].empty()) r.average_mark = csv::parse_double(row.fields[5], where);
    if (row.fields[6] == "Monotone") {
      r.report.label = IntonationLabel::Monotone;
    } else if (row.fields[6] == "Dynamic") {
      r.report.label = IntonationLabel::Dynamic;
    } else {
      throw Error(ErrorCode::MalformedRow, where + ": unknown label '" + row.fields[6] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace prosody
