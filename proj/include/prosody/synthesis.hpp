#pragma once

// Deterministic synthetic signals: sines, pulse-excited all-pole vowels and
// intonation fixtures with controllable pitch movement.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prosody/audio_io.hpp"

namespace prosody::synth {

struct Resonance {
  double frequency = 0.0;  // Hz
  double bandwidth = 0.0;  // Hz
};

inline std::size_t sample_count(double duration_s, int sample_rate) {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

/// Scales `x` so its largest magnitude equals `peak`; an all-zero signal is returned unchanged.
inline std::vector<double> normalize_peak(std::vector<double> x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (double& v : x) v *= peak / m;
  }
  return x;
}

inline AudioBuffer sine(double frequency, int sample_rate, double duration_s, double amplitude = 0.5,
                        double phase = 0.0) {
  std::vector<double> x(sample_count(duration_s, sample_rate));
  for (std::size_t n = 0; n < x.size(); ++n) {
    x[n] = amplitude * std::sin(2.0 * std::numbers::pi * frequency * static_cast<double>(n) / sample_rate + phase);
  }
  return AudioBuffer(std::move(x), sample_rate);
}

inline AudioBuffer silence(int sample_rate, double duration_s) {
  return AudioBuffer(std::vector<double>(sample_count(duration_s, sample_rate), 0.0), sample_rate);
}

inline std::vector<double> white_noise(std::size_t n, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

/// Unit impulses every 1/f0 seconds, placed at the nearest sample.
inline std::vector<double> pulse_train(double f0, int sample_rate, std::size_t n) {
  std::vector<double> x(n, 0.0);
  const double period = sample_rate / f0;
  for (double t = 0.0; t < static_cast<double>(n); t += period) {
    const auto idx = static_cast<std::size_t>(std::llround(t));
    if (idx < n) x[idx] = 1.0;
  }
  return x;
}

/// Cascade of two-pole resonators, one per entry of `resonances`.
inline std::vector<double> all_pole_filter(std::span<const double> x, std::span<const Resonance> resonances,
                                           int sample_rate) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& res : resonances) {
    const double r = std::exp(-std::numbers::pi * res.bandwidth / sample_rate);
    const double theta = 2.0 * std::numbers::pi * res.frequency / sample_rate;
    const double a1 = 2.0 * r * std::cos(theta);
    const double a2 = -r * r;
    double y1 = 0.0;
    double y2 = 0.0;
    for (double& v : y) {
      const double out = v + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = out;
      v = out;
    }
  }
  return y;
}

/// One-pole lowpass y[n] = x[n] + coeff * y[n-1]; with coeff 0.97 this is the
/// exact inverse of the analysis pre-emphasis.
inline std::vector<double> spectral_tilt(std::span<const double> x, double coeff) {
  std::vector<double> y(x.size());
  double prev = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    prev = x[n] + coeff * prev;
    y[n] = prev;
  }
  return y;
}

/// Pulse-train driven all-pole vowel, peak-normalized to 0.8. The source
/// carries the usual -6 dB/octave tilt (glottal roll-off net of lip
/// radiation) so a pre-emphasized analysis sees the bare vocal-tract envelope.
inline AudioBuffer vowel(std::span<const Resonance> formants, double f0, int sample_rate, double duration_s,
                         double source_tilt = 0.97) {
  const auto pulses = pulse_train(f0, sample_rate, sample_count(duration_s, sample_rate));
  const auto source = spectral_tilt(pulses, source_tilt);
  return AudioBuffer(normalize_peak(all_pole_filter(source, formants, sample_rate), 0.8), sample_rate);
}

/// Harmonic voice source whose instantaneous f0 follows `f0_at(t)`; harmonic
/// k has amplitude 1/k and harmonics stop below 0.45 * sample_rate.
inline std::vector<double> harmonic_voice(const std::function<double(double)>& f0_at, int sample_rate,
                                          std::size_t n, int max_harmonics = 20) {
  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = f0_at(t);
    double v = 0.0;
    for (int k = 1; k <= max_harmonics && k * f0 < 0.45 * sample_rate; ++k) v += std::sin(k * phase) / k;
    x[i] = v;
    phase += 2.0 * std::numbers::pi * f0 / sample_rate;
    if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
  }
  return x;
}

enum class IntonationStyle { Flat, Lively };

/// Relative f0 deviation over time for the two fixture styles: a 1% vibrato
/// for Flat, and a rounded square-wave swing of +/-20% for Lively.
inline double intonation_deviation(IntonationStyle style, double t) {
  if (style == IntonationStyle::Flat) {
    return 0.01 * std::sin(2.0 * std::numbers::pi * 5.0 * t);
  }
  constexpr double kSharpness = 3.0;
  return 0.20 * std::tanh(kSharpness * std::sin(2.0 * std::numbers::pi * 0.8 * t)) / std::tanh(kSharpness);
}

/// Syllable-like speech stand-in: 220 ms voiced vowels separated by 60 ms
/// pauses, f0 = base * (1 + deviation(t)), shaped by the formants of /a/.
inline AudioBuffer intonation_fixture(IntonationStyle style, int sample_rate, double duration_s,
                                      double base_f0 = 120.0) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  auto voice = harmonic_voice([&](double t) { return base_f0 * (1.0 + intonation_deviation(style, t)); },
                              sample_rate, n);
  const Resonance formants[] = {{811.0, 90.0}, {1258.0, 110.0}, {2640.0, 160.0}};
  voice = all_pole_filter(voice, formants, sample_rate);

  const double syllable = 0.220;
  const double pause = 0.060;
  const double ramp = 0.015;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::fmod(static_cast<double>(i) / sample_rate, syllable + pause);
    double env = 0.0;
    if (t < syllable) {
      env = std::min({1.0, t / ramp, (syllable - t) / ramp});
    }
    voice[i] *= env;
  }
  return AudioBuffer(normalize_peak(std::move(voice), 0.8), sample_rate);
}

// ---------------------------------------------------------------------------
// Synthetic phoneme corpora

enum class CorpusKind { Separable, TwoPhase };

/// One synthetic phoneme recording; `speaker_group` is "male" or "female".
struct PhonemeClip {
  std::string segment_id;
  std::string label;
  std::string speaker_group;
  AudioBuffer audio;
};

struct VowelTarget {
  const char* label;
  std::array<double, 3> formants;
};

inline constexpr std::array<VowelTarget, 3> kCorpusVowels = {{
    {"a", {800.0, 1250.0, 2650.0}},
    {"i", {300.0, 2300.0, 3000.0}},
    {"u", {320.0, 800.0, 2300.0}},
}};

namespace detail {

inline std::vector<Resonance> jittered(const std::array<double, 3>& f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.06, 0.06);
  std::vector<Resonance> out;
  for (double hz : f) {
    const double fr = hz * (1.0 + jitter(rng));
    out.push_back({fr, 60.0 + 0.05 * fr});
  }
  return out;
}

}  // namespace detail

/// Both speaker groups draw from the same distribution (f0 100-140 Hz,
/// +/-6% formant jitter). Separable: one steady vowel per label. TwoPhase:
/// labels "xy" glide from vowel x in the first half to vowel y in the
/// second, with both orders of every vowel pair present.
inline std::vector<PhonemeClip> phoneme_corpus(CorpusKind kind, int sample_rate, std::size_t per_label_per_group,
                                               std::uint64_t seed, double duration_s = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f0_dist(100.0, 140.0);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> labels;
  if (kind == CorpusKind::Separable) {
    for (std::size_t v = 0; v < kCorpusVowels.size(); ++v) labels.push_back({kCorpusVowels[v].label, {v}});
  } else {
    for (std::size_t a = 0; a < kCorpusVowels.size(); ++a) {
      for (std::size_t b = 0; b < kCorpusVowels.size(); ++b) {
        if (a != b) labels.push_back({std::string(kCorpusVowels[a].label) + kCorpusVowels[b].label, {a, b}});
      }
    }
  }

  std::vector<PhonemeClip> clips;
  for (const char* group : {"female", "male"}) {
    for (const auto& [label, parts] : labels) {
      for (std::size_t k = 0; k < per_label_per_group; ++k) {
        const double f0 = f0_dist(rng);
        const double part_s = duration_s / static_cast<double>(parts.size());
        std::vector<double> x;
        for (std::size_t v : parts) {
          const auto formants = detail::jittered(kCorpusVowels[v].formants, rng);
          const auto piece = vowel(formants, f0, sample_rate, part_s);
          x.insert(x.end(), piece.samples().begin(), piece.samples().end());
        }
        char id[64];
        std::snprintf(id, sizeof id, "%s_%s_%02zu", group, label.c_str(), k + 1);
        clips.push_back({id, label, group, AudioBuffer(normalize_peak(std::move(x), 0.8), sample_rate)});
      }
    }
  }
  return clips;
}

}  // namespace prosody::synth
