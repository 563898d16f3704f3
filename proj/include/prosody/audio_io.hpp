#pragma once

// WAV decoding, framing, pre-emphasis and windowing shared by all analysis
// front-ends.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "prosody/error.hpp"

namespace prosody {

/// Mono PCM samples normalized to [-1, 1].
class AudioBuffer {
 public:
  AudioBuffer() = default;

  AudioBuffer(std::vector<double> samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (sample_rate_ <= 0) {
      throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
    }
    for (double s : samples_) {
      if (!(s >= -1.0 && s <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "sample outside [-1, 1]");
      }
    }
  }

  std::span<const double> samples() const noexcept { return samples_; }
  int sample_rate() const noexcept { return sample_rate_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  double duration_s() const noexcept {
    return sample_rate_ > 0 ? static_cast<double>(samples_.size()) / sample_rate_ : 0.0;
  }

  /// Copy of `count` samples starting at `begin`, clipped to the buffer end.
  AudioBuffer slice(std::size_t begin, std::size_t count) const {
    begin = std::min(begin, samples_.size());
    count = std::min(count, samples_.size() - begin);
    std::vector<double> part(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                             samples_.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return AudioBuffer(std::move(part), sample_rate_);
  }

 private:
  std::vector<double> samples_;
  int sample_rate_ = 1;
};

// ---------------------------------------------------------------------------
// WAV container

enum class WavEncoding { Pcm16, Float32 };

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Decodes an in-memory RIFF/WAVE image. `name` only labels error messages.
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>") {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::MalformedContainer, name + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16) {
        throw Error(ErrorCode::MalformedContainer, name + ": truncated fmt chunk");
      }
      const std::uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == detail::kFormatExtensible) {
        if (chunk_size < 40 || avail < 40) {
          throw Error(ErrorCode::MalformedContainer, name + ": truncated extensible fmt chunk");
        }
        format = read_u16(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      // Streaming writers may leave the size unset; take what is present.
      data = bytes.subspan(body, std::min<std::size_t>(chunk_size, avail));
      have_data = true;
    }
    if (have_data && have_fmt) break;
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!have_fmt) throw Error(ErrorCode::MalformedContainer, name + ": missing fmt chunk");
  if (!have_data) throw Error(ErrorCode::MalformedContainer, name + ": missing data chunk");
  if (rate == 0) throw Error(ErrorCode::MalformedContainer, name + ": zero sample rate");

  const bool pcm16 = format == detail::kFormatPcm && bits == 16;
  const bool float32 = format == detail::kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorCode::UnsupportedEncoding,
                name + ": format tag " + std::to_string(format) + " with " + std::to_string(bits) +
                    " bits per sample");
  }
  if (channels < 1 || channels > 2) {
    throw Error(ErrorCode::UnsupportedEncoding,
                name + ": " + std::to_string(channels) + " channels (1 or 2 supported)");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n_frames = data.size() / frame_bytes;
  if (n_frames == 0) throw Error(ErrorCode::EmptyAudio, name + ": no samples");

  auto sample_at = [&](std::size_t offset) -> double {
    const std::uint8_t* p = data.data() + offset;
    if (pcm16) {
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    }
    const std::uint32_t raw = read_u32(p);
    float f;
    std::memcpy(&f, &raw, sizeof(f));
    if (std::isnan(f)) return 0.0;
    return std::clamp(static_cast<double>(f), -1.0, 1.0);
  };

  std::vector<double> samples(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    const std::size_t off = i * frame_bytes;
    if (channels == 1) {
      samples[i] = sample_at(off);
    } else {
      samples[i] = 0.5 * (sample_at(off) + sample_at(off + bytes_per_sample));
    }
  }
  return AudioBuffer(std::move(samples), static_cast<int>(rate));
}

inline AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

/// Encodes interleaved channels (all the same length) as a canonical WAV image.
inline std::vector<std::uint8_t> encode_wav(std::span<const std::vector<double>> channels, int sample_rate,
                                            WavEncoding encoding = WavEncoding::Pcm16) {
  if (channels.empty() || channels.size() > 2) {
    throw Error(ErrorCode::InvalidArgument, "encode_wav supports 1 or 2 channels");
  }
  const std::size_t n = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != n) throw Error(ErrorCode::InvalidArgument, "channel lengths differ");
  }
  const std::uint16_t n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(n_ch * bits / 8);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * block);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_bytes);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, encoding == WavEncoding::Pcm16 ? detail::kFormatPcm : detail::kFormatFloat);
  detail::put_u16(out, n_ch);
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate) * block);
  detail::put_u16(out, block);
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_bytes);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : channels) {
      if (encoding == WavEncoding::Pcm16) {
        const long q = std::clamp(std::lround(ch[i] * 32768.0), -32768L, 32767L);
        detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        const float f = static_cast<float>(ch[i]);
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof(raw));
        detail::put_u32(out, raw);
      }
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, std::span<const std::vector<double>> channels,
                      int sample_rate, WavEncoding encoding = WavEncoding::Pcm16) {
  const auto bytes = encode_wav(channels, sample_rate, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_wav(const std::filesystem::path& path, const AudioBuffer& buf,
                      WavEncoding encoding = WavEncoding::Pcm16) {
  const std::vector<double> mono(buf.samples().begin(), buf.samples().end());
  write_wav(path, std::span<const std::vector<double>>(&mono, 1), buf.sample_rate(), encoding);
}

// ---------------------------------------------------------------------------
// Framing

/// Start sample of frame `index` on a grid of `hop_ms`. Computed per frame so a
/// non-integral hop (7.5 ms at 44.1 kHz is 330.75 samples) never drifts.
inline std::size_t frame_start(std::size_t index, double hop_ms, int sample_rate) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(index) * hop_ms * sample_rate / 1000.0));
}

inline std::size_t ms_to_samples(double ms, int sample_rate) {
  return static_cast<std::size_t>(std::llround(ms * sample_rate / 1000.0));
}

/// Number of frames whose start falls inside a buffer of `n_samples`.
inline std::size_t frame_count(std::size_t n_samples, double hop_ms, int sample_rate) {
  const double hop = hop_ms * sample_rate / 1000.0;
  auto count = static_cast<std::size_t>(std::ceil(static_cast<double>(n_samples) / hop));
  while (count > 1 && frame_start(count - 1, hop_ms, sample_rate) >= n_samples) --count;
  while (frame_start(count, hop_ms, sample_rate) < n_samples) ++count;
  return std::max<std::size_t>(count, 1);
}

struct FrameSequence {
  std::vector<std::vector<double>> frames;
  std::vector<std::size_t> starts;
  std::size_t frame_len = 0;
  std::size_t hop = 0;  // nominal hop, round(hop_ms * sr / 1000)
  int sample_rate = 0;

  std::size_t size() const noexcept { return frames.size(); }
};

inline void validate_framing(double frame_ms, double hop_ms, int sample_rate) {
  if (!(hop_ms > 0.0) || !(frame_ms >= hop_ms)) {
    throw Error(ErrorCode::InvalidFraming, "need frame_ms >= hop_ms > 0");
  }
  if (ms_to_samples(hop_ms, sample_rate) == 0) {
    throw Error(ErrorCode::InvalidFraming, "hop shorter than one sample");
  }
}

/// Splits `samples` into frames of `frame_ms` every `hop_ms`; trailing frames
/// are zero-padded to full length.
inline FrameSequence frame_signal(std::span<const double> samples, int sample_rate, double frame_ms,
                                  double hop_ms) {
  validate_framing(frame_ms, hop_ms, sample_rate);
  if (samples.empty()) throw Error(ErrorCode::EmptyAudio, "cannot frame an empty buffer");

  FrameSequence seq;
  seq.frame_len = ms_to_samples(frame_ms, sample_rate);
  seq.hop = ms_to_samples(hop_ms, sample_rate);
  seq.sample_rate = sample_rate;
  const std::size_t n = frame_count(samples.size(), hop_ms, sample_rate);
  seq.frames.reserve(n);
  seq.starts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = frame_start(i, hop_ms, sample_rate);
    std::vector<double> frame(seq.frame_len, 0.0);
    const std::size_t avail = std::min(seq.frame_len, samples.size() - start);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), avail, frame.begin());
    seq.frames.push_back(std::move(frame));
    seq.starts.push_back(start);
  }
  return seq;
}

inline FrameSequence frame_signal(const AudioBuffer& buf, double frame_ms, double hop_ms) {
  return frame_signal(buf.samples(), buf.sample_rate(), frame_ms, hop_ms);
}

// ---------------------------------------------------------------------------
// Pre-emphasis and windows

/// y[n] = x[n] - alpha * x[n-1], y[0] = x[0]. The result is a plain signal
/// since high-frequency content can push it past full scale.
inline std::vector<double> pre_emphasize(std::span<const double> x, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "pre-emphasis coefficient must lie in [0, 1)");
  }
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) y[n] = x[n] - alpha * x[n - 1];
  return y;
}

inline std::vector<double> pre_emphasize(const AudioBuffer& buf, double alpha) {
  return pre_emphasize(buf.samples(), alpha);
}

enum class WindowKind { Rectangular, Hamming, Hann };

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2 || kind == WindowKind::Rectangular) return w;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    w[i] = kind == WindowKind::Hamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
  }
  return w;
}

inline std::vector<double> apply_window(std::span<const double> frame, WindowKind kind) {
  if (frame.empty()) throw Error(ErrorCode::InvalidArgument, "cannot window an empty frame");
  const auto w = make_window(kind, frame.size());
  std::vector<double> out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = frame[i] * w[i];
  return out;
}

}  // namespace prosody
