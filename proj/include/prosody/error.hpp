#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prosody {

enum class ErrorCode {
  // audio_io
  MalformedContainer,
  UnsupportedEncoding,
  EmptyAudio,
  InvalidFraming,
  // pitch_analysis
  BandTooNarrow,
  BufferTooShort,
  InsufficientVoicedFrames,
  MissingLabel,
  // formant_analysis
  NoResonancesFound,
  SegmentTooShort,
  UnknownVowel,
  // hmm / feature_extraction
  SampleTooShort,
  EmptyObservation,
  DimensionMismatch,
  EmptyModelSet,
  InsufficientData,
  MalformedModel,
  // corpus
  DuplicateId,
  MissingFile,
  MalformedRow,
  MarkOutOfRange,
  UnknownSegment,
  EmptyGroup,
  // shared
  EmptyInput,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedContainer: return "MalformedContainer";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::InvalidFraming: return "InvalidFraming";
    case ErrorCode::BandTooNarrow: return "BandTooNarrow";
    case ErrorCode::BufferTooShort: return "BufferTooShort";
    case ErrorCode::InsufficientVoicedFrames: return "InsufficientVoicedFrames";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::NoResonancesFound: return "NoResonancesFound";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::UnknownVowel: return "UnknownVowel";
    case ErrorCode::SampleTooShort: return "SampleTooShort";
    case ErrorCode::EmptyObservation: return "EmptyObservation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyModelSet: return "EmptyModelSet";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MarkOutOfRange: return "MarkOutOfRange";
    case ErrorCode::UnknownSegment: return "UnknownSegment";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Errors caused by the data handed in (files, manifests, labels, flags) as
/// opposed to an analysis that could not produce a result.
constexpr bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::BandTooNarrow:
    case ErrorCode::BufferTooShort:
    case ErrorCode::InsufficientVoicedFrames:
    case ErrorCode::NoResonancesFound:
    case ErrorCode::SegmentTooShort:
    case ErrorCode::EmptyObservation:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prosody
