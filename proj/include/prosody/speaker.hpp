#pragma once

#include <string>
#include <string_view>

#include "prosody/error.hpp"

namespace prosody {

enum class SpeakerGroup { Male, Female };

constexpr std::string_view to_string(SpeakerGroup g) { return g == SpeakerGroup::Male ? "male" : "female"; }

inline SpeakerGroup parse_speaker_group(std::string_view text) {
  if (text == "male") return SpeakerGroup::Male;
  if (text == "female") return SpeakerGroup::Female;
  throw Error(ErrorCode::InvalidArgument, "speaker group must be 'male' or 'female', got '" + std::string(text) + "'");
}

}  // namespace prosody
