#pragma once

#include "prosody/audio_io.hpp"
#include "prosody/corpus.hpp"
#include "prosody/csv.hpp"
#include "prosody/error.hpp"
#include "prosody/feature_extraction.hpp"
#include "prosody/formant_analysis.hpp"
#include "prosody/hmm.hpp"
#include "prosody/pitch_analysis.hpp"
#include "prosody/speaker.hpp"
#include "prosody/spectral.hpp"
#include "prosody/synthesis.hpp"
