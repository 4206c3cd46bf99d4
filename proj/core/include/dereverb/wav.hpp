#pragma once

#include <string>

#include "dereverb/types.hpp"

namespace dereverb::wav {

enum class SampleFormat { float32, pcm16 };

struct ReadOptions {
  bool downmix = false;  // average channels instead of rejecting multichannel files
};

/// Reads RIFF/WAVE files holding PCM16 or IEEE float32 samples (plain or
/// WAVE_FORMAT_EXTENSIBLE). PCM16 maps to [-1, 1). Throws ConfigError for a
/// missing file, an unsupported encoding, or more than one channel without
/// `downmix`.
Waveform read(const std::string& path, const ReadOptions& options = {});

/// Writes a mono file. PCM16 output is clipped to [-1, 1).
void write(const std::string& path, const Waveform& x, SampleFormat format = SampleFormat::float32);

}  // namespace dereverb::wav
