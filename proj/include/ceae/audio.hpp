#pragma once

#include "ceae/common.hpp"

#include <string>
#include <vector>

namespace ceae {

/// Mono 16 kHz audio, amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Reads a mono PCM16 little-endian WAV at 16 kHz. Samples are scaled to
/// [-1, 1) by dividing by 32768. Anything else is rejected with a
/// diagnostic naming the offending property.
AudioClip load_wav(const std::string& path);

/// Writes a mono PCM16 WAV at 16 kHz. Values are clamped to [-1, 1].
void write_wav(const std::string& path, const AudioClip& clip);

/// Parses WAV bytes (same contract as load_wav); exposed for tests.
AudioClip parse_wav_bytes(const std::string& bytes, const std::string& origin = "<bytes>");

/// Encodes a clip as WAV bytes.
std::string encode_wav_bytes(const AudioClip& clip);

/// Splits a clip into consecutive non-overlapping segments of exactly
/// seg_samples; a trailing remainder is dropped.
std::vector<AudioClip> segment(const AudioClip& clip, size_t seg_samples = 25600);

inline constexpr size_t kSegmentSamples = 25600;  // 1.6 s at 16 kHz

}  // namespace ceae
