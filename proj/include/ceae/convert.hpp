#pragma once

#include "ceae/dsp.hpp"
#include "ceae/model.hpp"

#include <optional>
#include <string>

namespace ceae {

struct ConversionRequest {
  std::optional<AudioClip> source_audio;
  std::optional<MelSpectrogram> source_mel;
  std::string target_speaker;
  bool emit_audio = false;
  bool chunked = false;
};

struct ConversionOutput {
  MelSpectrogram mel;
  std::optional<AudioClip> audio;
};

/// Inference-mode conversion: E_c then the target speaker's decoder. The
/// input is edge-padded to a stride multiple and the output trimmed back, so
/// the shape is preserved for any T.
MelSpectrogram convert_mel(const MelSpectrogram& mel, MultiHeadModel& model,
                           const std::string& target, bool chunked = false);

/// Full pipeline: audio (or mel) in, converted mel out, optional Griffin-Lim
/// audio peak-normalized to 0.9.
ConversionOutput convert_utterance(const ConversionRequest& request, MultiHeadModel& model,
                                   const FrontendConfig& cfg = FrontendConfig{});

}  // namespace ceae
