#pragma once

#include "ceae/dsp.hpp"
#include "ceae/training.hpp"

#include <string>

namespace ceae {

/// Declarative configuration covering every module, parsed from a sectioned
/// key=value file. Every field has a default; unknown sections or keys are
/// rejected. Flag overrides use the dotted form "section.key=value".
struct RunConfig {
  FrontendConfig frontend;

  struct CorpusSpec {
    int speakers = 4;
    int utterances_per_speaker = 100;
    uint64_t base_seed = 7;
    double min_utterance_ms = 2000.0;
    int probe_pairs = 200;
  } corpus;

  nn::EncoderConfig encoder = nn::EncoderConfig::desk();
  nn::DecoderConfig decoder = nn::DecoderConfig::desk();
  TrainConfig train;

  struct EvalSpec {
    uint64_t seed = 99;
    int seeds = 1;
    int residual_pairs = 200;
    int conversions_per_speaker = 10;
    double holdout_fraction = 0.2;
  } eval;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");

  /// Applies one "section.key=value" override (flags win over the file).
  void apply_override(const std::string& assignment);

  void validate() const;
  std::string to_json() const;  // provenance embedded in artifacts
};

}  // namespace ceae
