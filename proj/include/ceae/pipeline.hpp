#pragma once

#include "ceae/checkpoint.hpp"
#include "ceae/probes.hpp"
#include "ceae/runconfig.hpp"
#include "ceae/synth.hpp"

#include <string>
#include <vector>

namespace ceae {

struct CorpusResult {
  CorpusManifest manifest;
  ContentDominationReport domination;
};

/// Generates the synthetic corpus under out_dir and measures the
/// content-domination ratio.
CorpusResult run_make_corpus(const RunConfig& cfg, const std::string& out_dir);

struct TrainResult {
  std::vector<std::string> checkpoints;
};

/// Runs the requested stage(s). stage is "1", "2", "3" or "all"; stage 3
/// needs new_corpus_dir. Missing prerequisite checkpoints raise ValueError
/// naming the missing stage.
TrainResult run_training(const RunConfig& cfg, const std::string& corpus_dir,
                         const std::string& out_dir, const std::string& stage,
                         const std::string& new_corpus_dir = "",
                         const std::string& stage3_init = "fresh");

struct ConvertResult {
  std::vector<std::string> outputs;
};

ConvertResult run_convert(const RunConfig& cfg, const std::string& checkpoint_path,
                          const std::string& input_path, const std::string& target,
                          bool emit_audio, const std::string& out_dir, bool chunked = false);

struct EvaluateResult {
  std::string report_path;
  std::string report_json;
};

EvaluateResult run_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& corpus_dir, const std::string& compare_path,
                            const std::string& out_path);

}  // namespace ceae
