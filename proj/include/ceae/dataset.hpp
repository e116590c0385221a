#pragma once

#include "ceae/dsp.hpp"
#include "ceae/synth.hpp"

#include <string>
#include <vector>

namespace ceae {

/// Per-speaker mel material: fixed-length training segments plus held-out
/// segments and full-utterance mels for evaluation.
struct SpeakerData {
  std::string id;
  std::vector<Mat> train_segments;
  std::vector<Mat> heldout_segments;
  std::vector<Mat> heldout_full;

  const Mat& train_segment(size_t i) const { return train_segments.at(i); }
};

struct MelDataset {
  std::vector<SpeakerData> speakers;  // sorted by id
  int segment_frames = 128;

  const SpeakerData& speaker(const std::string& id) const;
  std::vector<std::string> speaker_ids() const;
  MelDataset subset(const std::vector<std::string>& ids) const;
};

/// Loads every manifest entry, splits utterances 80/20 (by index, per
/// speaker) into train/held-out, cuts 1.6 s segments and converts them to
/// 80x128 mels.
MelDataset load_dataset(const CorpusManifest& manifest, const FrontendConfig& cfg,
                        double holdout_fraction = 0.2);

}  // namespace ceae
