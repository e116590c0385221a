#include "ceae/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

namespace fs = std::filesystem;

namespace ceae {

const SpeakerData& MelDataset::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.id == id) return s;
  throw ValueError("dataset has no speaker " + id);
}

std::vector<std::string> MelDataset::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : speakers) ids.push_back(s.id);
  return ids;
}

MelDataset MelDataset::subset(const std::vector<std::string>& ids) const {
  MelDataset out;
  out.segment_frames = segment_frames;
  for (const auto& id : ids) out.speakers.push_back(speaker(id));
  std::sort(out.speakers.begin(), out.speakers.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

MelDataset load_dataset(const CorpusManifest& manifest, const FrontendConfig& cfg,
                        double holdout_fraction) {
  cfg.validate();
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout fraction out of [0, 1)");
  const MelFilterbank fb = make_mel_filterbank(cfg.n_mels, cfg.fft_size, cfg.fmin, cfg.fmax);

  std::map<std::string, std::vector<const ManifestEntry*>> by_speaker;
  for (const auto& e : manifest.entries) by_speaker[e.speaker_id].push_back(&e);

  MelDataset ds;
  ds.segment_frames = cfg.segment_samples / cfg.hop;
  for (const auto& [id, entries] : by_speaker) {
    SpeakerData spk;
    spk.id = id;
    const size_t n = entries.size();
    const size_t n_train = n - static_cast<size_t>(std::floor(holdout_fraction * n));
    for (size_t i = 0; i < n; ++i) {
      const AudioClip clip = load_wav((fs::path(manifest.root) / entries[i]->path).string());
      const bool heldout = i >= n_train;
      for (const auto& seg : segment(clip, cfg.segment_samples)) {
        MelSpectrogram mel = mel_spectrogram(seg, fb, cfg);
        (heldout ? spk.heldout_segments : spk.train_segments).push_back(std::move(mel.values));
      }
      if (heldout) spk.heldout_full.push_back(mel_spectrogram(clip, fb, cfg).values);
    }
    require(!spk.train_segments.empty(), "speaker " + id + " has no full training segment");
    ds.speakers.push_back(std::move(spk));
  }
  std::sort(ds.speakers.begin(), ds.speakers.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return ds;
}

}  // namespace ceae
