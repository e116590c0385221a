#pragma once

#include "ceae/audio.hpp"
#include "ceae/dsp.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ceae {

/// Who is speaking: pitch, vocal-tract length proxy, and source slope.
struct SpeakerFactor {
  std::string speaker_id;
  double f0_base = 120.0;       // Hz, [90, 260]
  double formant_scale = 1.0;   // [0.8, 1.25]
  double spectral_tilt = -3.0;  // dB/octave, [-6, 0]

  void validate() const;
};

/// What is being said: a sequence of discrete units with durations.
struct ContentUnit {
  int unit_id = 0;      // [0, 31]
  double duration_ms = 120.0;  // [80, 240]
};

struct ContentFactor {
  std::vector<ContentUnit> units;

  double total_ms() const;
  void validate(bool training_length = false) const;
};

struct FormantTriple {
  double f1, f2, f3;
};

inline constexpr int kNumUnits = 32;

/// Fixed canonical formant triple for a unit, F1 in [300,900], F2 in
/// [900,2500]. Speaker variation only scales these.
FormantTriple canonical_formants(int unit_id);

/// Deterministic source-filter synthesis: jittered glottal pulse train plus
/// aspiration noise, filtered per unit by formant resonators scaled by the
/// speaker's formant_scale, spectral tilt applied, 10 ms linear cross-fades
/// at unit boundaries. Bit-identical for equal (s, w, seed).
AudioClip generate_utterance(const SpeakerFactor& s, const ContentFactor& w, uint64_t seed);

/// Samples a content factor (unit ids uniform over [0,31], durations uniform
/// over [80,240] ms) until the total duration reaches min_ms.
ContentFactor sample_content(Rng& rng, double min_ms = 2000.0);

// --- corpus ----------------------------------------------------------------

struct ManifestEntry {
  std::string path;  // relative to the corpus directory
  std::string speaker_id;
  ContentFactor content;
  uint64_t seed = 0;
};

struct CorpusManifest {
  std::string root;
  std::vector<SpeakerFactor> speakers;
  std::vector<ManifestEntry> entries;

  const SpeakerFactor& speaker(const std::string& id) const;
  std::vector<std::string> speaker_ids() const;
};

/// Writes wavs + manifest.tsv + speakers.json under out_dir. Entries are
/// ordered by speaker_id then utterance index. Content factors are drawn
/// from the same distribution for every speaker.
CorpusManifest make_corpus(const std::vector<SpeakerFactor>& speakers, int utts_per_speaker,
                           uint64_t base_seed, const std::string& out_dir,
                           double min_utterance_ms = 2000.0);

CorpusManifest load_manifest(const std::string& corpus_dir);

/// The 4-speaker (2 low-f0, 2 high-f0) starter set; n in [1, 4] takes a
/// prefix ordered low, high, low, high so n=2 is the cross-gender analog.
std::vector<SpeakerFactor> default_speakers(int n = 4);

std::string content_to_json(const ContentFactor& w);
ContentFactor content_from_json(const std::string& json_text);

// --- corpus probes -----------------------------------------------------------

struct ContentDominationReport {
  double same_word_cross_speaker = 0.0;
  double cross_word_same_speaker = 0.0;  // cross-content comparator mean
  double ratio = 0.0;
};

struct DominationProbe {
  double same_word = 0.0;   // d(f(s1,w0), f(s2,w0))
  double cross_word = 0.0;  // mean of d(f(s1,w0), f(s2,w)) and d(f(s2,w0), f(s1,w))
};

/// One probe quadruple rendered with a shared seed. With w == w0 the two
/// distances coincide exactly.
DominationProbe domination_probe(const SpeakerFactor& s1, const SpeakerFactor& s2,
                                 const ContentFactor& w0, const ContentFactor& w, uint64_t seed);

/// Renders fresh probe quadruples (s1,w0) (s2,w0) (s1,w) (s2,w) with a shared
/// per-probe seed and reports mean mel distances for the matched-content pair
/// versus the mismatched-content pairs. ratio < 1 means speaker variation is
/// the smaller term, the premise the conversion model relies on.
ContentDominationReport content_domination_ratio(const CorpusManifest& corpus, int probe_pairs,
                                                 uint64_t seed = 0x5eed);

/// Mean autocorrelation pitch over energetic frames, in Hz.
double estimate_mean_pitch(const AudioClip& clip);

}  // namespace ceae
