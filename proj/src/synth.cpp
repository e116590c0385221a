#include "ceae/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ceae {

void SpeakerFactor::validate() const {
  require(!speaker_id.empty(), "speaker_id must be non-empty");
  require(f0_base >= 90.0 && f0_base <= 260.0, "f0_base out of [90, 260]");
  require(formant_scale >= 0.8 && formant_scale <= 1.25, "formant_scale out of [0.8, 1.25]");
  require(spectral_tilt >= -6.0 && spectral_tilt <= 0.0, "spectral_tilt out of [-6, 0]");
}

double ContentFactor::total_ms() const {
  double t = 0.0;
  for (const auto& u : units) t += u.duration_ms;
  return t;
}

void ContentFactor::validate(bool training_length) const {
  require(!units.empty(), "content factor must have at least one unit");
  for (const auto& u : units) {
    require(u.unit_id >= 0 && u.unit_id < kNumUnits, "unit_id out of [0, 31]");
    require(u.duration_ms >= 80.0 && u.duration_ms <= 240.0, "unit duration out of [80, 240] ms");
  }
  if (training_length) require(total_ms() >= 1600.0, "training utterance shorter than 1.6 s");
}

FormantTriple canonical_formants(int unit_id) {
  require(unit_id >= 0 && unit_id < kNumUnits, "unit_id out of [0, 31]");
  // 7 and 11 are coprime with 32, so each formant sweeps all 32 slots in a
  // decorrelated order; distinct units always get distinct (F1, F2) pairs.
  const double f1 = 300.0 + 600.0 * ((unit_id * 7) % 32) / 31.0;
  double f2 = 900.0 + 1600.0 * ((unit_id * 11) % 32) / 31.0;
  f2 = std::max(f2, f1 + 250.0);
  const double f3 = 2500.0 + 800.0 * unit_id / 31.0;
  return {f1, f2, f3};
}

namespace {

/// Klatt-style second-order resonator, y = A x + B y1 + C y2.
struct Resonator {
  double a = 1.0, b = 0.0, c = 0.0;
  double y1 = 0.0, y2 = 0.0;

  Resonator(double freq_hz, double bw_hz) {
    const double r = std::exp(-std::numbers::pi * bw_hz / kSampleRate);
    c = -r * r;
    b = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / kSampleRate);
    a = 1.0 - b - c;
  }

  double step(double x) {
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

constexpr int kCrossfadeSamples = 160;  // 10 ms
constexpr double kNoiseMix = 0.04;

/// Jittered pulse train plus a little aspiration noise. The pitch jitter is
/// a seeded random walk capped at +-10%, so neighboring periods stay similar
/// and the signal keeps a usable short-time periodicity.
std::vector<double> render_excitation(double f0_base, size_t n, uint64_t seed) {
  std::vector<double> e(n, 0.0);
  Rng pulse_rng(derive_seed(seed, "pulses"));
  Rng noise_rng(derive_seed(seed, "noise"));
  double t = 0.0;
  double drift = 0.0;
  while (t < static_cast<double>(n)) {
    const size_t idx = static_cast<size_t>(std::llround(t));
    if (idx < n) e[idx] += 1.0;
    drift = std::clamp(drift + 0.02 * uniform(pulse_rng, -1.0, 1.0), -0.1, 0.1);
    t += kSampleRate / (f0_base * (1.0 + drift));
  }
  for (size_t i = 0; i < n; ++i) e[i] += kNoiseMix * uniform(noise_rng, -1.0, 1.0);
  return e;
}

}  // namespace

AudioClip generate_utterance(const SpeakerFactor& s, const ContentFactor& w, uint64_t seed) {
  s.validate();
  w.validate();

  // Per-unit sample spans; total length is exactly the sum of durations.
  std::vector<size_t> starts;
  size_t total = 0;
  for (const auto& u : w.units) {
    starts.push_back(total);
    total += static_cast<size_t>(std::llround(u.duration_ms * kSampleRate / 1000.0));
  }
  starts.push_back(total);

  const std::vector<double> excitation = render_excitation(s.f0_base, total, seed);

  std::vector<double> out(total, 0.0);
  const size_t half = kCrossfadeSamples / 2;
  for (size_t ui = 0; ui < w.units.size(); ++ui) {
    const auto f = canonical_formants(w.units[ui].unit_id);
    Resonator r1(f.f1 * s.formant_scale, 60.0);
    Resonator r2(f.f2 * s.formant_scale, 90.0);
    Resonator r3(f.f3 * s.formant_scale, 130.0);

    // Render over the unit's span extended into the cross-fade straddle
    // zones on either side, then blend with linear ramps.
    const size_t lo = starts[ui] >= half ? starts[ui] - half : 0;
    const size_t hi = std::min(total, starts[ui + 1] + half);
    for (size_t i = lo; i < hi; ++i) {
      const double y = r3.step(r2.step(r1.step(excitation[i])));
      double gain = 1.0;
      if (ui > 0 && i < starts[ui] + half)
        gain = (static_cast<double>(i) - (starts[ui] - half)) / kCrossfadeSamples;
      if (ui + 1 < w.units.size() && i + half >= starts[ui + 1])
        gain = (static_cast<double>(starts[ui + 1] + half) - i) / kCrossfadeSamples;
      out[i] += gain * y;
    }
  }

  // Pre-emphasis flattens the pulse-train spectrum so the formant peaks,
  // not the fundamental, carry the mel-domain energy.
  double prev = 0.0;
  for (auto& x : out) {
    const double cur = x;
    x = cur - 0.9 * prev;
    prev = cur;
  }

  // Spectral tilt: one-pole lowpass blend, stronger for steeper tilts.
  const double beta = -s.spectral_tilt / 6.0 * 0.3;
  if (beta > 0.0) {
    double lp = 0.0;
    for (auto& x : out) {
      lp = (1.0 - beta) * x + beta * lp;
      x = lp;
    }
  }

  double peak = 1e-12;
  for (double x : out) peak = std::max(peak, std::abs(x));
  const double norm = 0.7 / peak;

  AudioClip clip;
  clip.samples.resize(total);
  for (size_t i = 0; i < total; ++i) clip.samples[i] = std::clamp(out[i] * norm, -1.0, 1.0);
  return clip;
}

ContentFactor sample_content(Rng& rng, double min_ms) {
  ContentFactor w;
  double total = 0.0;
  while (total < min_ms) {
    ContentUnit u;
    u.unit_id = uniform_int(rng, 0, kNumUnits - 1);
    u.duration_ms = static_cast<double>(uniform_int(rng, 80, 240));
    w.units.push_back(u);
    total += u.duration_ms;
  }
  return w;
}

const SpeakerFactor& CorpusManifest::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.speaker_id == id) return s;
  throw ValueError("unknown speaker: " + id);
}

std::vector<std::string> CorpusManifest::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : speakers) ids.push_back(s.speaker_id);
  return ids;
}

std::string content_to_json(const ContentFactor& w) {
  json units = json::array();
  for (const auto& u : w.units) units.push_back({u.unit_id, u.duration_ms});
  return json{{"units", units}}.dump();
}

ContentFactor content_from_json(const std::string& text) {
  ContentFactor w;
  json j = json::parse(text);
  for (const auto& u : j.at("units"))
    w.units.push_back({u.at(0).get<int>(), u.at(1).get<double>()});
  return w;
}

CorpusManifest make_corpus(const std::vector<SpeakerFactor>& speakers, int utts_per_speaker,
                           uint64_t base_seed, const std::string& out_dir,
                           double min_utterance_ms) {
  require(!speakers.empty(), "make_corpus requires at least one speaker");
  require(utts_per_speaker >= 1, "utts_per_speaker must be >= 1");
  for (const auto& s : speakers) s.validate();

  std::vector<SpeakerFactor> sorted = speakers;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.speaker_id < b.speaker_id; });
  for (size_t i = 1; i < sorted.size(); ++i)
    require(sorted[i].speaker_id != sorted[i - 1].speaker_id, "duplicate speaker_id in corpus");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + out_dir + ": " + ec.message());

  CorpusManifest manifest;
  manifest.root = out_dir;
  manifest.speakers = sorted;

  for (const auto& s : sorted) {
    fs::create_directories(fs::path(out_dir) / s.speaker_id, ec);
    if (ec) throw IoError("cannot create speaker directory: " + ec.message());
    for (int i = 0; i < utts_per_speaker; ++i) {
      const uint64_t seed = derive_seed(base_seed, s.speaker_id, static_cast<uint64_t>(i));
      Rng content_rng(derive_seed(seed, "content"));
      ContentFactor w = sample_content(content_rng, min_utterance_ms);
      AudioClip clip = generate_utterance(s, w, seed);

      char name[32];
      std::snprintf(name, sizeof(name), "utt_%04d.wav", i);
      const std::string rel = s.speaker_id + "/" + name;
      write_wav((fs::path(out_dir) / rel).string(), clip);
      manifest.entries.push_back({rel, s.speaker_id, std::move(w), seed});
    }
  }

  std::ofstream mf(fs::path(out_dir) / "manifest.tsv");
  if (!mf) throw IoError("cannot write manifest.tsv in " + out_dir);
  for (const auto& e : manifest.entries)
    mf << e.path << '\t' << e.speaker_id << '\t' << content_to_json(e.content) << '\t' << e.seed
       << '\n';

  json spk = json::array();
  for (const auto& s : sorted)
    spk.push_back({{"speaker_id", s.speaker_id},
                   {"f0_base", s.f0_base},
                   {"formant_scale", s.formant_scale},
                   {"spectral_tilt", s.spectral_tilt}});
  std::ofstream sf(fs::path(out_dir) / "speakers.json");
  if (!sf) throw IoError("cannot write speakers.json in " + out_dir);
  sf << json{{"speakers", spk}}.dump(2) << '\n';

  return manifest;
}

CorpusManifest load_manifest(const std::string& corpus_dir) {
  CorpusManifest manifest;
  manifest.root = corpus_dir;

  std::ifstream sf(fs::path(corpus_dir) / "speakers.json");
  if (!sf) throw IoError("missing speakers.json in " + corpus_dir);
  json sj = json::parse(sf);
  for (const auto& s : sj.at("speakers")) {
    SpeakerFactor f;
    f.speaker_id = s.at("speaker_id").get<std::string>();
    f.f0_base = s.at("f0_base").get<double>();
    f.formant_scale = s.at("formant_scale").get<double>();
    f.spectral_tilt = s.at("spectral_tilt").get<double>();
    manifest.speakers.push_back(std::move(f));
  }

  std::ifstream mf(fs::path(corpus_dir) / "manifest.tsv");
  if (!mf) throw IoError("missing manifest.tsv in " + corpus_dir);
  std::string line;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string content_text, seed_text;
    if (!std::getline(ls, e.path, '\t') || !std::getline(ls, e.speaker_id, '\t') ||
        !std::getline(ls, content_text, '\t') || !std::getline(ls, seed_text))
      throw ValueError("malformed manifest line: " + line);
    e.content = content_from_json(content_text);
    e.seed = std::stoull(seed_text);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::vector<SpeakerFactor> default_speakers(int n) {
  require(n >= 1 && n <= 4, "default speaker set supports 1..4 speakers");
  const std::vector<SpeakerFactor> all = {
      {"spk_low_a", 100.0, 1.10, -3.0},
      {"spk_high_a", 235.0, 0.95, -1.0},
      {"spk_low_b", 125.0, 1.02, -4.5},
      {"spk_high_b", 210.0, 0.88, -2.0},
  };
  return {all.begin(), all.begin() + n};
}

DominationProbe domination_probe(const SpeakerFactor& s1, const SpeakerFactor& s2,
                                 const ContentFactor& w0, const ContentFactor& w, uint64_t seed) {
  const MelFilterbank fb = make_mel_filterbank();
  const FrontendConfig cfg;

  auto cropped_distance = [](const MelSpectrogram& a, const MelSpectrogram& b) {
    const int t = static_cast<int>(std::min(a.values.cols(), b.values.cols()));
    MelSpectrogram ca{a.values.leftCols(t), a.frame_hop};
    MelSpectrogram cb{b.values.leftCols(t), b.frame_hop};
    return mel_distance(ca, cb);
  };

  // Shared render seed: identical (s, w, seed) inputs yield identical clips.
  const auto m_s1_w0 = mel_spectrogram(generate_utterance(s1, w0, seed), fb, cfg);
  const auto m_s2_w0 = mel_spectrogram(generate_utterance(s2, w0, seed), fb, cfg);
  const auto m_s1_w = mel_spectrogram(generate_utterance(s1, w, seed), fb, cfg);
  const auto m_s2_w = mel_spectrogram(generate_utterance(s2, w, seed), fb, cfg);

  DominationProbe p;
  p.same_word = cropped_distance(m_s1_w0, m_s2_w0);
  p.cross_word =
      0.5 * (cropped_distance(m_s1_w0, m_s2_w) + cropped_distance(m_s2_w0, m_s1_w));
  return p;
}

ContentDominationReport content_domination_ratio(const CorpusManifest& corpus, int probe_pairs,
                                                 uint64_t seed) {
  require(corpus.speakers.size() >= 2, "content domination probe needs >= 2 speakers");
  require(probe_pairs >= 1, "probe_pairs must be >= 1");

  Rng rng(derive_seed(seed, "content-domination"));

  double same_sum = 0.0, cross_sum = 0.0;
  for (int k = 0; k < probe_pairs; ++k) {
    const int i = uniform_int(rng, 0, static_cast<int>(corpus.speakers.size()) - 1);
    int j = uniform_int(rng, 0, static_cast<int>(corpus.speakers.size()) - 2);
    if (j >= i) ++j;
    const uint64_t probe_seed = derive_seed(seed, "probe", static_cast<uint64_t>(k));
    const ContentFactor w0 = sample_content(rng);
    const ContentFactor w = sample_content(rng);
    const DominationProbe p =
        domination_probe(corpus.speakers[i], corpus.speakers[j], w0, w, probe_seed);
    same_sum += p.same_word;
    cross_sum += p.cross_word;
  }

  ContentDominationReport r;
  r.same_word_cross_speaker = same_sum / probe_pairs;
  r.cross_word_same_speaker = cross_sum / probe_pairs;
  r.ratio = r.cross_word_same_speaker > 0.0
                ? r.same_word_cross_speaker / r.cross_word_same_speaker
                : (r.same_word_cross_speaker > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return r;
}

double estimate_mean_pitch(const AudioClip& clip) {
  const int frame = 800, hop = 200;
  const int lag_min = kSampleRate / 300, lag_max = kSampleRate / 70;
  const long n = static_cast<long>(clip.samples.size());
  if (n < frame) return 0.0;

  double energy_total = 0.0;
  std::vector<double> pitches;
  std::vector<double> energies;
  for (long start = 0; start + frame <= n; start += hop) {
    const double* x = clip.samples.data() + start;
    double e0 = 0.0;
    for (int i = 0; i < frame; ++i) e0 += x[i] * x[i];
    energies.push_back(e0);
    energy_total += e0;

    double best = 0.0;
    int best_lag = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double acc = 0.0, el = 0.0;
      for (int i = 0; i + lag < frame; ++i) {
        acc += x[i] * x[i + lag];
        el += x[i + lag] * x[i + lag];
      }
      const double norm = std::sqrt(e0 * el) + 1e-12;
      const double r = acc / norm;
      if (r > best) {
        best = r;
        best_lag = lag;
      }
    }
    pitches.push_back(best_lag > 0 ? static_cast<double>(kSampleRate) / best_lag : 0.0);
  }

  const double mean_energy = energy_total / energies.size();
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < pitches.size(); ++i) {
    if (energies[i] >= 0.1 * mean_energy && pitches[i] > 0.0) {
      sum += pitches[i];
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace ceae
