#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ceae/synth.hpp"

#include <filesystem>
#include <map>
#include <set>

using namespace ceae;
namespace fs = std::filesystem;

namespace {

ContentFactor fixed_content() {
  ContentFactor w;
  w.units = {{3, 200}, {17, 160}, {9, 240}, {28, 180}, {1, 220}, {12, 200}, {22, 160},
             {5, 240}, {30, 200}, {14, 200}};
  return w;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("canonical formants are distinct and in range") {
  std::set<std::pair<int, int>> seen;
  for (int u = 0; u < kNumUnits; ++u) {
    const auto f = canonical_formants(u);
    CHECK(f.f1 >= 300.0);
    CHECK(f.f1 <= 900.0);
    CHECK(f.f2 >= 900.0);
    CHECK(f.f2 <= 2500.0 + 600.0);  // f2 may be pushed above f1 + 250
    CHECK(f.f2 > f.f1);
    seen.insert({static_cast<int>(f.f1), static_cast<int>(f.f2)});
  }
  CHECK(seen.size() == kNumUnits);
}

TEST_CASE("generate_utterance is deterministic and obeys the duration law") {
  const SpeakerFactor s{"spk", 120.0, 1.0, -3.0};
  const ContentFactor w = fixed_content();
  const AudioClip a = generate_utterance(s, w, 77);
  const AudioClip b = generate_utterance(s, w, 77);
  CHECK(a.samples == b.samples);  // bit-identical

  // 2000 ms of content -> 32000 samples, within one cross-fade.
  CHECK(w.total_ms() == 2000.0);
  CHECK(std::abs(static_cast<long>(a.samples.size()) - 32000) <= 160);

  const AudioClip c = generate_utterance(s, w, 78);
  CHECK(a.samples != c.samples);
  for (double x : a.samples) {
    CHECK(x <= 1.0);
    CHECK(x >= -1.0);
  }
}

TEST_CASE("same content by two speakers shares the formant trajectory") {
  const SpeakerFactor s1{"low", 100.0, 1.10, -3.0};
  const SpeakerFactor s2{"high", 235.0, 0.95, -1.0};
  const ContentFactor w = fixed_content();
  const MelFilterbank fb = make_mel_filterbank();

  const auto m1 = mel_spectrogram(generate_utterance(s1, w, 5), fb);
  const auto m2 = mel_spectrogram(generate_utterance(s2, w, 5), fb);
  REQUIRE(m1.values.cols() == m2.values.cols());

  std::vector<double> t1, t2;
  for (long t = 0; t < m1.values.cols(); ++t) {
    long b1 = 0, b2 = 0;
    m1.values.col(t).maxCoeff(&b1);
    m2.values.col(t).maxCoeff(&b2);
    t1.push_back(static_cast<double>(b1));
    t2.push_back(static_cast<double>(b2));
  }
  double ma = 0, mb = 0;
  for (size_t i = 0; i < t1.size(); ++i) {
    ma += t1[i];
    mb += t2[i];
  }
  ma /= t1.size();
  mb /= t2.size();
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < t1.size(); ++i) {
    cov += (t1[i] - ma) * (t2[i] - mb);
    va += (t1[i] - ma) * (t1[i] - ma);
    vb += (t2[i] - mb) * (t2[i] - mb);
  }
  CHECK(cov / std::sqrt(va * vb) > 0.8);
}

TEST_CASE("make_corpus counts, ordering, and bit-exact regeneration") {
  const auto dir = scratch_dir("ceae_corpus_test");
  const auto speakers = default_speakers(2);
  const CorpusManifest m1 = make_corpus(speakers, 5, 1234, dir.string());
  CHECK(m1.entries.size() == 10);

  // Manifest ordering: sorted by speaker then index.
  for (size_t i = 1; i < m1.entries.size(); ++i) {
    const auto& a = m1.entries[i - 1];
    const auto& b = m1.entries[i];
    CHECK((a.speaker_id < b.speaker_id || (a.speaker_id == b.speaker_id && a.path < b.path)));
  }

  const CorpusManifest loaded = load_manifest(dir.string());
  CHECK(loaded.entries.size() == 10);
  CHECK(loaded.speakers.size() == 2);

  // Re-render every utterance from its manifest seed: bit-identical files.
  for (const auto& e : loaded.entries) {
    const AudioClip on_disk = load_wav((dir / e.path).string());
    const AudioClip again = generate_utterance(loaded.speaker(e.speaker_id), e.content, e.seed);
    const std::string b1 = encode_wav_bytes(on_disk), b2 = encode_wav_bytes(again);
    REQUIRE(b1 == b2);
  }

  // Full corpus regeneration into a second directory is bit-identical too.
  const auto dir2 = scratch_dir("ceae_corpus_test2");
  make_corpus(speakers, 5, 1234, dir2.string());
  for (const auto& e : m1.entries)
    REQUIRE(read_file_bytes((dir / e.path).string()) ==
            read_file_bytes((dir2 / e.path).string()));

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("content factor sampling respects the training length floor") {
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const ContentFactor w = sample_content(rng);
    w.validate(true);
    CHECK(w.total_ms() >= 1600.0);
  }
}

TEST_CASE("f0 separability: threshold on estimated pitch splits the groups") {
  const auto speakers = default_speakers(4);
  Rng rng(21);
  int correct = 0, total = 0;
  for (const auto& s : speakers) {
    for (int k = 0; k < 6; ++k) {
      const ContentFactor w = sample_content(rng);
      const AudioClip clip = generate_utterance(s, w, derive_seed(99, s.speaker_id, k));
      const double pitch = estimate_mean_pitch(clip);
      const bool predicted_low = pitch < 170.0;
      const bool is_low = s.f0_base < 170.0;
      correct += predicted_low == is_low;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total > 0.95);
}

TEST_CASE("content recoverability: per-unit mel means match across speakers") {
  const SpeakerFactor s1{"low", 105.0, 1.08, -2.0};
  const SpeakerFactor s2{"high", 230.0, 0.92, -4.0};
  const MelFilterbank fb = make_mel_filterbank();
  Rng rng(31);

  int checked = 0, matched = 0;
  for (int utt = 0; utt < 16; ++utt) {
    const ContentFactor w = sample_content(rng);
    const uint64_t seed = derive_seed(500, "recov", utt);
    const auto m1 = mel_spectrogram(generate_utterance(s1, w, seed), fb);
    const auto m2 = mel_spectrogram(generate_utterance(s2, w, seed), fb);

    // Ground-truth unit spans -> frame ranges (hop 200 = 12.5 ms/frame).
    std::map<int, Vec> mean1, mean2;
    std::map<int, int> count;
    double t_ms = 0.0;
    for (const auto& u : w.units) {
      const long f0 = static_cast<long>(t_ms / 12.5);
      t_ms += u.duration_ms;
      const long f1 = std::min<long>(static_cast<long>(t_ms / 12.5), m1.values.cols());
      if (f1 <= f0) continue;
      const Vec v1 = m1.values.middleCols(f0, f1 - f0).rowwise().mean();
      const Vec v2 = m2.values.middleCols(f0, f1 - f0).rowwise().mean();
      if (count.count(u.unit_id)) {
        mean1[u.unit_id] += v1;
        mean2[u.unit_id] += v2;
        count[u.unit_id] += 1;
      } else {
        mean1[u.unit_id] = v1;
        mean2[u.unit_id] = v2;
        count[u.unit_id] = 1;
      }
    }
    for (auto& [u, v] : mean1) v /= count[u];
    for (auto& [u, v] : mean2) v /= count[u];

    // Each unit's speaker-1 mean must be nearest to the same unit's
    // speaker-2 mean among all units in the utterance.
    for (const auto& [u, v1] : mean1) {
      double best = 1e300;
      int best_u = -1;
      for (const auto& [u2, v2] : mean2) {
        const double d = (v1 - v2).squaredNorm();
        if (d < best) {
          best = d;
          best_u = u2;
        }
      }
      ++checked;
      matched += best_u == u;
    }
  }
  CHECK(checked > 40);
  CHECK(static_cast<double>(matched) / checked > 0.9);
}

TEST_CASE("content domination edge cases and small-corpus ratio") {
  const auto dir = scratch_dir("ceae_dom_test");
  const CorpusManifest corpus = make_corpus(default_speakers(2), 3, 77, dir.string());

  SUBCASE("identical speakers collapse the same-word distance to zero") {
    CorpusManifest twin = corpus;
    twin.speakers[1] = twin.speakers[0];
    twin.speakers[1].speaker_id = "clone";
    const auto r = content_domination_ratio(twin, 6, 3);
    CHECK(r.same_word_cross_speaker == 0.0);
  }

  SUBCASE("ratio below one on the synthetic corpus") {
    const auto r = content_domination_ratio(corpus, 40, 3);
    CHECK(r.same_word_cross_speaker > 0.0);
    CHECK(r.ratio < 1.0);
  }

  SUBCASE("w == w0 makes the two means coincide (ratio 1 by construction)") {
    Rng rng(11);
    const ContentFactor w0 = sample_content(rng);
    const auto p = domination_probe(corpus.speakers[0], corpus.speakers[1], w0, w0, 99);
    CHECK(p.same_word == p.cross_word);
    CHECK(p.same_word > 0.0);
  }

  SUBCASE("single-speaker corpus rejected") {
    CorpusManifest solo = corpus;
    solo.speakers.resize(1);
    CHECK_THROWS_AS(content_domination_ratio(solo, 4, 3), ValueError);
  }

  fs::remove_all(dir);
}
