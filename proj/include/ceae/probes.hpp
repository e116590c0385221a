#pragma once

#include "ceae/dataset.hpp"
#include "ceae/model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ceae {

/// Single-hidden-layer softmax classifier over fixed-size feature vectors.
/// Capacity is fixed (hidden 32) so metric differences reflect the features,
/// not probe tuning.
struct ProbeClassifier {
  Mat w1, b1, w2, b2;
  std::vector<std::string> classes;  // sorted
  double heldout_accuracy = 0.0;
  uint64_t seed = 0;

  int predict(const Vec& x) const;
  const std::string& predict_label(const Vec& x) const;
};

/// Trains with a stratified 80/20 split, 500 full-batch Adam steps at lr
/// 1e-2. Requires >= 2 classes and >= 20 samples per class.
ProbeClassifier train_speaker_probe(const std::vector<std::pair<Vec, std::string>>& samples,
                                    uint64_t seed, int hidden = 32, int steps = 500,
                                    double lr = 1e-2);

/// Time-averaged content code of a segment, the probe feature.
Vec code_feature(const EvalModel& model, const std::string& speaker, const Mat& segment);

/// Per-bin mean and variance over frames (2 * bands dims), the SCA feature.
Vec mel_stats_feature(const Mat& mel);

/// Held-out accuracy of a speaker probe on time-averaged codes; lower means
/// better disentanglement. Chance level is 1/speakers.
double probe_leakage(const EvalModel& model, const MelDataset& data, uint64_t seed);

/// Fraction of conversions classified as their intended target by a
/// mel-statistics classifier trained on the reference speakers' real data.
double sca_proxy(const std::vector<std::pair<Mat, std::string>>& conversions,
                 const MelDataset& reference, uint64_t seed);

/// Mean of ||z_cycled - z||^2 / ||z||^2 over sampled (segment, i, j != i).
double cycle_residual(const CodeModel& model, const MelDataset& data, int pairs, uint64_t seed);

/// Mean matched-reconstruction error over held-out segments.
double recon_mse(const EvalModel& model, const MelDataset& data);

/// Per-frame energy-weighted mel centroid over the formant band, used as a
/// vocoder-free content track.
std::vector<double> formant_track(const Mat& mel);
std::vector<double> formant_argmax_track(const Mat& mel);
double track_correlation(const std::vector<double>& a, const std::vector<double>& b);

struct Conversion {
  Mat converted;
  std::string target;
  Mat source;
  std::string source_speaker;
};

/// Inference-mode conversion through the target's encoder/decoder pair (the
/// shared encoder for multi-head models, the target's own for vanilla eAEs).
Mat convert_for_eval(const EvalModel& model, const Mat& mel, const std::string& target);

/// Cross conversions of held-out utterances: every source speaker's held-out
/// mels converted to every other target (capped per source speaker).
std::vector<Conversion> make_cross_conversions(const EvalModel& model, const MelDataset& data,
                                               int per_speaker);

/// Mean formant-track correlation between source and converted mels; the
/// content-preservation proxy.
double content_preservation(const std::vector<Conversion>& conversions);

struct EvalReport {
  double probe_leakage = 0.0;
  double sca_proxy = 0.0;
  double recon_mse = 0.0;
  double cycle_residual = 0.0;
  double chance_level = 0.0;
  double content_preservation = 0.0;
  std::vector<uint64_t> seeds;
  std::string model_hash;
};

EvalReport full_report(const EvalModel& model, const MelDataset& data,
                       const std::vector<Conversion>& conversions, uint64_t seed,
                       int residual_pairs = 200);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

}  // namespace ceae
