#pragma once

#include "ceae/audio.hpp"
#include "ceae/common.hpp"

#include <complex>
#include <string>

namespace ceae {

/// Analysis constants shared across the pipeline. The defaults are the
/// training configuration: 800-sample Hann window, hop 200, 800-point FFT,
/// 80 mel bands over 0..8000 Hz, log floor 1e-5.
struct FrontendConfig {
  int window = 800;
  int hop = 200;
  int fft_size = 800;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;
  int griffin_lim_iterations = 60;
  int segment_samples = 25600;

  void validate() const;
};

/// Magnitude STFT. magnitudes is F x T with F = fft_size/2 + 1.
struct Spectrogram {
  Mat magnitudes;
  int window = 800;
  int hop = 200;
  int fft_size = 800;

  int frames() const { return static_cast<int>(magnitudes.cols()); }
  int bins() const { return static_cast<int>(magnitudes.rows()); }
};

/// Log-compressed mel energies, n_mels x T.
struct MelSpectrogram {
  Mat values;
  int frame_hop = 200;

  int frames() const { return static_cast<int>(values.cols()); }
  int bands() const { return static_cast<int>(values.rows()); }
};

/// Triangular mel filters on the HTK mel scale; weights is n_mels x F.
struct MelFilterbank {
  Mat weights;
  double fmin = 0.0;
  double fmax = 8000.0;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Hann-windowed magnitude STFT with centered frames: frame t is the
/// window centered at sample t*hop of the reflect-padded signal, and the
/// frame count is ceil(len / hop).
Spectrogram stft(const AudioClip& clip, int window = 800, int hop = 200, int fft_size = 800);

/// Complex STFT with the same framing, used by Griffin-Lim.
Eigen::MatrixXcd stft_complex(const std::vector<double>& samples, int window, int hop,
                              int fft_size);

/// Inverse of stft_complex via windowed overlap-add; returns exactly
/// frames*hop samples.
std::vector<double> istft(const Eigen::MatrixXcd& frames_fxt, int window, int hop, int fft_size);

MelFilterbank make_mel_filterbank(int n_mels = 80, int fft_size = 800, double fmin = 0.0,
                                  double fmax = 8000.0, int sample_rate = kSampleRate);

/// values = log(max(fb.weights * spec.magnitudes, floor)).
MelSpectrogram to_mel(const Spectrogram& spec, const MelFilterbank& fb, double floor = 1e-5);

/// Mean squared difference over all cells (requires equal shapes).
double mel_distance(const MelSpectrogram& a, const MelSpectrogram& b);

/// Phase recovery from a mel spectrogram: pseudo-inverse mel projection to a
/// linear magnitude spectrogram followed by Griffin-Lim iterations. The
/// output is clipped to [-1, 1] and has mel.frames()*hop samples.
AudioClip griffin_lim(const MelSpectrogram& mel, const MelFilterbank& fb, int iterations = 60,
                      int window = 800, int fft_size = 800);

/// Convenience: stft + to_mel with the config's constants.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelFilterbank& fb,
                               const FrontendConfig& cfg = FrontendConfig{});

// --- mel archive ----------------------------------------------------------
// Flat binary: magic "MEL0", u32 rows, u32 cols, u32 hop, then row-major
// float64 little-endian values.

void write_mel_archive(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram read_mel_archive(const std::string& path);

}  // namespace ceae
