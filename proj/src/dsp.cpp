#include "ceae/dsp.hpp"

#include <fftw3.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace ceae {

void FrontendConfig::validate() const {
  require(window >= 1 && hop >= 1 && fft_size >= window, "invalid frame parameters");
  require(n_mels >= 1, "n_mels must be >= 1");
  require(fmin < fmax, "fmin must be below fmax");
  require(fmax <= kSampleRate / 2.0, "fmax above Nyquist");
  require(log_floor > 0, "log floor must be positive");
}

namespace {

std::mutex g_fftw_plan_mutex;

/// Per-size FFTW plans with owned buffers. One instance per thread per size;
/// plan creation is globally locked (FFTW planning is not thread safe).
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    real_ = fftw_alloc_real(n);
    cplx_ = fftw_alloc_complex(n / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, cplx_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, cplx_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(cplx_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const double* in, std::complex<double>* out) {
    std::memcpy(real_, in, sizeof(double) * n_);
    fftw_execute(fwd_);
    std::memcpy(out, cplx_, sizeof(fftw_complex) * (n_ / 2 + 1));
  }

  /// Unnormalized FFTW c2r; caller divides by n.
  void inverse(const std::complex<double>* in, double* out) {
    std::memcpy(cplx_, in, sizeof(fftw_complex) * (n_ / 2 + 1));
    fftw_execute(inv_);
    std::memcpy(out, real_, sizeof(double) * n_);
  }

 private:
  int n_;
  double* real_;
  fftw_complex* cplx_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

RealFft& fft_for_size(int n) {
  thread_local std::map<int, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);  // periodic Hann
  return w;
}

/// Mirror-reflect index into [0, n): handles arbitrary overhang by folding.
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long p = 2 * (n - 1);
  long m = i % p;
  if (m < 0) m += p;
  return m < n ? m : p - m;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXcd stft_complex(const std::vector<double>& samples, int window, int hop,
                              int fft_size) {
  require(!samples.empty(), "stft requires at least one sample");
  require(fft_size >= window, "fft size must cover the window");
  const long n = static_cast<long>(samples.size());
  const int frames = static_cast<int>((n + hop - 1) / hop);  // ceil(len/hop)
  const int bins = fft_size / 2 + 1;
  const auto win = hann_window(window);
  const int half = window / 2;

  Eigen::MatrixXcd out(bins, frames);
  std::vector<double> frame(fft_size, 0.0);
  std::vector<std::complex<double>> spec(bins);
  auto& fft = fft_for_size(fft_size);
  for (int t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * hop;
    for (int k = 0; k < window; ++k) {
      const long idx = reflect_index(center - half + k, n);
      frame[k] = samples[static_cast<size_t>(idx)] * win[k];
    }
    std::fill(frame.begin() + window, frame.end(), 0.0);
    fft.forward(frame.data(), spec.data());
    for (int b = 0; b < bins; ++b) out(b, t) = spec[b];
  }
  return out;
}

Spectrogram stft(const AudioClip& clip, int window, int hop, int fft_size) {
  require(clip.sample_rate == kSampleRate,
          "unsupported sample rate " + std::to_string(clip.sample_rate));
  Eigen::MatrixXcd c = stft_complex(clip.samples, window, hop, fft_size);
  Spectrogram spec;
  spec.window = window;
  spec.hop = hop;
  spec.fft_size = fft_size;
  spec.magnitudes = c.cwiseAbs();
  return spec;
}

std::vector<double> istft(const Eigen::MatrixXcd& frames_fxt, int window, int hop, int fft_size) {
  const int frames = static_cast<int>(frames_fxt.cols());
  const int bins = fft_size / 2 + 1;
  require(static_cast<int>(frames_fxt.rows()) == bins, "istft: wrong bin count");
  const auto win = hann_window(window);
  const int half = window / 2;
  const long out_len = static_cast<long>(frames) * hop;
  const long padded = out_len + window;  // half on each side

  std::vector<double> acc(padded, 0.0), wsum(padded, 0.0);
  std::vector<double> time(fft_size);
  std::vector<std::complex<double>> spec(bins);
  auto& fft = fft_for_size(fft_size);
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < bins; ++b) spec[b] = frames_fxt(b, t);
    fft.inverse(spec.data(), time.data());
    const long start = static_cast<long>(t) * hop;  // padded coords, window starts here
    for (int k = 0; k < window; ++k) {
      acc[start + k] += time[k] / fft_size * win[k];
      wsum[start + k] += win[k] * win[k];
    }
  }
  std::vector<double> out(out_len, 0.0);
  for (long i = 0; i < out_len; ++i) {
    const double w = wsum[i + half];
    out[i] = w > 1e-10 ? acc[i + half] / w : 0.0;
  }
  return out;
}

MelFilterbank make_mel_filterbank(int n_mels, int fft_size, double fmin, double fmax,
                                  int sample_rate) {
  require(n_mels >= 1, "n_mels must be >= 1");
  require(fmin < fmax, "fmin must be below fmax");
  require(fmax <= sample_rate / 2.0, "fmax above Nyquist");
  const int bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  MelFilterbank fb;
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.weights = Mat::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f < c)
        w = (f - lo) / (c - lo);
      else if (f >= c && f < hi)
        w = (hi - f) / (hi - c);
      fb.weights(m, b) = std::max(0.0, w);
    }
  }
  return fb;
}

MelSpectrogram to_mel(const Spectrogram& spec, const MelFilterbank& fb, double floor) {
  require(fb.weights.cols() == spec.magnitudes.rows(),
          "filterbank/spectrogram shape mismatch: fb has " + std::to_string(fb.weights.cols()) +
              " bins, spectrogram has " + std::to_string(spec.magnitudes.rows()));
  MelSpectrogram mel;
  mel.frame_hop = spec.hop;
  mel.values = (fb.weights * spec.magnitudes).cwiseMax(floor).array().log().matrix();
  return mel;
}

double mel_distance(const MelSpectrogram& a, const MelSpectrogram& b) {
  require(a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols(),
          "mel_distance requires equal shapes");
  return (a.values - b.values).squaredNorm() / static_cast<double>(a.values.size());
}

AudioClip griffin_lim(const MelSpectrogram& mel, const MelFilterbank& fb, int iterations,
                      int window, int fft_size) {
  const int hop = mel.frame_hop;
  require(fb.weights.rows() == mel.values.rows(), "filterbank/mel shape mismatch");

  // Pseudo-inverse projection back to the linear spectrogram.
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(fb.weights);
  Mat energies = mel.values.array().exp().matrix();
  Mat mag = (cod.pseudoInverse() * energies).cwiseMax(0.0);

  Eigen::MatrixXcd spec = mag.cast<std::complex<double>>();  // zero phase init
  std::vector<double> x;
  for (int it = 0; it < iterations; ++it) {
    x = istft(spec, window, hop, fft_size);
    Eigen::MatrixXcd re = stft_complex(x, window, hop, fft_size);
    for (int t = 0; t < mag.cols(); ++t)
      for (int b = 0; b < mag.rows() && b < re.rows(); ++b) {
        std::complex<double> v = re(b, t);
        double a = std::abs(v);
        spec(b, t) = a > 1e-12 ? mag(b, t) * (v / a) : std::complex<double>(mag(b, t), 0.0);
      }
  }
  x = istft(spec, window, hop, fft_size);

  AudioClip out;
  out.samples.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out.samples[i] = std::clamp(x[i], -1.0, 1.0);
  return out;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelFilterbank& fb,
                               const FrontendConfig& cfg) {
  return to_mel(stft(clip, cfg.window, cfg.hop, cfg.fft_size), fb, cfg.log_floor);
}

void write_mel_archive(const std::string& path, const MelSpectrogram& mel) {
  std::string out = "MEL0";
  append_u32(out, static_cast<uint32_t>(mel.values.rows()));
  append_u32(out, static_cast<uint32_t>(mel.values.cols()));
  append_u32(out, static_cast<uint32_t>(mel.frame_hop));
  const long rows = mel.values.rows(), cols = mel.values.cols();
  out.reserve(out.size() + sizeof(double) * rows * cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double v = mel.values(r, c);
      char b[8];
      std::memcpy(b, &v, 8);
      out.append(b, 8);
    }
  write_file_bytes(path, out);
}

MelSpectrogram read_mel_archive(const std::string& path) {
  std::string b = read_file_bytes(path);
  if (b.size() < 16 || b.compare(0, 4, "MEL0") != 0)
    throw ValueError("mel archive " + path + ": bad magic");
  size_t pos = 4;
  const uint32_t rows = read_u32(b, pos);
  const uint32_t cols = read_u32(b, pos);
  const uint32_t hop = read_u32(b, pos);
  if (b.size() != 16 + sizeof(double) * rows * cols)
    throw ValueError("mel archive " + path + ": truncated payload");
  MelSpectrogram mel;
  mel.frame_hop = static_cast<int>(hop);
  mel.values.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      double v;
      std::memcpy(&v, b.data() + pos, 8);
      pos += 8;
      mel.values(r, c) = v;
    }
  return mel;
}

}  // namespace ceae
