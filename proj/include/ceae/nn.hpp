#pragma once

#include "ceae/dsp.hpp"
#include "ceae/tape.hpp"

#include <map>
#include <string>
#include <vector>

namespace ceae::nn {

enum class CellType { Lstm, Gru };
enum class Mode { Train, Eval };

std::string cell_name(CellType c);
CellType cell_from_name(const std::string& name);

/// Conv stack -> bidirectional recurrent stack -> temporal subsampling.
/// Each bidirectional layer runs recurrent_hidden/2 units per direction and
/// concatenates the streams, so its output width equals recurrent_hidden and
/// the final code has code_dim == recurrent_hidden rows.
struct EncoderConfig {
  int in_mels = 80;
  int conv_layers = 2;
  int conv_channels = 48;
  int kernel = 5;
  int recurrent_layers = 1;
  int recurrent_hidden = 8;
  int code_dim = 8;
  int code_stride = 4;
  CellType cell = CellType::Lstm;

  static EncoderConfig paper();
  static EncoderConfig desk();
  void validate() const;
};

/// Upsample -> recurrent layer -> conv stack -> recurrent stack -> linear.
struct DecoderConfig {
  int code_dim = 8;
  int pre_recurrent_channels = 64;
  int conv_layers = 3;
  int conv_channels = 64;
  int kernel = 5;
  int post_recurrent_channels = 128;
  int post_recurrent_layers = 2;
  int out_mels = 80;
  CellType cell = CellType::Lstm;

  static DecoderConfig paper();
  static DecoderConfig desk();
  void validate() const;
};

/// Named parameter arrays in a fixed order; the unit of optimization,
/// hashing and serialization.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Mat> values;

  int add(const std::string& name, Mat v);
  int index_of(const std::string& name) const;
  size_t parameter_count() const;
  uint64_t content_hash() const;
  bool all_finite() const;
};

/// code_dim x T' content code; carries the temporal stride so decoders know
/// the upsampling factor.
struct ContentCode {
  Mat values;
  int stride = 4;

  int frames() const { return static_cast<int>(values.cols()); }
};

/// Deterministic initialization: conv/linear weights Xavier-uniform, the
/// hidden-to-hidden recurrent blocks orthogonal (per gate), biases zero.
void init_xavier_uniform(Mat& w, int fan_in, int fan_out, Rng& rng);
void init_orthogonal_gates(Mat& wh, int hidden, Rng& rng);

class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(const EncoderConfig& cfg, uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<NormState>& norm_states() { return norms_; }
  const std::vector<NormState>& norm_states() const { return norms_; }

  std::vector<Var> param_vars(Tape& t, bool frozen = false) const;
  /// Input mel must be in_mels x (frames*segments); frames divisible by
  /// code_stride. Returns the code variable, code_dim x (frames/stride * segments).
  Var build(Tape& t, const std::vector<Var>& p, Var mel, Layout lay, Mode mode,
            bool update_stats);

  ContentCode forward(const MelSpectrogram& mel, Mode mode = Mode::Train);
  ContentCode forward(const Mat& mel_values, Mode mode = Mode::Train);

  uint64_t state_hash() const;  // params + running stats

 private:
  EncoderConfig cfg_;
  ParamStore params_;
  std::vector<NormState> norms_;
};

class DecoderNet {
 public:
  DecoderNet() = default;
  DecoderNet(const DecoderConfig& cfg, uint64_t seed);

  const DecoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<NormState>& norm_states() { return norms_; }
  const std::vector<NormState>& norm_states() const { return norms_; }

  std::vector<Var> param_vars(Tape& t, bool frozen = false) const;
  /// z is code_dim x (code_frames*segments); returns out_mels x
  /// (code_frames*stride*segments).
  Var build(Tape& t, const std::vector<Var>& p, Var z, int stride, Layout code_lay, Mode mode,
            bool update_stats);

  MelSpectrogram forward(const ContentCode& z, Mode mode = Mode::Train, int frame_hop = 200);

  uint64_t state_hash() const;

 private:
  DecoderConfig cfg_;
  ParamStore params_;
  std::vector<NormState> norms_;
};

/// Pads T up to a stride multiple by repeating the last frame; returns the
/// padded matrix (no-op when already divisible).
Mat pad_frames_to_stride(const Mat& values, int stride);

}  // namespace ceae::nn
