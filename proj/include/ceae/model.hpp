#pragma once

#include "ceae/nn.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ceae {

/// Shared encoder E_c plus one decoder per target speaker.
struct MultiHeadModel {
  nn::EncoderNet encoder;
  std::map<std::string, nn::DecoderNet> decoders;

  std::vector<std::string> speaker_ids() const;
  uint64_t state_hash() const;
};

/// A set of independently trained speaker-specific autoencoders (the
/// vanilla baseline): each speaker has its own encoder and decoder.
struct VanillaBundle {
  std::map<std::string, nn::EncoderNet> encoders;
  std::map<std::string, nn::DecoderNet> decoders;

  std::vector<std::string> speaker_ids() const;
  uint64_t state_hash() const;
};

/// Minimal encode/decode surface shared by trained models and hand-built
/// stubs; evaluation probes run against this.
class CodeModel {
 public:
  virtual ~CodeModel() = default;
  virtual std::vector<std::string> speaker_list() const = 0;
  virtual Mat encode(const Mat& mel) const = 0;  // shared encoder
  virtual Mat decode(const std::string& speaker, const Mat& code) const = 0;
  virtual int stride() const = 0;
};

/// Non-owning evaluation view over a trained model. For a MultiHeadModel
/// every speaker maps to the shared encoder; for a VanillaBundle each
/// speaker's own encoder is used for its data and the first speaker's
/// encoder acts as the shared one. Probes run the nets in training mode
/// (batch statistics, no updates) since that is the representation the
/// losses were optimized on.
class EvalModel : public CodeModel {
 public:
  std::map<std::string, nn::EncoderNet*> encoders;
  nn::EncoderNet* shared = nullptr;
  std::map<std::string, nn::DecoderNet*> decoders;
  uint64_t model_hash = 0;
  nn::Mode mode = nn::Mode::Train;

  std::vector<std::string> speaker_list() const override;
  Mat encode(const Mat& mel) const override;
  Mat decode(const std::string& speaker, const Mat& code) const override;
  int stride() const override;

  /// Encoder used for this speaker's own data (differs per speaker only for
  /// vanilla bundles).
  Mat encode_for(const std::string& speaker, const Mat& mel) const;
};

EvalModel eval_view(MultiHeadModel& model);
EvalModel eval_view(VanillaBundle& bundle);

/// Hand-built linear stub: encode is a signed row-selection Q (so Q Q^T = I
/// holds exactly in floating point) followed by subsampling; decode is
/// decode_scale * Q^T followed by a per-speaker null-space offset. With
/// decode_scale == 1 every decoder is an exact functional inverse of the
/// encoder, the optimum of the cycle objective.
class LinearStubModel : public CodeModel {
 public:
  static LinearStubModel make(int mels, int code_dim, int stride_factor,
                              const std::vector<std::string>& speakers, uint64_t seed,
                              bool zero_offsets = false, double decode_scale = 1.0);

  std::vector<std::string> speaker_list() const override;
  Mat encode(const Mat& mel) const override;
  Mat decode(const std::string& speaker, const Mat& code) const override;
  int stride() const override { return stride_; }

 private:
  Mat q_;  // code_dim x mels signed selection
  std::map<std::string, Vec> offsets_;
  int stride_ = 1;
  double decode_scale_ = 1.0;
};

/// Mel-domain cycle penalty m_i -> D_j -> E -> D_i vs the original mel,
/// mean-reduced over cells.
double data_cycle_penalty(const CodeModel& model, const Mat& mel, const std::string& i,
                          const std::string& j);

}  // namespace ceae
