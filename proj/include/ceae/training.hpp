#pragma once

#include "ceae/dataset.hpp"
#include "ceae/losses.hpp"
#include "ceae/model.hpp"
#include "ceae/optim.hpp"

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>

namespace ceae {

enum class Variant { Vanilla, Cycle, EncoderShareOnly, DataCycle };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct TrainConfig {
  double alpha = 10.0;
  double learning_rate = 1e-3;
  int batch_segments = 1;  // segments per speaker per step
  std::array<int, 3> steps_per_stage{3000, 3000, 3000};
  uint64_t seed = 1;
  nn::AdamConfig optimizer;  // lr is taken from learning_rate
  Variant variant = Variant::Cycle;
  nn::Reduction reduction = nn::Reduction::MeanCells;

  void validate() const;
  nn::AdamConfig adam() const;
};

struct SpeakerLoss {
  std::string speaker_id;
  double l_rec = 0.0;
  double l_cyc = 0.0;
};

struct LossReport {
  long long step = 0;
  double l_rec = 0.0;
  double l_cyc = 0.0;
  double l_total = 0.0;
  Variant variant = Variant::Vanilla;
  std::vector<SpeakerLoss> per_speaker;
};

/// CSV loss log (step,variant,l_rec,l_cyc,l_total), flushed every step.
class LossLogger {
 public:
  explicit LossLogger(const std::string& path);
  void log(const LossReport& r);

 private:
  std::ofstream out_;
};

// --- stage 1: speaker-specific exemplar autoencoder -------------------------

class Stage1Trainer {
 public:
  Stage1Trainer(const SpeakerData* data, const nn::EncoderConfig& ec,
                const nn::DecoderConfig& dc, const TrainConfig& tc);

  LossReport step();
  void run(int steps, LossLogger* logger = nullptr,
           std::vector<LossReport>* trace = nullptr);

  std::string speaker_id() const { return data_->id; }

  nn::EncoderNet encoder;
  nn::DecoderNet decoder;
  nn::Adam enc_opt, dec_opt;
  Rng data_rng;
  long long step_count = 0;
  TrainConfig cfg;

  void attach_data(const SpeakerData* data) { data_ = data; }

 private:
  Stage1Trainer() = default;
  friend class CheckpointCodec;
  const SpeakerData* data_ = nullptr;
};

// --- stage 2: shared encoder with cycle consistency ---------------------------

class Stage2Trainer {
 public:
  /// decoders are the frozen stage-1 decoders (one per dataset speaker);
  /// a fresh encoder is initialized from the config seed.
  Stage2Trainer(const MelDataset* data, std::map<std::string, nn::DecoderNet> decoders,
                const nn::EncoderConfig& ec, const TrainConfig& tc);

  LossReport step();
  void run(int steps, LossLogger* logger = nullptr,
           std::vector<LossReport>* trace = nullptr);

  /// Assembles the trained shared encoder with the frozen decoders.
  MultiHeadModel to_model() const;

  nn::EncoderNet encoder;  // E_c
  std::map<std::string, nn::DecoderNet> decoders;
  nn::Adam opt;
  Rng data_rng;
  long long step_count = 0;
  TrainConfig cfg;

  void attach_data(const MelDataset* data) { data_ = data; }

 private:
  Stage2Trainer() = default;
  friend class CheckpointCodec;
  const MelDataset* data_ = nullptr;
};

// --- stage 3: new-speaker decoders on a frozen shared encoder ----------------

enum class Stage3Init { Fresh, Finetune };

class Stage3Trainer {
 public:
  Stage3Trainer(const SpeakerData* data, nn::EncoderNet frozen_encoder,
                const nn::DecoderConfig& dc, const TrainConfig& tc, Stage3Init init,
                const nn::DecoderNet* finetune_from = nullptr);

  LossReport step();
  void run(int steps, LossLogger* logger = nullptr,
           std::vector<LossReport>* trace = nullptr);

  std::string speaker_id() const { return data_->id; }

  nn::EncoderNet encoder;  // frozen
  nn::DecoderNet decoder;
  nn::Adam dec_opt;
  Rng data_rng;
  long long step_count = 0;
  TrainConfig cfg;

  void attach_data(const SpeakerData* data) { data_ = data; }

 private:
  Stage3Trainer() = default;
  friend class CheckpointCodec;
  const SpeakerData* data_ = nullptr;
};

}  // namespace ceae
