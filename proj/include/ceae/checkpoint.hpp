#pragma once

#include "ceae/model.hpp"
#include "ceae/training.hpp"

#include <string>
#include <vector>

namespace ceae {

// File layout: magic "CEAE", u32 format_version, u32 crc32(payload), then the
// payload: u64 header length, JSON header, and raw little-endian float64
// arrays (row-major) in directory order.

struct ArrayEntry {
  std::string name;
  Mat values;
};

struct NetBlob {
  std::string kind;     // "encoder" | "decoder"
  std::string speaker;  // empty for the shared encoder
  std::string config_json;
  std::vector<ArrayEntry> arrays;  // parameters, then norm running stats
};

struct OptBlob {
  std::string target;  // "encoder" or "decoder:<speaker>"
  nn::AdamConfig cfg;
  long long t = 0;
  std::vector<ArrayEntry> moments;  // "m:<name>" and "v:<name>" pairs
};

struct Checkpoint {
  uint32_t format_version = 1;
  std::string stage;  // stage1 | stage2 | stage3 | vanilla
  std::string variant = "vanilla";
  long long step = 0;
  std::string run_config_json = "{}";
  std::string train_config_json = "{}";
  std::string rng_state;
  std::vector<NetBlob> nets;
  std::vector<OptBlob> opts;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
/// CRC of the stored payload (also the model identity used in sidecars).
uint32_t checkpoint_crc(const std::string& path);

// --- config json -------------------------------------------------------------

std::string encoder_config_to_json(const nn::EncoderConfig& c);
nn::EncoderConfig encoder_config_from_json(const std::string& text);
std::string decoder_config_to_json(const nn::DecoderConfig& c);
nn::DecoderConfig decoder_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

// --- net blobs ----------------------------------------------------------------

NetBlob encoder_blob(const nn::EncoderNet& net, const std::string& speaker = "");
NetBlob decoder_blob(const nn::DecoderNet& net, const std::string& speaker);
nn::EncoderNet encoder_from_blob(const NetBlob& blob);
nn::DecoderNet decoder_from_blob(const NetBlob& blob);

// --- trainer snapshots ----------------------------------------------------------

class CheckpointCodec {
 public:
  static Checkpoint from_stage1(const Stage1Trainer& tr, const std::string& run_config_json);
  static Stage1Trainer to_stage1(const Checkpoint& ck, const SpeakerData* data);

  static Checkpoint from_stage2(const Stage2Trainer& tr, const std::string& run_config_json);
  static Stage2Trainer to_stage2(const Checkpoint& ck, const MelDataset* data);

  static Checkpoint from_stage3(const Stage3Trainer& tr, const std::string& run_config_json);
  static Stage3Trainer to_stage3(const Checkpoint& ck, const SpeakerData* data);
};

// --- model persistence -----------------------------------------------------------

Checkpoint model_checkpoint(const MultiHeadModel& model, const std::string& stage,
                            const std::string& variant, long long step,
                            const std::string& run_config_json);
Checkpoint bundle_checkpoint(const VanillaBundle& bundle, long long step,
                             const std::string& run_config_json);

/// Owning wrapper so evaluation/conversion can work with either model form.
struct LoadedModel {
  std::string stage;
  std::string variant;
  bool is_multi = false;
  MultiHeadModel multi;
  VanillaBundle bundle;

  EvalModel view();
  std::vector<std::string> speaker_ids() const;
};

LoadedModel model_from_checkpoint(const Checkpoint& ck);

}  // namespace ceae
