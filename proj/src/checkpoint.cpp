#include "ceae/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>

using json = nlohmann::json;

namespace ceae {

namespace {

constexpr char kMagic[4] = {'C', 'E', 'A', 'E'};
constexpr uint32_t kFormatVersion = 1;

void append_matrix_rowmajor(std::string& out, const Mat& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      char b[8];
      std::memcpy(b, &v, 8);
      out.append(b, 8);
    }
}

Mat read_matrix_rowmajor(const std::string& buf, size_t& pos, long rows, long cols) {
  if (pos + sizeof(double) * rows * cols > buf.size())
    throw ValueError("checkpoint: truncated array data");
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double v;
      std::memcpy(&v, buf.data() + pos, 8);
      pos += 8;
      m(r, c) = v;
    }
  return m;
}

json array_directory(const std::vector<ArrayEntry>& arrays) {
  json dir = json::array();
  for (const auto& a : arrays)
    dir.push_back({{"name", a.name}, {"rows", a.values.rows()}, {"cols", a.values.cols()}});
  return dir;
}

std::vector<ArrayEntry> read_arrays(const json& dir, const std::string& buf, size_t& pos) {
  std::vector<ArrayEntry> out;
  for (const auto& d : dir) {
    ArrayEntry a;
    a.name = d.at("name").get<std::string>();
    a.values = read_matrix_rowmajor(buf, pos, d.at("rows").get<long>(), d.at("cols").get<long>());
    out.push_back(std::move(a));
  }
  return out;
}

json parse_or_object(const std::string& text) {
  return text.empty() ? json::object() : json::parse(text);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json header;
  header["stage"] = ck.stage;
  header["variant"] = ck.variant;
  header["step"] = ck.step;
  header["rng_state"] = ck.rng_state;
  header["run_config"] = parse_or_object(ck.run_config_json);
  header["train_config"] = parse_or_object(ck.train_config_json);

  json nets = json::array();
  for (const auto& n : ck.nets)
    nets.push_back({{"kind", n.kind},
                    {"speaker", n.speaker},
                    {"config", parse_or_object(n.config_json)},
                    {"arrays", array_directory(n.arrays)}});
  header["nets"] = nets;

  json opts = json::array();
  for (const auto& o : ck.opts)
    opts.push_back({{"target", o.target},
                    {"lr", o.cfg.lr},
                    {"beta1", o.cfg.beta1},
                    {"beta2", o.cfg.beta2},
                    {"eps", o.cfg.eps},
                    {"t", o.t},
                    {"arrays", array_directory(o.moments)}});
  header["opts"] = opts;

  const std::string header_text = header.dump();
  std::string payload;
  append_u64(payload, header_text.size());
  payload += header_text;
  for (const auto& n : ck.nets)
    for (const auto& a : n.arrays) append_matrix_rowmajor(payload, a.values);
  for (const auto& o : ck.opts)
    for (const auto& a : o.moments) append_matrix_rowmajor(payload, a.values);

  std::string file;
  file.append(kMagic, 4);
  append_u32(file, kFormatVersion);
  append_u32(file, crc32(payload.data(), payload.size()));
  file += payload;
  write_file_bytes(path, file);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string file = read_file_bytes(path);
  if (file.size() < 12 || std::memcmp(file.data(), kMagic, 4) != 0)
    throw ValueError("checkpoint " + path + ": bad magic");
  size_t pos = 4;
  const uint32_t version = read_u32(file, pos);
  if (version != kFormatVersion)
    throw ValueError("checkpoint " + path + ": unsupported format version " +
                     std::to_string(version));
  const uint32_t stored_crc = read_u32(file, pos);
  const uint32_t actual_crc = crc32(file.data() + pos, file.size() - pos);
  if (stored_crc != actual_crc) throw ValueError("checkpoint " + path + ": checksum failure");

  const uint64_t header_len = read_u64(file, pos);
  if (pos + header_len > file.size()) throw ValueError("checkpoint " + path + ": truncated header");
  const json header = json::parse(file.substr(pos, header_len));
  pos += header_len;

  Checkpoint ck;
  ck.format_version = version;
  ck.stage = header.at("stage").get<std::string>();
  ck.variant = header.at("variant").get<std::string>();
  ck.step = header.at("step").get<long long>();
  ck.rng_state = header.at("rng_state").get<std::string>();
  ck.run_config_json = header.at("run_config").dump();
  ck.train_config_json = header.at("train_config").dump();

  for (const auto& n : header.at("nets")) {
    NetBlob blob;
    blob.kind = n.at("kind").get<std::string>();
    blob.speaker = n.at("speaker").get<std::string>();
    blob.config_json = n.at("config").dump();
    blob.arrays = read_arrays(n.at("arrays"), file, pos);
    ck.nets.push_back(std::move(blob));
  }
  for (const auto& o : header.at("opts")) {
    OptBlob blob;
    blob.target = o.at("target").get<std::string>();
    blob.cfg.lr = o.at("lr").get<double>();
    blob.cfg.beta1 = o.at("beta1").get<double>();
    blob.cfg.beta2 = o.at("beta2").get<double>();
    blob.cfg.eps = o.at("eps").get<double>();
    blob.t = o.at("t").get<long long>();
    blob.moments = read_arrays(o.at("arrays"), file, pos);
    ck.opts.push_back(std::move(blob));
  }
  return ck;
}

uint32_t checkpoint_crc(const std::string& path) {
  const std::string file = read_file_bytes(path);
  if (file.size() < 12) throw ValueError("checkpoint " + path + ": too short");
  size_t pos = 8;
  return read_u32(file, pos);
}

// --- config json ----------------------------------------------------------

std::string encoder_config_to_json(const nn::EncoderConfig& c) {
  return json{{"in_mels", c.in_mels},
              {"conv_layers", c.conv_layers},
              {"conv_channels", c.conv_channels},
              {"kernel", c.kernel},
              {"recurrent_layers", c.recurrent_layers},
              {"recurrent_hidden", c.recurrent_hidden},
              {"code_dim", c.code_dim},
              {"code_stride", c.code_stride},
              {"cell", nn::cell_name(c.cell)}}
      .dump();
}

nn::EncoderConfig encoder_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  nn::EncoderConfig c;
  c.in_mels = j.at("in_mels").get<int>();
  c.conv_layers = j.at("conv_layers").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.recurrent_layers = j.at("recurrent_layers").get<int>();
  c.recurrent_hidden = j.at("recurrent_hidden").get<int>();
  c.code_dim = j.at("code_dim").get<int>();
  c.code_stride = j.at("code_stride").get<int>();
  c.cell = nn::cell_from_name(j.at("cell").get<std::string>());
  return c;
}

std::string decoder_config_to_json(const nn::DecoderConfig& c) {
  return json{{"code_dim", c.code_dim},
              {"pre_recurrent_channels", c.pre_recurrent_channels},
              {"conv_layers", c.conv_layers},
              {"conv_channels", c.conv_channels},
              {"kernel", c.kernel},
              {"post_recurrent_channels", c.post_recurrent_channels},
              {"post_recurrent_layers", c.post_recurrent_layers},
              {"out_mels", c.out_mels},
              {"cell", nn::cell_name(c.cell)}}
      .dump();
}

nn::DecoderConfig decoder_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  nn::DecoderConfig c;
  c.code_dim = j.at("code_dim").get<int>();
  c.pre_recurrent_channels = j.at("pre_recurrent_channels").get<int>();
  c.conv_layers = j.at("conv_layers").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.post_recurrent_channels = j.at("post_recurrent_channels").get<int>();
  c.post_recurrent_layers = j.at("post_recurrent_layers").get<int>();
  c.out_mels = j.at("out_mels").get<int>();
  c.cell = nn::cell_from_name(j.at("cell").get<std::string>());
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  return json{{"alpha", c.alpha},
              {"learning_rate", c.learning_rate},
              {"batch_segments", c.batch_segments},
              {"steps_per_stage", c.steps_per_stage},
              {"seed", c.seed},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"eps", c.optimizer.eps},
              {"variant", variant_name(c.variant)},
              {"reduction", c.reduction == nn::Reduction::MeanCells ? "mean" : "sum"}}
      .dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_segments = j.at("batch_segments").get<int>();
  const auto steps = j.at("steps_per_stage");
  for (size_t i = 0; i < 3; ++i) c.steps_per_stage[i] = steps.at(i).get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.optimizer.beta1 = j.at("beta1").get<double>();
  c.optimizer.beta2 = j.at("beta2").get<double>();
  c.optimizer.eps = j.at("eps").get<double>();
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.reduction = j.at("reduction").get<std::string>() == "sum" ? nn::Reduction::Sum
                                                              : nn::Reduction::MeanCells;
  return c;
}

// --- net blobs -------------------------------------------------------------

namespace {

void append_store_arrays(std::vector<ArrayEntry>& out, const nn::ParamStore& store) {
  for (size_t i = 0; i < store.values.size(); ++i) out.push_back({store.names[i], store.values[i]});
}

void append_norm_arrays(std::vector<ArrayEntry>& out, const std::vector<nn::NormState>& norms) {
  for (size_t i = 0; i < norms.size(); ++i) {
    out.push_back({"norm" + std::to_string(i) + ".running_mean", norms[i].running_mean});
    out.push_back({"norm" + std::to_string(i) + ".running_var", norms[i].running_var});
  }
}

/// Writes blob arrays back into a freshly constructed net, by name.
template <typename Net>
void restore_net_arrays(Net& net, const NetBlob& blob) {
  auto& store = net.params();
  auto& norms = net.norm_states();
  for (const auto& a : blob.arrays) {
    if (a.name.rfind("norm", 0) == 0) {
      const size_t dot = a.name.find('.');
      const size_t idx = std::stoul(a.name.substr(4, dot - 4));
      require(idx < norms.size(), "checkpoint: unknown norm layer in " + a.name);
      Vec v = a.values.col(0);
      if (a.name.ends_with("running_mean"))
        norms[idx].running_mean = v;
      else
        norms[idx].running_var = v;
    } else {
      const int idx = store.index_of(a.name);
      require(store.values[idx].rows() == a.values.rows() &&
                  store.values[idx].cols() == a.values.cols(),
              "checkpoint: shape mismatch for " + a.name);
      store.values[idx] = a.values;
    }
  }
}

}  // namespace

NetBlob encoder_blob(const nn::EncoderNet& net, const std::string& speaker) {
  NetBlob b;
  b.kind = "encoder";
  b.speaker = speaker;
  b.config_json = encoder_config_to_json(net.config());
  append_store_arrays(b.arrays, net.params());
  append_norm_arrays(b.arrays, net.norm_states());
  return b;
}

NetBlob decoder_blob(const nn::DecoderNet& net, const std::string& speaker) {
  NetBlob b;
  b.kind = "decoder";
  b.speaker = speaker;
  b.config_json = decoder_config_to_json(net.config());
  append_store_arrays(b.arrays, net.params());
  append_norm_arrays(b.arrays, net.norm_states());
  return b;
}

nn::EncoderNet encoder_from_blob(const NetBlob& blob) {
  require(blob.kind == "encoder", "expected encoder blob");
  nn::EncoderNet net(encoder_config_from_json(blob.config_json), 0);
  restore_net_arrays(net, blob);
  return net;
}

nn::DecoderNet decoder_from_blob(const NetBlob& blob) {
  require(blob.kind == "decoder", "expected decoder blob");
  nn::DecoderNet net(decoder_config_from_json(blob.config_json), 0);
  restore_net_arrays(net, blob);
  return net;
}

namespace {

OptBlob opt_blob(const nn::Adam& opt, const nn::ParamStore& store, const std::string& target) {
  OptBlob b;
  b.target = target;
  b.cfg = opt.cfg;
  b.t = opt.t;
  for (size_t i = 0; i < store.values.size(); ++i) {
    b.moments.push_back({"m:" + store.names[i], opt.m[i]});
    b.moments.push_back({"v:" + store.names[i], opt.v[i]});
  }
  return b;
}

nn::Adam adam_from_blob(const OptBlob& blob, const nn::ParamStore& store) {
  nn::Adam opt(blob.cfg, store);
  opt.t = blob.t;
  require(blob.moments.size() == 2 * store.values.size(), "checkpoint: optimizer arity mismatch");
  for (size_t i = 0; i < store.values.size(); ++i) {
    require(blob.moments[2 * i].name == "m:" + store.names[i],
            "checkpoint: optimizer order mismatch at " + store.names[i]);
    opt.m[i] = blob.moments[2 * i].values;
    opt.v[i] = blob.moments[2 * i + 1].values;
  }
  return opt;
}

const OptBlob& find_opt(const Checkpoint& ck, const std::string& target) {
  for (const auto& o : ck.opts)
    if (o.target == target) return o;
  throw ValueError("checkpoint: missing optimizer state for " + target);
}

}  // namespace

// --- trainer snapshots --------------------------------------------------------

Checkpoint CheckpointCodec::from_stage1(const Stage1Trainer& tr,
                                        const std::string& run_config_json) {
  Checkpoint ck;
  ck.stage = "stage1";
  ck.variant = variant_name(Variant::Vanilla);
  ck.step = tr.step_count;
  ck.run_config_json = run_config_json;
  ck.train_config_json = train_config_to_json(tr.cfg);
  ck.rng_state = rng_state_to_string(tr.data_rng);
  ck.nets.push_back(encoder_blob(tr.encoder, tr.speaker_id()));
  ck.nets.push_back(decoder_blob(tr.decoder, tr.speaker_id()));
  ck.opts.push_back(opt_blob(tr.enc_opt, tr.encoder.params(), "encoder"));
  ck.opts.push_back(opt_blob(tr.dec_opt, tr.decoder.params(), "decoder:" + tr.speaker_id()));
  return ck;
}

Stage1Trainer CheckpointCodec::to_stage1(const Checkpoint& ck, const SpeakerData* data) {
  require(ck.stage == "stage1", "not a stage-1 checkpoint");
  require(ck.nets.size() == 2, "stage-1 checkpoint must hold one encoder and one decoder");
  Stage1Trainer tr;
  tr.cfg = train_config_from_json(ck.train_config_json);
  tr.encoder = encoder_from_blob(ck.nets[0]);
  tr.decoder = decoder_from_blob(ck.nets[1]);
  require(data != nullptr && data->id == ck.nets[0].speaker,
          "stage-1 checkpoint speaker mismatch");
  tr.enc_opt = adam_from_blob(find_opt(ck, "encoder"), tr.encoder.params());
  tr.dec_opt = adam_from_blob(find_opt(ck, "decoder:" + data->id), tr.decoder.params());
  tr.data_rng = rng_state_from_string(ck.rng_state);
  tr.step_count = ck.step;
  tr.attach_data(data);
  return tr;
}

Checkpoint CheckpointCodec::from_stage2(const Stage2Trainer& tr,
                                        const std::string& run_config_json) {
  Checkpoint ck;
  ck.stage = "stage2";
  ck.variant = variant_name(tr.cfg.variant);
  ck.step = tr.step_count;
  ck.run_config_json = run_config_json;
  ck.train_config_json = train_config_to_json(tr.cfg);
  ck.rng_state = rng_state_to_string(tr.data_rng);
  ck.nets.push_back(encoder_blob(tr.encoder));
  for (const auto& [id, d] : tr.decoders) ck.nets.push_back(decoder_blob(d, id));
  ck.opts.push_back(opt_blob(tr.opt, tr.encoder.params(), "encoder"));
  return ck;
}

Stage2Trainer CheckpointCodec::to_stage2(const Checkpoint& ck, const MelDataset* data) {
  require(ck.stage == "stage2", "not a stage-2 checkpoint");
  Stage2Trainer tr;
  tr.cfg = train_config_from_json(ck.train_config_json);
  for (const auto& blob : ck.nets) {
    if (blob.kind == "encoder")
      tr.encoder = encoder_from_blob(blob);
    else
      tr.decoders.emplace(blob.speaker, decoder_from_blob(blob));
  }
  tr.opt = adam_from_blob(find_opt(ck, "encoder"), tr.encoder.params());
  tr.data_rng = rng_state_from_string(ck.rng_state);
  tr.step_count = ck.step;
  tr.attach_data(data);
  require(data != nullptr, "stage-2 restore needs a dataset");
  for (const auto& s : data->speakers)
    require(tr.decoders.count(s.id) == 1, "checkpoint lacks decoder for speaker " + s.id);
  return tr;
}

Checkpoint CheckpointCodec::from_stage3(const Stage3Trainer& tr,
                                        const std::string& run_config_json) {
  Checkpoint ck;
  ck.stage = "stage3";
  ck.variant = variant_name(tr.cfg.variant);
  ck.step = tr.step_count;
  ck.run_config_json = run_config_json;
  ck.train_config_json = train_config_to_json(tr.cfg);
  ck.rng_state = rng_state_to_string(tr.data_rng);
  ck.nets.push_back(encoder_blob(tr.encoder));
  ck.nets.push_back(decoder_blob(tr.decoder, tr.speaker_id()));
  ck.opts.push_back(opt_blob(tr.dec_opt, tr.decoder.params(), "decoder:" + tr.speaker_id()));
  return ck;
}

Stage3Trainer CheckpointCodec::to_stage3(const Checkpoint& ck, const SpeakerData* data) {
  require(ck.stage == "stage3", "not a stage-3 checkpoint");
  Stage3Trainer tr;
  tr.cfg = train_config_from_json(ck.train_config_json);
  require(ck.nets.size() == 2, "stage-3 trainer checkpoint must hold encoder + decoder");
  tr.encoder = encoder_from_blob(ck.nets[0]);
  tr.decoder = decoder_from_blob(ck.nets[1]);
  require(data != nullptr && data->id == ck.nets[1].speaker,
          "stage-3 checkpoint speaker mismatch");
  tr.dec_opt = adam_from_blob(find_opt(ck, "decoder:" + data->id), tr.decoder.params());
  tr.data_rng = rng_state_from_string(ck.rng_state);
  tr.step_count = ck.step;
  tr.attach_data(data);
  return tr;
}

// --- model persistence ------------------------------------------------------

Checkpoint model_checkpoint(const MultiHeadModel& model, const std::string& stage,
                            const std::string& variant, long long step,
                            const std::string& run_config_json) {
  Checkpoint ck;
  ck.stage = stage;
  ck.variant = variant;
  ck.step = step;
  ck.run_config_json = run_config_json;
  ck.rng_state = rng_state_to_string(Rng(0));
  ck.nets.push_back(encoder_blob(model.encoder));
  for (const auto& [id, d] : model.decoders) ck.nets.push_back(decoder_blob(d, id));
  return ck;
}

Checkpoint bundle_checkpoint(const VanillaBundle& bundle, long long step,
                             const std::string& run_config_json) {
  Checkpoint ck;
  ck.stage = "vanilla";
  ck.variant = "vanilla";
  ck.step = step;
  ck.run_config_json = run_config_json;
  ck.rng_state = rng_state_to_string(Rng(0));
  for (const auto& [id, e] : bundle.encoders) ck.nets.push_back(encoder_blob(e, id));
  for (const auto& [id, d] : bundle.decoders) ck.nets.push_back(decoder_blob(d, id));
  return ck;
}

EvalModel LoadedModel::view() { return is_multi ? eval_view(multi) : eval_view(bundle); }

std::vector<std::string> LoadedModel::speaker_ids() const {
  return is_multi ? multi.speaker_ids() : bundle.speaker_ids();
}

LoadedModel model_from_checkpoint(const Checkpoint& ck) {
  LoadedModel out;
  out.stage = ck.stage;
  out.variant = ck.variant;
  if (ck.stage == "stage2" || ck.stage == "stage3") {
    out.is_multi = true;
    for (const auto& blob : ck.nets) {
      if (blob.kind == "encoder")
        out.multi.encoder = encoder_from_blob(blob);
      else
        out.multi.decoders.emplace(blob.speaker, decoder_from_blob(blob));
    }
    require(!out.multi.decoders.empty(), "checkpoint has no decoders");
  } else {
    out.is_multi = false;
    for (const auto& blob : ck.nets) {
      if (blob.kind == "encoder")
        out.bundle.encoders.emplace(blob.speaker, encoder_from_blob(blob));
      else
        out.bundle.decoders.emplace(blob.speaker, decoder_from_blob(blob));
    }
    require(!out.bundle.decoders.empty(), "checkpoint has no decoders");
  }
  return out;
}

}  // namespace ceae
