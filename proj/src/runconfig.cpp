#include "ceae/runconfig.hpp"

#include "ceae/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using json = nlohmann::json;

namespace ceae {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

int to_int(const std::string& s) {
  try {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    require(used == s.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValueError("expected integer, got '" + s + "'");
  }
}

double to_double(const std::string& s) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValueError("expected number, got '" + s + "'");
  }
}

uint64_t to_u64(const std::string& s) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(s, &used);
    require(used == s.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValueError("expected unsigned integer, got '" + s + "'");
  }
}

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> table = {
      // frontend
      {"frontend.window", [](RunConfig& c, const std::string& v) { c.frontend.window = to_int(v); }},
      {"frontend.hop", [](RunConfig& c, const std::string& v) { c.frontend.hop = to_int(v); }},
      {"frontend.fft_size",
       [](RunConfig& c, const std::string& v) { c.frontend.fft_size = to_int(v); }},
      {"frontend.n_mels", [](RunConfig& c, const std::string& v) { c.frontend.n_mels = to_int(v); }},
      {"frontend.fmin", [](RunConfig& c, const std::string& v) { c.frontend.fmin = to_double(v); }},
      {"frontend.fmax", [](RunConfig& c, const std::string& v) { c.frontend.fmax = to_double(v); }},
      {"frontend.log_floor",
       [](RunConfig& c, const std::string& v) { c.frontend.log_floor = to_double(v); }},
      {"frontend.griffin_lim_iterations",
       [](RunConfig& c, const std::string& v) { c.frontend.griffin_lim_iterations = to_int(v); }},
      {"frontend.segment_samples",
       [](RunConfig& c, const std::string& v) { c.frontend.segment_samples = to_int(v); }},
      // corpus
      {"corpus.speakers", [](RunConfig& c, const std::string& v) { c.corpus.speakers = to_int(v); }},
      {"corpus.utterances_per_speaker",
       [](RunConfig& c, const std::string& v) { c.corpus.utterances_per_speaker = to_int(v); }},
      {"corpus.base_seed",
       [](RunConfig& c, const std::string& v) { c.corpus.base_seed = to_u64(v); }},
      {"corpus.min_utterance_ms",
       [](RunConfig& c, const std::string& v) { c.corpus.min_utterance_ms = to_double(v); }},
      {"corpus.probe_pairs",
       [](RunConfig& c, const std::string& v) { c.corpus.probe_pairs = to_int(v); }},
      // encoder
      {"encoder.preset",
       [](RunConfig& c, const std::string& v) {
         if (v == "desk")
           c.encoder = nn::EncoderConfig::desk();
         else if (v == "paper")
           c.encoder = nn::EncoderConfig::paper();
         else
           throw ValueError("encoder.preset must be desk or paper");
       }},
      {"encoder.conv_layers",
       [](RunConfig& c, const std::string& v) { c.encoder.conv_layers = to_int(v); }},
      {"encoder.conv_channels",
       [](RunConfig& c, const std::string& v) { c.encoder.conv_channels = to_int(v); }},
      {"encoder.kernel", [](RunConfig& c, const std::string& v) { c.encoder.kernel = to_int(v); }},
      {"encoder.recurrent_layers",
       [](RunConfig& c, const std::string& v) { c.encoder.recurrent_layers = to_int(v); }},
      {"encoder.recurrent_hidden",
       [](RunConfig& c, const std::string& v) { c.encoder.recurrent_hidden = to_int(v); }},
      {"encoder.code_dim",
       [](RunConfig& c, const std::string& v) { c.encoder.code_dim = to_int(v); }},
      {"encoder.code_stride",
       [](RunConfig& c, const std::string& v) { c.encoder.code_stride = to_int(v); }},
      {"encoder.cell",
       [](RunConfig& c, const std::string& v) { c.encoder.cell = nn::cell_from_name(v); }},
      // decoder
      {"decoder.preset",
       [](RunConfig& c, const std::string& v) {
         if (v == "desk")
           c.decoder = nn::DecoderConfig::desk();
         else if (v == "paper")
           c.decoder = nn::DecoderConfig::paper();
         else
           throw ValueError("decoder.preset must be desk or paper");
       }},
      {"decoder.code_dim",
       [](RunConfig& c, const std::string& v) { c.decoder.code_dim = to_int(v); }},
      {"decoder.pre_recurrent_channels",
       [](RunConfig& c, const std::string& v) { c.decoder.pre_recurrent_channels = to_int(v); }},
      {"decoder.conv_layers",
       [](RunConfig& c, const std::string& v) { c.decoder.conv_layers = to_int(v); }},
      {"decoder.conv_channels",
       [](RunConfig& c, const std::string& v) { c.decoder.conv_channels = to_int(v); }},
      {"decoder.kernel", [](RunConfig& c, const std::string& v) { c.decoder.kernel = to_int(v); }},
      {"decoder.post_recurrent_channels",
       [](RunConfig& c, const std::string& v) { c.decoder.post_recurrent_channels = to_int(v); }},
      {"decoder.post_recurrent_layers",
       [](RunConfig& c, const std::string& v) { c.decoder.post_recurrent_layers = to_int(v); }},
      {"decoder.out_mels",
       [](RunConfig& c, const std::string& v) { c.decoder.out_mels = to_int(v); }},
      {"decoder.cell",
       [](RunConfig& c, const std::string& v) { c.decoder.cell = nn::cell_from_name(v); }},
      // train
      {"train.alpha", [](RunConfig& c, const std::string& v) { c.train.alpha = to_double(v); }},
      {"train.learning_rate",
       [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"train.batch_segments",
       [](RunConfig& c, const std::string& v) { c.train.batch_segments = to_int(v); }},
      {"train.steps_stage1",
       [](RunConfig& c, const std::string& v) { c.train.steps_per_stage[0] = to_int(v); }},
      {"train.steps_stage2",
       [](RunConfig& c, const std::string& v) { c.train.steps_per_stage[1] = to_int(v); }},
      {"train.steps_stage3",
       [](RunConfig& c, const std::string& v) { c.train.steps_per_stage[2] = to_int(v); }},
      {"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_u64(v); }},
      {"train.optimizer",
       [](RunConfig& c, const std::string& v) {
         require(v == "adam", "only the adam optimizer is supported");
       }},
      {"train.beta1",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.beta1 = to_double(v); }},
      {"train.beta2",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.beta2 = to_double(v); }},
      {"train.epsilon",
       [](RunConfig& c, const std::string& v) { c.train.optimizer.eps = to_double(v); }},
      {"train.variant",
       [](RunConfig& c, const std::string& v) { c.train.variant = variant_from_name(v); }},
      {"train.reduction",
       [](RunConfig& c, const std::string& v) {
         if (v == "mean")
           c.train.reduction = nn::Reduction::MeanCells;
         else if (v == "sum")
           c.train.reduction = nn::Reduction::Sum;
         else
           throw ValueError("train.reduction must be mean or sum");
       }},
      // eval
      {"eval.seed", [](RunConfig& c, const std::string& v) { c.eval.seed = to_u64(v); }},
      {"eval.seeds", [](RunConfig& c, const std::string& v) { c.eval.seeds = to_int(v); }},
      {"eval.residual_pairs",
       [](RunConfig& c, const std::string& v) { c.eval.residual_pairs = to_int(v); }},
      {"eval.conversions_per_speaker",
       [](RunConfig& c, const std::string& v) { c.eval.conversions_per_speaker = to_int(v); }},
      {"eval.holdout_fraction",
       [](RunConfig& c, const std::string& v) { c.eval.holdout_fraction = to_double(v); }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, "override must look like section.key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto it = schema().find(key);
  if (it == schema().end()) throw ValueError("unknown configuration key: " + key);
  it->second(*this, value);
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', origin + ":" + std::to_string(line_no) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            origin + ":" + std::to_string(line_no) + ": expected key = value");
    require(!section.empty(), origin + ":" + std::to_string(line_no) + ": key outside a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = schema().find(key);
    if (it == schema().end())
      throw ValueError(origin + ":" + std::to_string(line_no) + ": unknown key " + key);
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      throw ValueError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_text(read_file_bytes(path), path);
}

void RunConfig::validate() const {
  frontend.validate();
  require(corpus.speakers >= 1, "corpus.speakers must be >= 1");
  require(corpus.utterances_per_speaker >= 1, "corpus.utterances_per_speaker must be >= 1");
  encoder.validate();
  decoder.validate();
  require(decoder.code_dim == encoder.code_dim, "encoder/decoder code_dim mismatch");
  train.validate();
  require(eval.holdout_fraction >= 0.0 && eval.holdout_fraction < 1.0,
          "eval.holdout_fraction out of [0, 1)");
  require(eval.seeds >= 1, "eval.seeds must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["frontend"] = {{"window", frontend.window},
                   {"hop", frontend.hop},
                   {"fft_size", frontend.fft_size},
                   {"n_mels", frontend.n_mels},
                   {"fmin", frontend.fmin},
                   {"fmax", frontend.fmax},
                   {"log_floor", frontend.log_floor},
                   {"griffin_lim_iterations", frontend.griffin_lim_iterations},
                   {"segment_samples", frontend.segment_samples}};
  j["corpus"] = {{"speakers", corpus.speakers},
                 {"utterances_per_speaker", corpus.utterances_per_speaker},
                 {"base_seed", corpus.base_seed},
                 {"min_utterance_ms", corpus.min_utterance_ms},
                 {"probe_pairs", corpus.probe_pairs}};
  j["encoder"] = json::parse(encoder_config_to_json(encoder));
  j["decoder"] = json::parse(decoder_config_to_json(decoder));
  j["train"] = json::parse(train_config_to_json(train));
  j["eval"] = {{"seed", eval.seed},
               {"seeds", eval.seeds},
               {"residual_pairs", eval.residual_pairs},
               {"conversions_per_speaker", eval.conversions_per_speaker},
               {"holdout_fraction", eval.holdout_fraction}};
  return j.dump(2);
}

}  // namespace ceae
