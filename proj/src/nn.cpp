#include "ceae/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ceae::nn {

std::string cell_name(CellType c) { return c == CellType::Lstm ? "lstm" : "gru"; }

CellType cell_from_name(const std::string& name) {
  if (name == "lstm") return CellType::Lstm;
  if (name == "gru") return CellType::Gru;
  throw ValueError("unknown recurrent cell: " + name);
}

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.conv_layers = 3;
  c.conv_channels = 512;
  c.recurrent_layers = 2;
  c.recurrent_hidden = 32;
  c.code_dim = 32;
  return c;
}

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

void EncoderConfig::validate() const {
  require(in_mels >= 1 && conv_layers >= 1 && conv_channels >= 1, "encoder: bad conv config");
  require(kernel % 2 == 1, "encoder: kernel must be odd");
  require(recurrent_layers >= 1, "encoder: need at least one recurrent layer");
  require(recurrent_hidden >= 2 && recurrent_hidden % 2 == 0,
          "encoder: recurrent_hidden must be even (split across directions)");
  require(code_dim == recurrent_hidden,
          "encoder: code_dim must equal recurrent_hidden (concatenated streams)");
  require(code_stride >= 1 && 128 % code_stride == 0,
          "encoder: code_stride must divide the 128-frame segment");
}

DecoderConfig DecoderConfig::paper() {
  DecoderConfig c;
  c.code_dim = 32;
  c.pre_recurrent_channels = 512;
  c.conv_channels = 512;
  c.post_recurrent_channels = 1024;
  return c;
}

DecoderConfig DecoderConfig::desk() { return DecoderConfig{}; }

void DecoderConfig::validate() const {
  require(code_dim >= 1 && pre_recurrent_channels >= 1 && conv_layers >= 1 &&
              conv_channels >= 1 && post_recurrent_channels >= 1 && post_recurrent_layers >= 1 &&
              out_mels >= 1,
          "decoder: all sizes must be >= 1");
  require(kernel % 2 == 1, "decoder: kernel must be odd");
}

int ParamStore::add(const std::string& name, Mat v) {
  names.push_back(name);
  values.push_back(std::move(v));
  return static_cast<int>(values.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ValueError("unknown parameter: " + name);
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& v : values) n += static_cast<size_t>(v.size());
  return n;
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < values.size(); ++i) {
    h = fnv1a64_bytes(names[i].data(), names[i].size(), h);
    h = hash_matrix(values[i], h);
  }
  return h;
}

bool ParamStore::all_finite() const {
  for (const auto& v : values)
    if (!v.allFinite()) return false;
  return true;
}

void init_xavier_uniform(Mat& w, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (long c = 0; c < w.cols(); ++c)
    for (long r = 0; r < w.rows(); ++r) w(r, c) = uniform(rng, -bound, bound);
}

void init_orthogonal_gates(Mat& wh, int hidden, Rng& rng) {
  require(wh.cols() == hidden && wh.rows() % hidden == 0, "orthogonal init: bad shape");
  const long gates = wh.rows() / hidden;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (long g = 0; g < gates; ++g) {
    Mat a(hidden, hidden);
    for (long c = 0; c < hidden; ++c)
      for (long r = 0; r < hidden; ++r) a(r, c) = normal(rng);
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(hidden, hidden);
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (long c = 0; c < hidden; ++c)
      if (r(c, c) < 0) q.col(c) = -q.col(c);
    wh.block(g * hidden, 0, hidden, hidden) = q;
  }
}

namespace {

struct CellParams {
  // LSTM uses wx/wh/b; GRU uses wx/wh/b (input bias) plus bh.
  int wx = -1, wh = -1, b = -1, bh = -1;
};

CellParams add_cell(ParamStore& store, const std::string& prefix, CellType cell, int input,
                    int hidden, Rng& rng) {
  const int gates = cell == CellType::Lstm ? 4 : 3;
  CellParams p;
  Mat wx(gates * hidden, input);
  init_xavier_uniform(wx, input, gates * hidden, rng);
  p.wx = store.add(prefix + ".wx", std::move(wx));
  Mat wh(gates * hidden, hidden);
  init_orthogonal_gates(wh, hidden, rng);
  p.wh = store.add(prefix + ".wh", std::move(wh));
  p.b = store.add(prefix + ".b", Mat::Zero(gates * hidden, 1));
  if (cell == CellType::Gru) p.bh = store.add(prefix + ".bh", Mat::Zero(gates * hidden, 1));
  return p;
}

Var run_cell(Tape& t, const std::vector<Var>& p, const CellParams& cp, CellType cell, Var x,
             Layout lay, bool reverse) {
  if (cell == CellType::Lstm) return t.lstm(x, p[cp.wx], p[cp.wh], p[cp.b], lay, reverse);
  return t.gru(x, p[cp.wx], p[cp.wh], p[cp.b], p[cp.bh], lay, reverse);
}

uint64_t hash_norms(const std::vector<NormState>& norms, uint64_t h) {
  for (const auto& n : norms) {
    h = hash_matrix(n.running_mean, h);
    h = hash_matrix(n.running_var, h);
  }
  return h;
}

}  // namespace

// --- encoder ---------------------------------------------------------------

EncoderNet::EncoderNet(const EncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, "encoder-init"));
  int in = cfg_.in_mels;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    Mat w(cfg_.conv_channels, in * cfg_.kernel);
    init_xavier_uniform(w, in * cfg_.kernel, cfg_.conv_channels * cfg_.kernel, rng);
    params_.add("conv" + std::to_string(l) + ".w", std::move(w));
    params_.add("conv" + std::to_string(l) + ".b", Mat::Zero(cfg_.conv_channels, 1));
    NormState ns;
    ns.init(cfg_.conv_channels);
    norms_.push_back(std::move(ns));
    in = cfg_.conv_channels;
  }
  const int h_dir = cfg_.recurrent_hidden / 2;
  for (int r = 0; r < cfg_.recurrent_layers; ++r) {
    add_cell(params_, "rnn" + std::to_string(r) + ".fwd", cfg_.cell, in, h_dir, rng);
    add_cell(params_, "rnn" + std::to_string(r) + ".bwd", cfg_.cell, in, h_dir, rng);
    in = cfg_.recurrent_hidden;
  }
}

std::vector<Var> EncoderNet::param_vars(Tape& t, bool frozen) const {
  std::vector<Var> p;
  p.reserve(params_.values.size());
  for (const auto& v : params_.values)
    p.push_back(frozen ? t.frozen_param(&v) : t.param(&v));
  return p;
}

Var EncoderNet::build(Tape& t, const std::vector<Var>& p, Var mel, Layout lay, Mode mode,
                      bool update_stats) {
  require(t.val(mel).rows() == cfg_.in_mels, "encoder: input must have " +
                                                 std::to_string(cfg_.in_mels) + " mel rows");
  require(lay.frames % cfg_.code_stride == 0,
          "encoder: frame count not divisible by code_stride");
  const bool training = mode == Mode::Train;
  int pi = 0;
  Var h = mel;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    h = t.conv1d(h, p[pi], p[pi + 1], cfg_.kernel, lay);
    pi += 2;
    h = t.instance_norm(h, lay, &norms_[l], training, training && update_stats);
    h = t.relu(h);
  }
  const int per_cell = cfg_.cell == CellType::Lstm ? 3 : 4;
  for (int r = 0; r < cfg_.recurrent_layers; ++r) {
    CellParams fwd, bwd;
    fwd.wx = pi;
    fwd.wh = pi + 1;
    fwd.b = pi + 2;
    if (cfg_.cell == CellType::Gru) fwd.bh = pi + 3;
    pi += per_cell;
    bwd.wx = pi;
    bwd.wh = pi + 1;
    bwd.b = pi + 2;
    if (cfg_.cell == CellType::Gru) bwd.bh = pi + 3;
    pi += per_cell;
    Var f = run_cell(t, p, fwd, cfg_.cell, h, lay, false);
    Var b = run_cell(t, p, bwd, cfg_.cell, h, lay, true);
    h = t.concat_rows(f, b);
  }
  return t.subsample_cols(h, cfg_.code_stride, lay);
}

ContentCode EncoderNet::forward(const Mat& mel_values, Mode mode) {
  Tape t;
  Var in = t.constant(mel_values);
  Layout lay{static_cast<int>(mel_values.cols()), 1};
  Var code = build(t, param_vars(t), in, lay, mode, false);
  return ContentCode{t.val(code), cfg_.code_stride};
}

ContentCode EncoderNet::forward(const MelSpectrogram& mel, Mode mode) {
  return forward(mel.values, mode);
}

uint64_t EncoderNet::state_hash() const { return hash_norms(norms_, params_.content_hash()); }

// --- decoder ------------------------------------------------------------------

DecoderNet::DecoderNet(const DecoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, "decoder-init"));
  add_cell(params_, "pre_rnn", cfg_.cell, cfg_.code_dim, cfg_.pre_recurrent_channels, rng);
  int in = cfg_.pre_recurrent_channels;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    Mat w(cfg_.conv_channels, in * cfg_.kernel);
    init_xavier_uniform(w, in * cfg_.kernel, cfg_.conv_channels * cfg_.kernel, rng);
    params_.add("conv" + std::to_string(l) + ".w", std::move(w));
    params_.add("conv" + std::to_string(l) + ".b", Mat::Zero(cfg_.conv_channels, 1));
    NormState ns;
    ns.init(cfg_.conv_channels);
    norms_.push_back(std::move(ns));
    in = cfg_.conv_channels;
  }
  for (int r = 0; r < cfg_.post_recurrent_layers; ++r) {
    add_cell(params_, "post_rnn" + std::to_string(r), cfg_.cell, in,
             cfg_.post_recurrent_channels, rng);
    in = cfg_.post_recurrent_channels;
  }
  Mat w(cfg_.out_mels, in);
  init_xavier_uniform(w, in, cfg_.out_mels, rng);
  params_.add("out.w", std::move(w));
  params_.add("out.b", Mat::Zero(cfg_.out_mels, 1));
}

std::vector<Var> DecoderNet::param_vars(Tape& t, bool frozen) const {
  std::vector<Var> p;
  p.reserve(params_.values.size());
  for (const auto& v : params_.values)
    p.push_back(frozen ? t.frozen_param(&v) : t.param(&v));
  return p;
}

Var DecoderNet::build(Tape& t, const std::vector<Var>& p, Var z, int stride, Layout code_lay,
                      Mode mode, bool update_stats) {
  require(t.val(z).rows() == cfg_.code_dim,
          "decoder: code must have " + std::to_string(cfg_.code_dim) + " rows");
  const bool training = mode == Mode::Train;
  const int per_cell = cfg_.cell == CellType::Lstm ? 3 : 4;
  Layout lay{code_lay.frames * stride, code_lay.segments};

  Var h = t.upsample_cols(z, stride, code_lay);
  int pi = 0;
  CellParams pre;
  pre.wx = pi;
  pre.wh = pi + 1;
  pre.b = pi + 2;
  if (cfg_.cell == CellType::Gru) pre.bh = pi + 3;
  pi += per_cell;
  h = run_cell(t, p, pre, cfg_.cell, h, lay, false);
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    h = t.conv1d(h, p[pi], p[pi + 1], cfg_.kernel, lay);
    pi += 2;
    h = t.batch_norm(h, lay, &norms_[l], training, training && update_stats);
    h = t.relu(h);
  }
  for (int r = 0; r < cfg_.post_recurrent_layers; ++r) {
    CellParams post;
    post.wx = pi;
    post.wh = pi + 1;
    post.b = pi + 2;
    if (cfg_.cell == CellType::Gru) post.bh = pi + 3;
    pi += per_cell;
    h = run_cell(t, p, post, cfg_.cell, h, lay, false);
  }
  h = t.matmul(p[pi], h);
  return t.add_bias(h, p[pi + 1]);
}

MelSpectrogram DecoderNet::forward(const ContentCode& z, Mode mode, int frame_hop) {
  Tape t;
  Var in = t.constant(z.values);
  Layout code_lay{static_cast<int>(z.values.cols()), 1};
  Var mel = build(t, param_vars(t), in, z.stride, code_lay, mode, false);
  return MelSpectrogram{t.val(mel), frame_hop};
}

uint64_t DecoderNet::state_hash() const { return hash_norms(norms_, params_.content_hash()); }

Mat pad_frames_to_stride(const Mat& values, int stride) {
  const long rem = values.cols() % stride;
  if (rem == 0) return values;
  const long extra = stride - rem;
  Mat padded(values.rows(), values.cols() + extra);
  padded.leftCols(values.cols()) = values;
  for (long i = 0; i < extra; ++i) padded.col(values.cols() + i) = values.col(values.cols() - 1);
  return padded;
}

}  // namespace ceae::nn
