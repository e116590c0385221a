#include "ceae/training.hpp"

#include <cmath>

namespace ceae {

using nn::Layout;
using nn::Mode;
using nn::Tape;
using nn::Var;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Cycle: return "cycle";
    case Variant::EncoderShareOnly: return "encoder_share_only";
    case Variant::DataCycle: return "data_cycle";
  }
  return "vanilla";
}

Variant variant_from_name(const std::string& name) {
  if (name == "vanilla") return Variant::Vanilla;
  if (name == "cycle") return Variant::Cycle;
  if (name == "encoder_share_only") return Variant::EncoderShareOnly;
  if (name == "data_cycle") return Variant::DataCycle;
  throw ValueError("unknown training variant: " + name);
}

void TrainConfig::validate() const {
  require(alpha >= 0.0, "alpha must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(batch_segments >= 1, "batch_segments must be >= 1");
  for (int s : steps_per_stage) require(s >= 0, "step counts must be >= 0");
}

nn::AdamConfig TrainConfig::adam() const {
  nn::AdamConfig a = optimizer;
  a.lr = learning_rate;
  return a;
}

LossLogger::LossLogger(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot open loss log: " + path);
  out_ << "step,variant,l_rec,l_cyc,l_total\n";
  out_.flush();
}

void LossLogger::log(const LossReport& r) {
  out_ << r.step << ',' << variant_name(r.variant) << ',' << r.l_rec << ',' << r.l_cyc << ','
       << r.l_total << '\n';
  out_.flush();
}

namespace {

/// Stacks sampled segments side by side; all segments of a speaker share a
/// frame count, which becomes the layout.
Mat sample_batch(const SpeakerData& data, int batch, Rng& rng, int* frames) {
  const auto& segs = data.train_segments;
  const int n = static_cast<int>(segs.size());
  require(n > 0, "no training segments for speaker " + data.id);
  const int F = static_cast<int>(segs[0].cols());
  Mat out(segs[0].rows(), static_cast<long>(F) * batch);
  for (int b = 0; b < batch; ++b)
    out.middleCols(static_cast<long>(b) * F, F) = segs[uniform_int(rng, 0, n - 1)];
  *frames = F;
  return out;
}

}  // namespace

// --- stage 1 -----------------------------------------------------------------

Stage1Trainer::Stage1Trainer(const SpeakerData* data, const nn::EncoderConfig& ec,
                             const nn::DecoderConfig& dc, const TrainConfig& tc)
    : encoder(ec, derive_seed(tc.seed, "stage1-enc-" + data->id)),
      decoder(dc, derive_seed(tc.seed, "stage1-dec-" + data->id)),
      enc_opt(tc.adam(), encoder.params()),
      dec_opt(tc.adam(), decoder.params()),
      data_rng(derive_seed(tc.seed, "stage1-data-" + data->id)),
      cfg(tc),
      data_(data) {
  cfg.validate();
  require(dc.code_dim == ec.code_dim, "stage 1: encoder/decoder code_dim mismatch");
  require(data_ != nullptr && !data_->train_segments.empty(), "stage 1: empty training data");
}

LossReport Stage1Trainer::step() {
  int F = 0;
  const Mat batch = sample_batch(*data_, cfg.batch_segments, data_rng, &F);
  const Layout lay{F, cfg.batch_segments};
  const int stride = encoder.config().code_stride;

  Tape t;
  auto pe = encoder.param_vars(t);
  auto pd = decoder.param_vars(t);
  Var in = t.constant(batch);
  Var z = encoder.build(t, pe, in, lay, Mode::Train, true);
  Var rec = decoder.build(t, pd, z, stride, Layout{F / stride, cfg.batch_segments}, Mode::Train,
                          true);
  Var loss = t.mse_to(rec, batch, cfg.reduction);
  t.backward(loss);

  std::vector<Mat> ge, gd;
  for (auto v : pe) ge.push_back(t.grad(v));
  for (auto v : pd) gd.push_back(t.grad(v));
  enc_opt.step(encoder.params(), ge);
  dec_opt.step(decoder.params(), gd);

  LossReport r;
  r.step = ++step_count;
  r.l_rec = t.scalar(loss);
  r.l_cyc = 0.0;
  r.l_total = r.l_rec;
  r.variant = Variant::Vanilla;
  r.per_speaker = {{data_->id, r.l_rec, 0.0}};
  return r;
}

void Stage1Trainer::run(int steps, LossLogger* logger, std::vector<LossReport>* trace) {
  for (int i = 0; i < steps; ++i) {
    LossReport r = step();
    if (logger) logger->log(r);
    if (trace) trace->push_back(std::move(r));
  }
}

// --- stage 2 -----------------------------------------------------------------

Stage2Trainer::Stage2Trainer(const MelDataset* data, std::map<std::string, nn::DecoderNet> decs,
                             const nn::EncoderConfig& ec, const TrainConfig& tc)
    : encoder(ec, derive_seed(tc.seed, "stage2-enc")),  // reinitialized E_c
      decoders(std::move(decs)),
      opt(tc.adam(), encoder.params()),
      data_rng(derive_seed(tc.seed, "stage2-data")),
      cfg(tc),
      data_(data) {
  cfg.validate();
  require(cfg.variant != Variant::Vanilla, "stage 2 is not defined for the vanilla variant");
  require(decoders.size() >= 2, "stage 2 requires at least 2 frozen decoders");
  require(data_ != nullptr, "stage 2: missing dataset");
  for (const auto& s : data_->speakers)
    require(decoders.count(s.id) == 1, "stage 2: no frozen decoder for speaker " + s.id);
  for (const auto& [id, d] : decoders)
    require(d.config().code_dim == ec.code_dim, "stage 2: code_dim mismatch for " + id);
}

LossReport Stage2Trainer::step() {
  const int K = static_cast<int>(data_->speakers.size());
  const int stride = encoder.config().code_stride;

  Tape t;
  auto pe = encoder.param_vars(t);
  std::map<std::string, std::vector<Var>> pd;
  for (auto& [id, d] : decoders) pd[id] = d.param_vars(t, /*frozen=*/true);

  // One segment per speaker per step keeps the loss terms balanced.
  struct Head {
    const SpeakerData* spk;
    Mat mel;
    Var in, z, rec_loss;
    Layout lay, code_lay;
  };
  std::vector<Head> heads;
  heads.reserve(K);
  for (const auto& s : data_->speakers) {
    Head h;
    h.spk = &s;
    int F = 0;
    h.mel = sample_batch(s, 1, data_rng, &F);
    h.lay = Layout{F, 1};
    h.code_lay = Layout{F / stride, 1};
    h.in = t.constant(h.mel);
    h.z = encoder.build(t, pe, h.in, h.lay, Mode::Train, true);
    Var rec = decoders.at(s.id).build(t, pd.at(s.id), h.z, stride, h.code_lay, Mode::Train, false);
    h.rec_loss = t.mse_to(rec, h.mel, cfg.reduction);
    heads.push_back(std::move(h));
  }

  Var l_rec = heads[0].rec_loss;
  for (int i = 1; i < K; ++i) l_rec = t.add(l_rec, heads[i].rec_loss);

  // Cross terms: every ordered pair, averaged over the K-1 partners so that
  // K == 2 reduces to the plain two-term sum.
  std::vector<double> cyc_by_head(K, 0.0);
  Var l_cyc{};
  const double pair_scale = 1.0 / (K - 1);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      if (j == i) continue;
      const std::string& tgt = heads[j].spk->id;
      Var cross =
          decoders.at(tgt).build(t, pd.at(tgt), heads[i].z, stride, heads[i].code_lay,
                                 Mode::Train, false);
      Var term{};
      if (cfg.variant == Variant::DataCycle) {
        // Mel-domain cycle: decode back through the matched decoder and
        // compare against the original mel.
        Var re_z = encoder.build(t, pe, cross, heads[i].lay, Mode::Train, false);
        const std::string& own = heads[i].spk->id;
        Var back = decoders.at(own).build(t, pd.at(own), re_z, stride, heads[i].code_lay,
                                          Mode::Train, false);
        term = t.mse_to(back, heads[i].mel, cfg.reduction);
      } else {
        Var re_z = encoder.build(t, pe, cross, heads[i].lay, Mode::Train, false);
        term = t.mse(re_z, heads[i].z, cfg.reduction);
      }
      cyc_by_head[i] += t.scalar(term) * pair_scale;
      l_cyc = l_cyc.valid() ? t.add(l_cyc, term) : term;
    }
  }
  l_cyc = t.scale(l_cyc, pair_scale);

  const double alpha_eff = cfg.variant == Variant::EncoderShareOnly ? 0.0 : cfg.alpha;
  // With alpha 0 the cycle path is left out of the graph entirely; its value
  // is still reported.
  Var l_total = alpha_eff == 0.0 ? l_rec : t.add_scaled(l_rec, l_cyc, alpha_eff);
  t.backward(l_total);

  std::vector<Mat> ge;
  for (auto v : pe) ge.push_back(t.grad(v));
  opt.step(encoder.params(), ge);

  LossReport r;
  r.step = ++step_count;
  r.l_rec = t.scalar(l_rec);
  r.l_cyc = t.scalar(l_cyc);
  r.l_total = t.scalar(l_total);
  r.variant = cfg.variant;
  for (int i = 0; i < K; ++i)
    r.per_speaker.push_back({heads[i].spk->id, t.scalar(heads[i].rec_loss), cyc_by_head[i]});
  return r;
}

void Stage2Trainer::run(int steps, LossLogger* logger, std::vector<LossReport>* trace) {
  for (int i = 0; i < steps; ++i) {
    LossReport r = step();
    if (logger) logger->log(r);
    if (trace) trace->push_back(std::move(r));
  }
}

MultiHeadModel Stage2Trainer::to_model() const {
  MultiHeadModel m;
  m.encoder = encoder;
  m.decoders = decoders;
  return m;
}

// --- stage 3 -----------------------------------------------------------------

Stage3Trainer::Stage3Trainer(const SpeakerData* data, nn::EncoderNet frozen_encoder,
                             const nn::DecoderConfig& dc, const TrainConfig& tc, Stage3Init init,
                             const nn::DecoderNet* finetune_from)
    : encoder(std::move(frozen_encoder)),
      decoder(init == Stage3Init::Finetune && finetune_from
                  ? *finetune_from
                  : nn::DecoderNet(dc, derive_seed(tc.seed, "stage3-dec-" + data->id))),
      dec_opt(tc.adam(), decoder.params()),
      data_rng(derive_seed(tc.seed, "stage3-data-" + data->id)),
      cfg(tc),
      data_(data) {
  cfg.validate();
  require(init == Stage3Init::Fresh || finetune_from != nullptr,
          "stage 3 finetune requires an existing decoder");
  require(data_ != nullptr && !data_->train_segments.empty(), "stage 3: empty corpus");
  require(decoder.config().code_dim == encoder.config().code_dim,
          "stage 3: encoder/decoder code_dim mismatch");
}

LossReport Stage3Trainer::step() {
  int F = 0;
  const Mat batch = sample_batch(*data_, cfg.batch_segments, data_rng, &F);
  const Layout lay{F, cfg.batch_segments};
  const int stride = encoder.config().code_stride;

  Tape t;
  auto pe = encoder.param_vars(t, /*frozen=*/true);
  auto pd = decoder.param_vars(t);
  Var in = t.constant(batch);
  Var z = encoder.build(t, pe, in, lay, Mode::Train, false);
  Var rec = decoder.build(t, pd, z, stride, Layout{F / stride, cfg.batch_segments}, Mode::Train,
                          true);
  Var loss = t.mse_to(rec, batch, cfg.reduction);
  t.backward(loss);

  std::vector<Mat> gd;
  for (auto v : pd) gd.push_back(t.grad(v));
  dec_opt.step(decoder.params(), gd);

  LossReport r;
  r.step = ++step_count;
  r.l_rec = t.scalar(loss);
  r.l_cyc = 0.0;
  r.l_total = r.l_rec;
  r.variant = cfg.variant;
  r.per_speaker = {{data_->id, r.l_rec, 0.0}};
  return r;
}

void Stage3Trainer::run(int steps, LossLogger* logger, std::vector<LossReport>* trace) {
  for (int i = 0; i < steps; ++i) {
    LossReport r = step();
    if (logger) logger->log(r);
    if (trace) trace->push_back(std::move(r));
  }
}

}  // namespace ceae
