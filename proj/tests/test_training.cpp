#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ceae/checkpoint.hpp"
#include "ceae/losses.hpp"
#include "ceae/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ceae;
namespace fs = std::filesystem;

namespace {

nn::EncoderConfig mini_encoder() {
  nn::EncoderConfig c;
  c.conv_layers = 1;
  c.conv_channels = 8;
  c.recurrent_layers = 1;
  c.recurrent_hidden = 4;
  c.code_dim = 4;
  c.code_stride = 4;
  return c;
}

nn::DecoderConfig mini_decoder() {
  nn::DecoderConfig c;
  c.code_dim = 4;
  c.pre_recurrent_channels = 8;
  c.conv_layers = 1;
  c.conv_channels = 8;
  c.post_recurrent_channels = 8;
  c.post_recurrent_layers = 1;
  return c;
}

MelDataset mini_dataset(uint64_t seed, int segments = 6, int frames = 32) {
  MelDataset ds;
  ds.segment_frames = frames;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.5);
  for (const std::string id : {"alpha", "beta"}) {
    SpeakerData spk;
    spk.id = id;
    for (int s = 0; s < segments; ++s) {
      Mat m(80, frames);
      for (long c = 0; c < m.cols(); ++c)
        for (long r = 0; r < m.rows(); ++r) m(r, c) = d(rng);
      spk.train_segments.push_back(std::move(m));
    }
    ds.speakers.push_back(std::move(spk));
  }
  return ds;
}

TrainConfig mini_train(Variant v = Variant::Cycle) {
  TrainConfig tc;
  tc.seed = 7;
  tc.variant = v;
  return tc;
}

std::map<std::string, nn::DecoderNet> mini_decoders(const MelDataset& ds, uint64_t seed) {
  std::map<std::string, nn::DecoderNet> out;
  for (const auto& s : ds.speakers) out.emplace(s.id, nn::DecoderNet(mini_decoder(), seed++));
  return out;
}

}  // namespace

TEST_CASE("loss_rec worked examples") {
  Mat a(1, 2);
  a << 1.0, 2.0;
  const Mat zero12 = Mat::Zero(1, 2);
  CHECK(nn::loss_rec({zero12}, {zero12}) == 0.0);
  CHECK(nn::loss_rec({a}, {zero12}) == doctest::Approx(2.5));  // (1+4)/2
  // Two pairs with per-pair means p and q sum.
  Mat b = Mat::Constant(2, 2, 3.0);
  const double two = nn::loss_rec({a, b}, {zero12, Mat::Zero(2, 2)});
  CHECK(two == doctest::Approx(2.5 + 9.0));
  CHECK(nn::loss_rec({a}, {zero12}, nn::Reduction::Sum) == doctest::Approx(5.0));
  CHECK_THROWS_AS(nn::loss_rec({a}, {Mat::Zero(2, 2)}), ValueError);
}

TEST_CASE("loss_cyc worked examples") {
  Mat diff(2, 2);
  diff << 1.0, 1.0, 2.0, 2.0;
  const Mat zero = Mat::Zero(2, 2);
  CHECK(nn::loss_cyc({zero}, {zero}) == 0.0);  // the cycle optimum
  CHECK(nn::loss_cyc({diff}, {zero}) == doctest::Approx(2.5));
  CHECK(nn::loss_cyc({Mat::Constant(3, 4, 1.0)}, {Mat::Zero(3, 4)}) == doctest::Approx(1.0));
}

TEST_CASE("loss_total worked examples") {
  CHECK(nn::loss_total(2.5, 0.0, 10.0) == 2.5);
  CHECK(nn::loss_total(2.5, 2.5, 10.0) == 27.5);
  CHECK(nn::loss_total(0.0, 1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(nn::loss_total(1.0 / 0.0, 0.0, 1.0), ValueError);
}

TEST_CASE("adam worked examples") {
  nn::ParamStore store;
  store.add("p", Mat::Constant(1, 1, 5.0));
  nn::Adam opt(nn::AdamConfig{1e-3, 0.9, 0.999, 1e-8}, store);

  SUBCASE("zero gradient leaves parameters unchanged but advances time") {
    opt.step(store, {Mat::Zero(1, 1)});
    CHECK(store.values[0](0, 0) == 5.0);
    CHECK(opt.t == 1);
  }

  SUBCASE("first unit-gradient step moves by about lr") {
    opt.step(store, {Mat::Constant(1, 1, 1.0)});
    CHECK(std::abs(5.0 - store.values[0](0, 0)) == doctest::Approx(1e-3).epsilon(1e-4));
  }

  SUBCASE("non-finite gradients reject the step") {
    CHECK_THROWS_AS(opt.step(store, {Mat::Constant(1, 1, std::nan(""))}), NumericError);
    CHECK(store.values[0](0, 0) == 5.0);  // untouched
  }

  SUBCASE("deterministic across reruns") {
    nn::ParamStore s2;
    s2.add("p", Mat::Constant(1, 1, 5.0));
    nn::Adam o2(nn::AdamConfig{1e-3, 0.9, 0.999, 1e-8}, s2);
    for (int i = 0; i < 5; ++i) {
      opt.step(store, {Mat::Constant(1, 1, 0.3)});
      o2.step(s2, {Mat::Constant(1, 1, 0.3)});
    }
    CHECK(store.values[0] == s2.values[0]);
  }
}

TEST_CASE("stage 1: zero steps equals initialization, runs are deterministic") {
  const MelDataset ds = mini_dataset(1);
  const TrainConfig tc = mini_train(Variant::Vanilla);

  Stage1Trainer t1(&ds.speakers[0], mini_encoder(), mini_decoder(), tc);
  const nn::EncoderNet fresh_enc(mini_encoder(),
                                 derive_seed(tc.seed, "stage1-enc-" + ds.speakers[0].id));
  CHECK(t1.encoder.params().content_hash() == fresh_enc.params().content_hash());

  std::vector<LossReport> trace1, trace2;
  t1.run(30, nullptr, &trace1);
  Stage1Trainer t2(&ds.speakers[0], mini_encoder(), mini_decoder(), tc);
  t2.run(30, nullptr, &trace2);
  for (int i = 0; i < 30; ++i) {
    CHECK(trace1[i].l_total == trace2[i].l_total);
    CHECK(trace1[i].l_total == trace1[i].l_rec);  // identity with l_cyc == 0
  }
  CHECK(t1.encoder.state_hash() == t2.encoder.state_hash());
  CHECK(trace1.back().l_rec < trace1.front().l_rec);
}

TEST_CASE("stage 2 freeze contract over 1000 steps") {
  const MelDataset ds = mini_dataset(2);
  Stage2Trainer tr(&ds, mini_decoders(ds, 100), mini_encoder(), mini_train());
  std::vector<uint64_t> before;
  for (const auto& [id, d] : tr.decoders) before.push_back(d.state_hash());
  const uint64_t enc_before = tr.encoder.state_hash();
  tr.run(1000);
  size_t i = 0;
  for (const auto& [id, d] : tr.decoders) CHECK(d.state_hash() == before[i++]);
  CHECK(tr.encoder.state_hash() != enc_before);  // the encoder did move
}

TEST_CASE("stage 2 loss identity and per-speaker breakdown") {
  const MelDataset ds = mini_dataset(3);
  for (Variant v : {Variant::Cycle, Variant::EncoderShareOnly, Variant::DataCycle}) {
    CAPTURE(variant_name(v));
    Stage2Trainer tr(&ds, mini_decoders(ds, 55), mini_encoder(), mini_train(v));
    for (int s = 0; s < 5; ++s) {
      const LossReport r = tr.step();
      const double alpha_eff = v == Variant::EncoderShareOnly ? 0.0 : tr.cfg.alpha;
      const double expect = nn::loss_total(r.l_rec, r.l_cyc, alpha_eff);
      CHECK(std::abs(r.l_total - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
      CHECK(r.variant == v);
      CHECK(r.l_cyc > 0.0);  // logged even when not optimized

      double rec_sum = 0.0, cyc_sum = 0.0;
      for (const auto& ps : r.per_speaker) {
        rec_sum += ps.l_rec;
        cyc_sum += ps.l_cyc;
      }
      CHECK(rec_sum == doctest::Approx(r.l_rec).epsilon(1e-12));
      CHECK(cyc_sum == doctest::Approx(r.l_cyc).epsilon(1e-9));
    }
  }
}

TEST_CASE("alpha gate: encoder_share_only optimizes reconstruction only") {
  const MelDataset ds = mini_dataset(4);
  TrainConfig share = mini_train(Variant::EncoderShareOnly);
  Stage2Trainer a(&ds, mini_decoders(ds, 200), mini_encoder(), share);

  TrainConfig zero_alpha = mini_train(Variant::Cycle);
  zero_alpha.alpha = 0.0;
  Stage2Trainer b(&ds, mini_decoders(ds, 200), mini_encoder(), zero_alpha);

  TrainConfig full = mini_train(Variant::Cycle);
  Stage2Trainer c(&ds, mini_decoders(ds, 200), mini_encoder(), full);

  a.run(10);
  b.run(10);
  c.run(10);
  // alpha == 0 cycle reduces to encoder sharing only.
  CHECK(a.encoder.params().content_hash() == b.encoder.params().content_hash());
  // the cycle gradient actually changes the trajectory
  CHECK(a.encoder.params().content_hash() != c.encoder.params().content_hash());
}

TEST_CASE("gradient of the cycle loss with respect to E_c is nonzero") {
  const MelDataset ds = mini_dataset(5);
  nn::EncoderNet enc(mini_encoder(), 9);
  auto decoders = mini_decoders(ds, 77);

  nn::Tape t;
  auto pe = enc.param_vars(t);
  std::map<std::string, std::vector<nn::Var>> pd;
  for (auto& [id, d] : decoders) pd[id] = d.param_vars(t, true);

  const nn::Layout lay{32, 1};
  const nn::Layout code_lay{8, 1};
  nn::Var m1 = t.constant(ds.speakers[0].train_segments[0]);
  nn::Var m2 = t.constant(ds.speakers[1].train_segments[0]);
  nn::Var z1 = enc.build(t, pe, m1, lay, nn::Mode::Train, false);
  nn::Var z2 = enc.build(t, pe, m2, lay, nn::Mode::Train, false);
  auto& d1 = decoders.at(ds.speakers[0].id);
  auto& d2 = decoders.at(ds.speakers[1].id);
  nn::Var x12 = d2.build(t, pd.at(ds.speakers[1].id), z1, 4, code_lay, nn::Mode::Train, false);
  nn::Var x21 = d1.build(t, pd.at(ds.speakers[0].id), z2, 4, code_lay, nn::Mode::Train, false);
  nn::Var zh12 = enc.build(t, pe, x12, lay, nn::Mode::Train, false);
  nn::Var zh21 = enc.build(t, pe, x21, lay, nn::Mode::Train, false);
  nn::Var l_cyc = t.add(t.mse(zh12, z1), t.mse(zh21, z2));
  t.backward(l_cyc);

  double grad_norm = 0.0;
  for (auto v : pe) grad_norm += t.grad(v).squaredNorm();
  CHECK(grad_norm > 1e-12);  // the re-encoding path is differentiated through
}

TEST_CASE("stage 3 freezes the encoder and trains only the decoder") {
  const MelDataset ds = mini_dataset(6);
  nn::EncoderNet frozen(mini_encoder(), 123);
  const uint64_t enc_hash = frozen.state_hash();

  Stage3Trainer fresh(&ds.speakers[1], frozen, mini_decoder(), mini_train(Variant::Cycle),
                      Stage3Init::Fresh);
  std::vector<LossReport> trace;
  fresh.run(40, nullptr, &trace);
  CHECK(fresh.encoder.state_hash() == enc_hash);
  CHECK(trace.back().l_rec < trace.front().l_rec);

  // Finetune init starts from the provided decoder.
  nn::DecoderNet base(mini_decoder(), 321);
  const uint64_t base_hash = base.params().content_hash();
  Stage3Trainer tuned(&ds.speakers[1], frozen, mini_decoder(), mini_train(Variant::Cycle),
                      Stage3Init::Finetune, &base);
  CHECK(tuned.decoder.params().content_hash() == base_hash);
  CHECK_THROWS_AS(Stage3Trainer(&ds.speakers[1], frozen, mini_decoder(),
                                mini_train(Variant::Cycle), Stage3Init::Finetune, nullptr),
                  ValueError);
}

TEST_CASE("data cycle penalty is zero for perfect-reconstruction stub decoders") {
  // Full-rank signed selection with zero offsets: decode(encode(m)) == m.
  auto stub = LinearStubModel::make(16, 16, 1, {"a", "b"}, 5, /*zero_offsets=*/true);
  std::mt19937_64 rng(6);
  Mat m(16, 8);
  std::normal_distribution<double> d(0.0, 1.0);
  for (long c = 0; c < m.cols(); ++c)
    for (long r = 0; r < m.rows(); ++r) m(r, c) = d(rng);
  CHECK(data_cycle_penalty(stub, m, "a", "b") == 0.0);
  CHECK(data_cycle_penalty(stub, m, "b", "a") == 0.0);
}

TEST_CASE("stage 2 trainer rejects bad setups") {
  const MelDataset ds = mini_dataset(8);
  auto one = mini_decoders(ds, 1);
  one.erase("beta");
  CHECK_THROWS_AS(Stage2Trainer(&ds, std::move(one), mini_encoder(), mini_train()), ValueError);
  CHECK_THROWS_AS(Stage2Trainer(&ds, mini_decoders(ds, 1), mini_encoder(),
                                mini_train(Variant::Vanilla)),
                  ValueError);
}

TEST_CASE("checkpoint round trip, resume, and corruption detection") {
  const MelDataset ds = mini_dataset(9);
  const auto dir = fs::temp_directory_path() / "ceae_train_test";
  fs::create_directories(dir);
  const std::string path = (dir / "s2.ckpt").string();

  Stage2Trainer straight(&ds, mini_decoders(ds, 42), mini_encoder(), mini_train());
  std::vector<LossReport> full;
  straight.run(20, nullptr, &full);

  Stage2Trainer part(&ds, mini_decoders(ds, 42), mini_encoder(), mini_train());
  part.run(10);
  save_checkpoint(path, CheckpointCodec::from_stage2(part, "{}"));

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.stage == "stage2");
  CHECK(ck.step == 10);
  Stage2Trainer resumed = CheckpointCodec::to_stage2(ck, &ds);
  CHECK(resumed.encoder.state_hash() == part.encoder.state_hash());  // arrays bit-equal

  std::vector<LossReport> tail;
  resumed.run(10, nullptr, &tail);
  for (int i = 0; i < 10; ++i) {
    CHECK(tail[i].l_total == full[10 + i].l_total);
    CHECK(tail[i].l_rec == full[10 + i].l_rec);
    CHECK(tail[i].l_cyc == full[10 + i].l_cyc);
  }

  SUBCASE("corrupted byte fails the checksum") {
    std::string bytes = read_file_bytes(path);
    bytes[bytes.size() / 2] ^= 0x40;
    const std::string bad = (dir / "bad.ckpt").string();
    write_file_bytes(bad, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("checksum"), ValueError);
  }

  SUBCASE("version mismatch is rejected") {
    std::string bytes = read_file_bytes(path);
    bytes[4] = 9;  // format_version field
    const std::string bad = (dir / "vers.ckpt").string();
    write_file_bytes(bad, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("version"), ValueError);
  }

  fs::remove_all(dir);
}

TEST_CASE("loss log CSV is written and flushed per step") {
  const MelDataset ds = mini_dataset(10);
  const auto dir = fs::temp_directory_path() / "ceae_log_test";
  fs::create_directories(dir);
  const std::string path = (dir / "loss.csv").string();
  {
    Stage1Trainer tr(&ds.speakers[0], mini_encoder(), mini_decoder(),
                     mini_train(Variant::Vanilla));
    LossLogger log(path);
    tr.run(3, &log);

    // Flushed every step: readable while the logger is still alive.
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 4);
  }
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,variant,l_rec,l_cyc,l_total");
  fs::remove_all(dir);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.alpha = -1.0;
  CHECK_THROWS_AS(tc.validate(), ValueError);
  tc = TrainConfig{};
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), ValueError);
}
