#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ceae/gradcheck.hpp"
#include "ceae/nn.hpp"

#include <random>

using namespace ceae;
using namespace ceae::nn;

namespace {

Mat random_mel(long rows, long cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 2.0);
  Mat m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) m(r, c) = d(rng);
  return m;
}

}  // namespace

TEST_CASE("init is deterministic with zero biases") {
  const EncoderConfig cfg = EncoderConfig::desk();
  EncoderNet a(cfg, 42), b(cfg, 42), c(cfg, 43);
  CHECK(a.params().content_hash() == b.params().content_hash());
  CHECK(a.params().content_hash() != c.params().content_hash());

  for (size_t i = 0; i < a.params().names.size(); ++i)
    if (a.params().names[i].ends_with(".b") || a.params().names[i].ends_with(".bh"))
      CHECK(a.params().values[i].isZero());

  DecoderNet d1(DecoderConfig::desk(), 7), d2(DecoderConfig::desk(), 7);
  CHECK(d1.params().content_hash() == d2.params().content_hash());
}

TEST_CASE("desk encoder parameter count matches the closed-form sum") {
  const EncoderConfig cfg = EncoderConfig::desk();
  EncoderNet net(cfg, 1);
  // conv0: 48 x (80*5) + 48; conv1: 48 x (48*5) + 48;
  // one bi-LSTM layer, 4 hidden per direction: per direction
  // wx 16x48, wh 16x4, b 16.
  const size_t conv0 = 48 * 80 * 5 + 48;
  const size_t conv1 = 48 * 48 * 5 + 48;
  const size_t dir = 16 * 48 + 16 * 4 + 16;
  CHECK(net.params().parameter_count() == conv0 + conv1 + 2 * dir);
}

TEST_CASE("paper configs build and satisfy the shape contracts") {
  const EncoderConfig ec = EncoderConfig::paper();
  const DecoderConfig dc = DecoderConfig::paper();
  ec.validate();
  dc.validate();
  EncoderNet enc(ec, 3);
  DecoderNet dec(dc, 3);
  const Mat mel = random_mel(80, 32, 5);
  const ContentCode code = enc.forward(mel);
  CHECK(code.values.rows() == 32);
  CHECK(code.values.cols() == 8);
  const MelSpectrogram out = dec.forward(code);
  CHECK(out.values.rows() == 80);
  CHECK(out.values.cols() == 32);
}

TEST_CASE("encoder forward shape, determinism, and zero-input smoke") {
  EncoderNet enc(EncoderConfig::desk(), 11);
  const Mat mel = random_mel(80, 128, 6);
  const ContentCode z1 = enc.forward(mel);
  CHECK(z1.values.rows() == 8);
  CHECK(z1.values.cols() == 32);
  CHECK(z1.stride == 4);
  const ContentCode z2 = enc.forward(mel);
  CHECK(z1.values == z2.values);  // pure function

  const ContentCode z0 = enc.forward(Mat::Zero(80, 128).eval());
  CHECK(z0.values.allFinite());
  const ContentCode z0b = enc.forward(Mat::Zero(80, 128).eval());
  CHECK(z0.values == z0b.values);

  CHECK_THROWS_AS(enc.forward(Mat::Zero(40, 128).eval()), ValueError);
  CHECK_THROWS_AS(enc.forward(Mat::Zero(80, 130).eval()), ValueError);  // not stride-divisible
}

TEST_CASE("decoder upsampling and composability across random configs") {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 6; ++k) {
    EncoderConfig ec;
    ec.conv_layers = 1 + static_cast<int>(rng() % 2);
    ec.conv_channels = 8 + static_cast<int>(rng() % 8);
    ec.recurrent_layers = 1 + static_cast<int>(rng() % 2);
    ec.recurrent_hidden = 4 + 2 * static_cast<int>(rng() % 3);
    ec.code_dim = ec.recurrent_hidden;
    ec.code_stride = (rng() % 2) ? 2 : 4;
    DecoderConfig dc;
    dc.code_dim = ec.code_dim;
    dc.pre_recurrent_channels = 8;
    dc.conv_layers = 1 + static_cast<int>(rng() % 2);
    dc.conv_channels = 8;
    dc.post_recurrent_channels = 8;
    dc.post_recurrent_layers = 1;

    const int T = ec.code_stride * (4 + static_cast<int>(rng() % 5));
    EncoderNet enc(ec, rng());
    DecoderNet dec(dc, rng());
    const Mat mel = random_mel(80, T, rng());
    const ContentCode z = enc.forward(mel);
    CHECK(z.values.rows() == ec.code_dim);
    CHECK(z.values.cols() == T / ec.code_stride);
    const MelSpectrogram rec = dec.forward(z);
    CHECK(rec.values.rows() == 80);
    CHECK(rec.values.cols() == T);
    CHECK(rec.values.allFinite());
  }
}

TEST_CASE("config validation rejects bad combinations") {
  EncoderConfig bad = EncoderConfig::desk();
  bad.kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = EncoderConfig::desk();
  bad.code_stride = 7;  // does not divide 128
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = EncoderConfig::desk();
  bad.code_dim = 6;  // != recurrent_hidden
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = EncoderConfig::desk();
  bad.recurrent_hidden = 7;  // odd, cannot split directions
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("inference mode uses running statistics and mutates nothing") {
  EncoderNet enc(EncoderConfig::desk(), 17);
  const Mat mel = random_mel(80, 64, 18);

  const uint64_t before = enc.state_hash();
  (void)enc.forward(mel, Mode::Eval);
  CHECK(enc.state_hash() == before);  // eval never updates stats

  // A training pass with stat updates changes the running buffers but not
  // the parameters.
  Tape t;
  auto p = enc.param_vars(t);
  Var in = t.constant(mel);
  (void)enc.build(t, p, in, Layout{64, 1}, Mode::Train, true);
  CHECK(enc.state_hash() != before);
  CHECK(enc.params().content_hash() != 0);

  // Eval output differs from train output once the stats moved.
  const ContentCode train_code = enc.forward(mel, Mode::Train);
  const ContentCode eval_code = enc.forward(mel, Mode::Eval);
  CHECK(train_code.values != eval_code.values);
}

TEST_CASE("gradient checks pass for the GRU cell variant") {
  EncoderConfig ec = EncoderConfig::desk();
  ec.cell = CellType::Gru;
  DecoderConfig dc = DecoderConfig::desk();
  dc.cell = CellType::Gru;
  const auto rec = grad_check(ec, dc, LossPath::Reconstruction, 21, 80);
  CHECK(rec.max_rel_err < 1e-4);
  const auto cyc = grad_check(ec, dc, LossPath::Cycle, 22, 80);
  CHECK(cyc.max_rel_err < 1e-4);
}

TEST_CASE("grad_check negative control trips the bound") {
  const auto report = grad_check(EncoderConfig::desk(), DecoderConfig::desk(),
                                 LossPath::Reconstruction, 23, 40, 1e-5, 1.0);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("pad_frames_to_stride repeats the last frame") {
  const Mat m = random_mel(4, 10, 31);
  const Mat padded = pad_frames_to_stride(m, 4);
  CHECK(padded.cols() == 12);
  CHECK(padded.col(10) == m.col(9));
  CHECK(padded.col(11) == m.col(9));
  CHECK(pad_frames_to_stride(m, 5).cols() == 10);
}
