#include "ceae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ceae::nn {

namespace {

constexpr int kCheckFrames = 32;

struct CheckContext {
  EncoderNet enc;
  DecoderNet d1, d2;
  Mat m1, m2;
  Layout lay{kCheckFrames, 1};

  CheckContext(const EncoderConfig& ec, const DecoderConfig& dc, uint64_t seed)
      : enc(ec, derive_seed(seed, "gc-enc")),
        d1(dc, derive_seed(seed, "gc-dec1")),
        d2(dc, derive_seed(seed, "gc-dec2")) {
    Rng rng(derive_seed(seed, "gc-input"));
    std::normal_distribution<double> normal(0.0, 2.0);
    m1.resize(ec.in_mels, kCheckFrames);
    m2.resize(ec.in_mels, kCheckFrames);
    for (long c = 0; c < m1.cols(); ++c)
      for (long r = 0; r < m1.rows(); ++r) {
        m1(r, c) = normal(rng);
        m2(r, c) = normal(rng);
      }
  }
};

/// Builds the loss graph; outputs leaf vars for the stores under test.
Var build_loss(CheckContext& ctx, LossPath path, Tape& t, std::vector<std::vector<Var>>& leaves) {
  const int stride = ctx.enc.config().code_stride;
  Var in1 = t.constant(ctx.m1);
  Var in2 = t.constant(ctx.m2);
  const Layout code_lay{ctx.lay.frames / stride, 1};

  if (path == LossPath::Reconstruction) {
    auto pe = ctx.enc.param_vars(t);
    auto p1 = ctx.d1.param_vars(t);
    auto p2 = ctx.d2.param_vars(t);
    Var z1 = ctx.enc.build(t, pe, in1, ctx.lay, Mode::Train, false);
    Var z2 = ctx.enc.build(t, pe, in2, ctx.lay, Mode::Train, false);
    Var r1 = ctx.d1.build(t, p1, z1, stride, code_lay, Mode::Train, false);
    Var r2 = ctx.d2.build(t, p2, z2, stride, code_lay, Mode::Train, false);
    Var loss = t.add(t.mse_to(r1, ctx.m1), t.mse_to(r2, ctx.m2));
    leaves = {pe, p1, p2};
    return loss;
  }

  // Cycle: decoders frozen, gradient flows through them into the encoder,
  // exactly as in stage-2 training.
  auto pe = ctx.enc.param_vars(t);
  auto p1 = ctx.d1.param_vars(t, /*frozen=*/true);
  auto p2 = ctx.d2.param_vars(t, /*frozen=*/true);
  Var z1 = ctx.enc.build(t, pe, in1, ctx.lay, Mode::Train, false);
  Var z2 = ctx.enc.build(t, pe, in2, ctx.lay, Mode::Train, false);
  Var x12 = ctx.d2.build(t, p2, z1, stride, code_lay, Mode::Train, false);
  Var x21 = ctx.d1.build(t, p1, z2, stride, code_lay, Mode::Train, false);
  Var zh12 = ctx.enc.build(t, pe, x12, ctx.lay, Mode::Train, false);
  Var zh21 = ctx.enc.build(t, pe, x21, ctx.lay, Mode::Train, false);
  Var loss = t.add(t.mse(zh12, z1), t.mse(zh21, z2));
  leaves = {pe};
  return loss;
}

std::vector<ParamStore*> stores_under_test(CheckContext& ctx, LossPath path) {
  if (path == LossPath::Reconstruction)
    return {&ctx.enc.params(), &ctx.d1.params(), &ctx.d2.params()};
  return {&ctx.enc.params()};
}

double eval_loss(CheckContext& ctx, LossPath path) {
  Tape t;
  std::vector<std::vector<Var>> leaves;
  Var loss = build_loss(ctx, path, t, leaves);
  return t.scalar(loss);
}

}  // namespace

GradCheckReport grad_check(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                           LossPath path, uint64_t seed, int coords, double epsilon,
                           double corruption) {
  enc_cfg.validate();
  dec_cfg.validate();
  require(dec_cfg.code_dim == enc_cfg.code_dim, "grad_check: code_dim mismatch");
  CheckContext ctx(enc_cfg, dec_cfg, seed);

  // Analytic gradients in one backward pass.
  std::vector<std::vector<Mat>> analytic;
  {
    Tape t;
    std::vector<std::vector<Var>> leaves;
    Var loss = build_loss(ctx, path, t, leaves);
    t.backward(loss);
    const auto stores = stores_under_test(ctx, path);
    for (size_t s = 0; s < stores.size(); ++s) {
      std::vector<Mat> gs;
      for (size_t i = 0; i < stores[s]->values.size(); ++i) gs.push_back(t.grad(leaves[s][i]));
      analytic.push_back(std::move(gs));
    }
  }

  auto stores = stores_under_test(ctx, path);
  size_t total = 0;
  for (auto* s : stores) total += s->parameter_count();

  Rng rng(derive_seed(seed, "gc-coords"));
  GradCheckReport report;
  report.coords_checked = coords;
  for (int k = 0; k < coords; ++k) {
    size_t flat = std::uniform_int_distribution<size_t>(0, total - 1)(rng);
    size_t store_idx = 0, param_idx = 0;
    for (; store_idx < stores.size(); ++store_idx) {
      bool found = false;
      for (param_idx = 0; param_idx < stores[store_idx]->values.size(); ++param_idx) {
        const size_t n = static_cast<size_t>(stores[store_idx]->values[param_idx].size());
        if (flat < n) {
          found = true;
          break;
        }
        flat -= n;
      }
      if (found) break;
    }

    double* cell = stores[store_idx]->values[param_idx].data() + flat;
    const double saved = *cell;
    *cell = saved + epsilon;
    const double up = eval_loss(ctx, path);
    *cell = saved - epsilon;
    const double down = eval_loss(ctx, path);
    *cell = saved;

    const double fd = (up - down) / (2.0 * epsilon);
    double an = analytic[store_idx][param_idx](static_cast<long>(flat));
    if (k == 0 && corruption != 0.0) an += corruption;
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  return report;
}

}  // namespace ceae::nn
