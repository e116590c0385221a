#include "ceae/tape.hpp"

#include <cmath>
#include <memory>

namespace ceae::nn {

namespace {

inline Mat sigmoid(const Mat& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

void check_layout(const Mat& x, Layout lay, const char* op) {
  require(lay.frames >= 1 && lay.segments >= 1 && x.cols() == lay.cols(),
          std::string(op) + ": layout does not match column count");
}

}  // namespace

void Tape::reset() { nodes_.clear(); }

Var Tape::push(Mat value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Mat* external) {
  Node n;
  n.external = external;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::frozen_param(const Mat* external) {
  Node n;
  n.external = external;
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return push(std::move(value), false); }

const Mat& Tape::val(Var v) const { return nodes_.at(v.id).val(); }

Mat Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.gradient.size() == 0) return Mat::Zero(n.val().rows(), n.val().cols());
  return n.gradient;
}

void Tape::accum(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.gradient.size() == 0)
    n.gradient = g;
  else
    n.gradient += g;
  n.reached = true;
}

void Tape::backward(Var loss) {
  const Mat& lv = val(loss);
  require(lv.rows() == 1 && lv.cols() == 1, "backward: loss must be scalar");
  if (!std::isfinite(lv(0, 0)))
    throw NumericError("non-finite loss value: " + std::to_string(lv(0, 0)));
  for (auto& n : nodes_) {
    n.gradient.resize(0, 0);
    n.reached = false;
  }
  nodes_[loss.id].gradient = Mat::Ones(1, 1);
  nodes_[loss.id].reached = true;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.reached && n.back) n.back();
  }
}

// --- elementwise / linear ---------------------------------------------------

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a), val(b), "add");
  Var out = push(val(a) + val(b), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const Mat& g = nodes_[out.id].gradient;
      accum(a.id, g);
      accum(b.id, g);
    };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a), val(b), "sub");
  Var out = push(val(a) - val(b), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const Mat& g = nodes_[out.id].gradient;
      accum(a.id, g);
      accum(b.id, -g);
    };
  return out;
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(val(a), val(b), "hadamard");
  Var out = push(val(a).cwiseProduct(val(b)), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const Mat& g = nodes_[out.id].gradient;
      if (req(a)) accum(a.id, g.cwiseProduct(val(b)));
      if (req(b)) accum(b.id, g.cwiseProduct(val(a)));
    };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(val(a) * s, req(a));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, s, out] { accum(a.id, nodes_[out.id].gradient * s); };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  require(val(a).cols() == val(b).rows(), "matmul: inner dimension mismatch");
  Var out = push(val(a) * val(b), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out] {
      const Mat& g = nodes_[out.id].gradient;
      if (req(a)) accum(a.id, g * val(b).transpose());
      if (req(b)) accum(b.id, val(a).transpose() * g);
    };
  return out;
}

Var Tape::add_bias(Var x, Var bias) {
  require(val(bias).cols() == 1 && val(bias).rows() == val(x).rows(),
          "add_bias: bias must be rows x 1");
  Mat y = val(x);
  y.colwise() += val(bias).col(0);
  Var out = push(std::move(y), req(x) || req(bias));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, bias, out] {
      const Mat& g = nodes_[out.id].gradient;
      accum(x.id, g);
      if (req(bias)) accum(bias.id, g.rowwise().sum());
    };
  return out;
}

Var Tape::relu(Var x) {
  Var out = push(val(x).cwiseMax(0.0), req(x));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, out] {
      const Mat mask = (val(x).array() > 0.0).cast<double>().matrix();
      accum(x.id, nodes_[out.id].gradient.cwiseProduct(mask));
    };
  return out;
}

Var Tape::concat_rows(Var a, Var b) {
  require(val(a).cols() == val(b).cols(), "concat_rows: column mismatch");
  const long ra = val(a).rows(), rb = val(b).rows();
  Mat y(ra + rb, val(a).cols());
  y.topRows(ra) = val(a);
  y.bottomRows(rb) = val(b);
  Var out = push(std::move(y), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out, ra, rb] {
      const Mat& g = nodes_[out.id].gradient;
      if (req(a)) accum(a.id, g.topRows(ra));
      if (req(b)) accum(b.id, g.bottomRows(rb));
    };
  return out;
}

// --- conv1d ------------------------------------------------------------------

Var Tape::conv1d(Var x, Var w, Var bias, int kernel, Layout lay) {
  const Mat& xv = val(x);
  check_layout(xv, lay, "conv1d");
  require(kernel % 2 == 1, "conv1d: kernel must be odd");
  const int cin = static_cast<int>(xv.rows());
  const int cout = static_cast<int>(val(w).rows());
  require(val(w).cols() == static_cast<long>(cin) * kernel, "conv1d: weight shape mismatch");
  require(val(bias).rows() == cout && val(bias).cols() == 1, "conv1d: bias shape mismatch");
  const int pad = (kernel - 1) / 2;
  const int F = lay.frames;

  // im2col per segment with zero padding; cached for the backward pass.
  auto patches = std::make_shared<std::vector<Mat>>();
  patches->reserve(lay.segments);
  Mat y(cout, xv.cols());
  for (int s = 0; s < lay.segments; ++s) {
    Mat p = Mat::Zero(static_cast<long>(cin) * kernel, F);
    const auto xs = xv.middleCols(static_cast<long>(s) * F, F);
    for (int k = 0; k < kernel; ++k) {
      const int shift = k - pad;
      const int lo = std::max(0, -shift), hi = std::min(F, F - shift);
      if (hi > lo)
        p.block(static_cast<long>(k) * cin, lo, cin, hi - lo) = xs.middleCols(lo + shift, hi - lo);
    }
    y.middleCols(static_cast<long>(s) * F, F).noalias() = val(w) * p;
    patches->push_back(std::move(p));
  }
  y.colwise() += val(bias).col(0);

  Var out = push(std::move(y), req(x) || req(w) || req(bias));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, w, bias, out, kernel, lay, pad, cin, patches] {
      const Mat& g = nodes_[out.id].gradient;
      const int F = lay.frames;
      if (req(bias)) accum(bias.id, g.rowwise().sum());
      if (req(w)) {
        Mat dw = Mat::Zero(val(w).rows(), val(w).cols());
        for (int s = 0; s < lay.segments; ++s)
          dw.noalias() += g.middleCols(static_cast<long>(s) * F, F) * (*patches)[s].transpose();
        accum(w.id, dw);
      }
      if (req(x)) {
        Mat dx = Mat::Zero(val(x).rows(), val(x).cols());
        for (int s = 0; s < lay.segments; ++s) {
          Mat dp = val(w).transpose() * g.middleCols(static_cast<long>(s) * F, F);
          auto dxs = dx.middleCols(static_cast<long>(s) * F, F);
          for (int k = 0; k < kernel; ++k) {
            const int shift = k - pad;
            const int lo = std::max(0, -shift), hi = std::min(F, F - shift);
            if (hi > lo)
              dxs.middleCols(lo + shift, hi - lo) +=
                  dp.block(static_cast<long>(k) * cin, lo, cin, hi - lo);
          }
        }
        accum(x.id, dx);
      }
    };
  return out;
}

// --- normalization -----------------------------------------------------------

namespace {

/// Shared core for instance/batch norm in training mode. Statistics are
/// taken over each row of a view; instance norm views one segment at a time,
/// batch norm the whole row.
struct NormCache {
  Mat x_hat;   // normalized values
  Mat inv_std; // channels x segments (instance) or channels x 1 (batch)
};

}  // namespace

Var Tape::instance_norm(Var x, Layout lay, NormState* state, bool training, bool update_stats,
                        double eps) {
  const Mat& xv = val(x);
  check_layout(xv, lay, "instance_norm");
  const int C = static_cast<int>(xv.rows());
  const int F = lay.frames;
  require(state != nullptr, "instance_norm: missing state");
  require(state->running_mean.size() == C, "instance_norm: state channel mismatch");

  if (!training) {
    const Vec istd = (state->running_var.array() + eps).sqrt().inverse().matrix();
    Mat y = (xv.colwise() - state->running_mean.col(0)).array().colwise() * istd.col(0).array();
    Var out = push(std::move(y), req(x));
    if (nodes_[out.id].requires_grad)
      nodes_[out.id].back = [this, x, out, istd] {
        accum(x.id, (nodes_[out.id].gradient.array().colwise() * istd.col(0).array()).matrix());
      };
    return out;
  }

  auto cache = std::make_shared<NormCache>();
  cache->x_hat.resize(C, xv.cols());
  cache->inv_std.resize(C, lay.segments);
  Vec batch_mean = Vec::Zero(C), batch_var = Vec::Zero(C);
  for (int s = 0; s < lay.segments; ++s) {
    const auto xs = xv.middleCols(static_cast<long>(s) * F, F);
    const Vec mu = xs.rowwise().mean();
    const Mat centered = xs.colwise() - mu;
    const Vec var = centered.array().square().rowwise().mean();
    const Vec istd = (var.array() + eps).sqrt().inverse().matrix();
    cache->x_hat.middleCols(static_cast<long>(s) * F, F) =
        centered.array().colwise() * istd.col(0).array();
    cache->inv_std.col(s) = istd;
    batch_mean += mu;
    batch_var += var;
  }
  if (update_stats) {
    const double m = state->momentum;
    state->running_mean = (1.0 - m) * state->running_mean + m * (batch_mean / lay.segments);
    state->running_var = (1.0 - m) * state->running_var + m * (batch_var / lay.segments);
  }

  Var out = push(cache->x_hat, req(x));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, out, lay, cache] {
      const Mat& g = nodes_[out.id].gradient;
      const int F = lay.frames;
      Mat dx(g.rows(), g.cols());
      for (int s = 0; s < lay.segments; ++s) {
        const auto gs = g.middleCols(static_cast<long>(s) * F, F);
        const auto xh = cache->x_hat.middleCols(static_cast<long>(s) * F, F);
        const Vec gmean = gs.rowwise().mean();
        const Vec gxmean = gs.cwiseProduct(xh).rowwise().mean();
        dx.middleCols(static_cast<long>(s) * F, F) =
            ((gs.colwise() - gmean) - (xh.array().colwise() * gxmean.col(0).array()).matrix())
                .array()
                .colwise() *
            cache->inv_std.col(s).array();
      }
      accum(x.id, dx);
    };
  return out;
}

Var Tape::batch_norm(Var x, Layout lay, NormState* state, bool training, bool update_stats,
                     double eps) {
  const Mat& xv = val(x);
  check_layout(xv, lay, "batch_norm");
  const int C = static_cast<int>(xv.rows());
  require(state != nullptr, "batch_norm: missing state");
  require(state->running_mean.size() == C, "batch_norm: state channel mismatch");

  if (!training) {
    const Vec istd = (state->running_var.array() + eps).sqrt().inverse().matrix();
    Mat y = (xv.colwise() - state->running_mean.col(0)).array().colwise() * istd.col(0).array();
    Var out = push(std::move(y), req(x));
    if (nodes_[out.id].requires_grad)
      nodes_[out.id].back = [this, x, out, istd] {
        accum(x.id, (nodes_[out.id].gradient.array().colwise() * istd.col(0).array()).matrix());
      };
    return out;
  }

  const Vec mu = xv.rowwise().mean();
  const Mat centered = xv.colwise() - mu;
  const Vec var = centered.array().square().rowwise().mean();
  const Vec istd = (var.array() + eps).sqrt().inverse().matrix();
  Mat x_hat = centered.array().colwise() * istd.col(0).array();
  if (update_stats) {
    const double m = state->momentum;
    state->running_mean = (1.0 - m) * state->running_mean + m * mu;
    state->running_var = (1.0 - m) * state->running_var + m * var;
  }

  auto cache = std::make_shared<NormCache>();
  cache->x_hat = x_hat;
  cache->inv_std = istd;
  Var out = push(std::move(x_hat), req(x));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, out, cache] {
      const Mat& g = nodes_[out.id].gradient;
      const Vec gmean = g.rowwise().mean();
      const Vec gxmean = g.cwiseProduct(cache->x_hat).rowwise().mean();
      Mat dx =
          ((g.colwise() - gmean) -
           (cache->x_hat.array().colwise() * gxmean.col(0).array()).matrix())
              .array()
              .colwise() *
          cache->inv_std.col(0).array();
      accum(x.id, dx);
    };
  return out;
}

// --- recurrent cells -----------------------------------------------------------

namespace {

struct LstmCache {
  Mat gates;  // 4H x T, activated [i; f; g; o]
  Mat c;      // H x T
  Mat tc;     // tanh(c)
};

struct GruCache {
  Mat r, z, n;  // H x T each
  Mat hh_n;     // Whn * h_prev + bhn
};

}  // namespace

Var Tape::lstm(Var x, Var wx, Var wh, Var bias, Layout lay, bool reverse) {
  const Mat& xv = val(x);
  check_layout(xv, lay, "lstm");
  const int H = static_cast<int>(val(wh).cols());
  require(val(wx).rows() == 4 * H && val(wh).rows() == 4 * H, "lstm: weight shape mismatch");
  require(val(wx).cols() == xv.rows(), "lstm: input dimension mismatch");
  require(val(bias).rows() == 4 * H && val(bias).cols() == 1, "lstm: bias shape mismatch");
  const int F = lay.frames;
  const long T = xv.cols();

  auto cache = std::make_shared<LstmCache>();
  cache->gates.resize(4 * H, T);
  cache->c.resize(H, T);
  cache->tc.resize(H, T);

  Mat pre = val(wx) * xv;  // one GEMM for all timesteps
  pre.colwise() += val(bias).col(0);

  Mat out_h(H, T);
  Vec h = Vec::Zero(H), c = Vec::Zero(H);
  for (int s = 0; s < lay.segments; ++s) {
    h.setZero();
    c.setZero();
    for (int k = 0; k < F; ++k) {
      const long t = static_cast<long>(s) * F + (reverse ? F - 1 - k : k);
      Vec a = pre.col(t) + val(wh) * h;
      Vec i = (1.0 / (1.0 + (-a.segment(0, H).array()).exp())).matrix();
      Vec f = (1.0 / (1.0 + (-a.segment(H, H).array()).exp())).matrix();
      Vec g = a.segment(2 * H, H).array().tanh().matrix();
      Vec o = (1.0 / (1.0 + (-a.segment(3 * H, H).array()).exp())).matrix();
      c = f.cwiseProduct(c) + i.cwiseProduct(g);
      Vec tc = c.array().tanh().matrix();
      h = o.cwiseProduct(tc);
      cache->gates.col(t) << i, f, g, o;
      cache->c.col(t) = c;
      cache->tc.col(t) = tc;
      out_h.col(t) = h;
    }
  }

  Var out = push(std::move(out_h), req(x) || req(wx) || req(wh) || req(bias));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, wx, wh, bias, out, lay, reverse, H, cache] {
      const Mat& gout = nodes_[out.id].gradient;
      const int F = lay.frames;
      const long T = gout.cols();
      Mat da_all = Mat::Zero(4 * H, T);
      Mat h_prev_all = Mat::Zero(H, T);
      const Mat& out_val = nodes_[out.id].value;
      const Mat& whv = val(wh);

      for (int s = 0; s < lay.segments; ++s) {
        Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
        for (int k = F - 1; k >= 0; --k) {
          const long t = static_cast<long>(s) * F + (reverse ? F - 1 - k : k);
          const bool has_prev = k > 0;
          const long t_prev =
              static_cast<long>(s) * F + (reverse ? F - k : k - 1);  // valid iff has_prev
          const auto i = cache->gates.col(t).segment(0, H).array();
          const auto f = cache->gates.col(t).segment(H, H).array();
          const auto g = cache->gates.col(t).segment(2 * H, H).array();
          const auto o = cache->gates.col(t).segment(3 * H, H).array();
          const auto tc = cache->tc.col(t).array();

          const Vec dh = gout.col(t) + dh_next;
          Vec dc = dc_next + (dh.array() * o * (1.0 - tc.square())).matrix();
          Vec da(4 * H);
          da.segment(0, H) = (dc.array() * g * i * (1.0 - i)).matrix();
          if (has_prev) {
            const auto c_prev = cache->c.col(t_prev).array();
            da.segment(H, H) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
            h_prev_all.col(t) = out_val.col(t_prev);
          } else {
            da.segment(H, H).setZero();  // c_prev == 0
          }
          da.segment(2 * H, H) = (dc.array() * i * (1.0 - g.square())).matrix();
          da.segment(3 * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
          da_all.col(t) = da;

          dc_next = (dc.array() * f).matrix();
          dh_next.noalias() = whv.transpose() * da;
        }
      }

      if (req(bias)) accum(bias.id, da_all.rowwise().sum());
      if (req(wx)) accum(wx.id, da_all * val(x).transpose());
      if (req(x)) accum(x.id, val(wx).transpose() * da_all);
      if (req(wh)) accum(wh.id, da_all * h_prev_all.transpose());
    };
  return out;
}

Var Tape::gru(Var x, Var wx, Var wh, Var bx, Var bh, Layout lay, bool reverse) {
  const Mat& xv = val(x);
  check_layout(xv, lay, "gru");
  const int H = static_cast<int>(val(wh).cols());
  require(val(wx).rows() == 3 * H && val(wh).rows() == 3 * H, "gru: weight shape mismatch");
  require(val(wx).cols() == xv.rows(), "gru: input dimension mismatch");
  const int F = lay.frames;
  const long T = xv.cols();

  auto cache = std::make_shared<GruCache>();
  cache->r.resize(H, T);
  cache->z.resize(H, T);
  cache->n.resize(H, T);
  cache->hh_n.resize(H, T);

  Mat pre = val(wx) * xv;
  pre.colwise() += val(bx).col(0);

  Mat out_h(H, T);
  Vec h = Vec::Zero(H);
  for (int s = 0; s < lay.segments; ++s) {
    h.setZero();
    for (int k = 0; k < F; ++k) {
      const long t = static_cast<long>(s) * F + (reverse ? F - 1 - k : k);
      Vec gh = val(wh) * h + val(bh).col(0);
      Vec r = (1.0 / (1.0 + (-(pre.col(t).segment(0, H) + gh.segment(0, H)).array()).exp()));
      Vec z = (1.0 / (1.0 + (-(pre.col(t).segment(H, H) + gh.segment(H, H)).array()).exp()));
      Vec hh_n = gh.segment(2 * H, H);
      Vec n = (pre.col(t).segment(2 * H, H) + r.cwiseProduct(hh_n)).array().tanh().matrix();
      h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
      cache->r.col(t) = r;
      cache->z.col(t) = z;
      cache->n.col(t) = n;
      cache->hh_n.col(t) = hh_n;
      out_h.col(t) = h;
    }
  }

  Var out = push(std::move(out_h), req(x) || req(wx) || req(wh) || req(bx) || req(bh));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, wx, wh, bx, bh, out, lay, reverse, H, cache] {
      const Mat& gout = nodes_[out.id].gradient;
      const int F = lay.frames;
      const long T = gout.cols();
      Mat dgx_all = Mat::Zero(3 * H, T);  // grads of Wx x + bx rows
      Mat dgh_all = Mat::Zero(3 * H, T);  // grads of Wh h + bh rows
      Mat h_prev_all = Mat::Zero(H, T);
      const Mat& out_val = nodes_[out.id].value;
      const Mat& whv = val(wh);

      for (int s = 0; s < lay.segments; ++s) {
        Vec dh_next = Vec::Zero(H);
        for (int k = F - 1; k >= 0; --k) {
          const long t = static_cast<long>(s) * F + (reverse ? F - 1 - k : k);
          const bool has_prev = k > 0;
          const long t_prev = static_cast<long>(s) * F + (reverse ? F - k : k - 1);
          Vec h_prev = Vec::Zero(H);
          if (has_prev) {
            h_prev = out_val.col(t_prev);
            h_prev_all.col(t) = h_prev;
          }
          const auto r = cache->r.col(t).array();
          const auto z = cache->z.col(t).array();
          const auto n = cache->n.col(t).array();
          const auto hh_n = cache->hh_n.col(t).array();

          const Vec dh = gout.col(t) + dh_next;
          const Vec dz = (dh.array() * (h_prev.array() - n)).matrix();
          const Vec dn = (dh.array() * (1.0 - z)).matrix();
          const Vec da_n = (dn.array() * (1.0 - n.square())).matrix();
          const Vec dr = (da_n.array() * hh_n).matrix();
          const Vec da_r = (dr.array() * r * (1.0 - r)).matrix();
          const Vec da_z = (dz.array() * z * (1.0 - z)).matrix();

          Vec dgh(3 * H);
          dgh.segment(0, H) = da_r;
          dgh.segment(H, H) = da_z;
          dgh.segment(2 * H, H) = (da_n.array() * r).matrix();
          dgh_all.col(t) = dgh;
          dgx_all.col(t).segment(0, H) = da_r;
          dgx_all.col(t).segment(H, H) = da_z;
          dgx_all.col(t).segment(2 * H, H) = da_n;

          dh_next = (dh.array() * z).matrix();
          dh_next.noalias() += whv.transpose() * dgh;
        }
      }

      if (req(bx)) accum(bx.id, dgx_all.rowwise().sum());
      if (req(bh)) accum(bh.id, dgh_all.rowwise().sum());
      if (req(wx)) accum(wx.id, dgx_all * val(x).transpose());
      if (req(x)) accum(x.id, val(wx).transpose() * dgx_all);
      if (req(wh)) accum(wh.id, dgh_all * h_prev_all.transpose());
    };
  return out;
}

// --- resampling -----------------------------------------------------------

Var Tape::upsample_cols(Var x, int stride, Layout in_lay) {
  const Mat& xv = val(x);
  check_layout(xv, in_lay, "upsample_cols");
  require(stride >= 1, "upsample_cols: stride must be >= 1");
  const int F = in_lay.frames;
  Mat y(xv.rows(), xv.cols() * stride);
  for (int s = 0; s < in_lay.segments; ++s)
    for (int f = 0; f < F; ++f)
      for (int k = 0; k < stride; ++k)
        y.col((static_cast<long>(s) * F + f) * stride + k) = xv.col(static_cast<long>(s) * F + f);
  Var out = push(std::move(y), req(x));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, out, stride, in_lay] {
      const Mat& g = nodes_[out.id].gradient;
      const int F = in_lay.frames;
      Mat dx = Mat::Zero(val(x).rows(), val(x).cols());
      for (int s = 0; s < in_lay.segments; ++s)
        for (int f = 0; f < F; ++f)
          for (int k = 0; k < stride; ++k)
            dx.col(static_cast<long>(s) * F + f) +=
                g.col((static_cast<long>(s) * F + f) * stride + k);
      accum(x.id, dx);
    };
  return out;
}

Var Tape::subsample_cols(Var x, int stride, Layout in_lay) {
  const Mat& xv = val(x);
  check_layout(xv, in_lay, "subsample_cols");
  require(stride >= 1 && in_lay.frames % stride == 0,
          "subsample_cols: stride must divide the frame count");
  const int F = in_lay.frames;
  const int Fo = F / stride;
  Mat y(xv.rows(), static_cast<long>(Fo) * in_lay.segments);
  for (int s = 0; s < in_lay.segments; ++s)
    for (int f = 0; f < Fo; ++f)
      y.col(static_cast<long>(s) * Fo + f) =
          xv.col(static_cast<long>(s) * F + static_cast<long>(f) * stride);
  Var out = push(std::move(y), req(x));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, x, out, stride, in_lay, Fo] {
      const Mat& g = nodes_[out.id].gradient;
      const int F = in_lay.frames;
      Mat dx = Mat::Zero(val(x).rows(), val(x).cols());
      for (int s = 0; s < in_lay.segments; ++s)
        for (int f = 0; f < Fo; ++f)
          dx.col(static_cast<long>(s) * F + static_cast<long>(f) * stride) =
              g.col(static_cast<long>(s) * Fo + f);
      accum(x.id, dx);
    };
  return out;
}

// --- losses -----------------------------------------------------------------

Var Tape::mse(Var a, Var b, Reduction red) {
  check_same_shape(val(a), val(b), "mse");
  const double n = red == Reduction::MeanCells ? static_cast<double>(val(a).size()) : 1.0;
  const Mat diff = val(a) - val(b);
  Mat v(1, 1);
  v(0, 0) = diff.squaredNorm() / n;
  Var out = push(std::move(v), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, out, n, diff] {
      const double g = nodes_[out.id].gradient(0, 0);
      if (req(a)) accum(a.id, diff * (2.0 * g / n));
      if (req(b)) accum(b.id, diff * (-2.0 * g / n));
    };
  return out;
}

Var Tape::mse_to(Var a, const Mat& target, Reduction red) {
  check_same_shape(val(a), target, "mse_to");
  const double n = red == Reduction::MeanCells ? static_cast<double>(val(a).size()) : 1.0;
  const Mat diff = val(a) - target;
  Mat v(1, 1);
  v(0, 0) = diff.squaredNorm() / n;
  Var out = push(std::move(v), req(a));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, out, n, diff] {
      accum(a.id, diff * (2.0 * nodes_[out.id].gradient(0, 0) / n));
    };
  return out;
}

Var Tape::add_scaled(Var a, Var b, double alpha) {
  check_same_shape(val(a), val(b), "add_scaled");
  Var out = push(val(a) + alpha * val(b), req(a) || req(b));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, a, b, alpha, out] {
      const Mat& g = nodes_[out.id].gradient;
      accum(a.id, g);
      accum(b.id, alpha * g);
    };
  return out;
}

Var Tape::softmax_xent(Var logits, std::vector<int> labels) {
  const Mat& lv = val(logits);
  const long N = lv.cols();
  require(static_cast<long>(labels.size()) == N, "softmax_xent: label count mismatch");
  Mat sm(lv.rows(), N);
  double loss = 0.0;
  for (long c = 0; c < N; ++c) {
    require(labels[c] >= 0 && labels[c] < lv.rows(), "softmax_xent: label out of range");
    const double mx = lv.col(c).maxCoeff();
    const Vec e = (lv.col(c).array() - mx).exp();
    const double z = e.sum();
    sm.col(c) = e / z;
    loss += std::log(z) + mx - lv(labels[c], c);
  }
  Mat v(1, 1);
  v(0, 0) = loss / static_cast<double>(N);
  Var out = push(std::move(v), req(logits));
  if (nodes_[out.id].requires_grad)
    nodes_[out.id].back = [this, logits, out, sm, labels, N] {
      Mat d = sm;
      for (long c = 0; c < N; ++c) d(labels[c], c) -= 1.0;
      accum(logits.id, d * (nodes_[out.id].gradient(0, 0) / static_cast<double>(N)));
    };
  return out;
}

}  // namespace ceae::nn
