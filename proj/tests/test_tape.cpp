#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ceae/tape.hpp"

#include <functional>
#include <random>

using namespace ceae;
using namespace ceae::nn;

namespace {

Mat randn(long rows, long cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) m(r, c) = d(rng);
  return m;
}

/// Finite-difference harness: params are leaves, build returns the scalar
/// loss. Reports the worst relative error over sampled coordinates.
double fd_check(std::vector<Mat> params,
                const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                uint64_t seed = 1, int samples = 12, double eps = 1e-6) {
  std::vector<Mat> analytic;
  {
    Tape t;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(t.param(&p));
    Var loss = build(t, leaves);
    t.backward(loss);
    for (auto v : leaves) analytic.push_back(t.grad(v));
  }

  auto eval = [&]() {
    Tape t;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(t.param(&p));
    return t.scalar(build(t, leaves));
  };

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (int k = 0; k < samples; ++k) {
      const long idx =
          std::uniform_int_distribution<long>(0, params[pi].size() - 1)(rng);
      double* cell = params[pi].data() + idx;
      const double saved = *cell;
      *cell = saved + eps;
      const double up = eval();
      *cell = saved - eps;
      const double down = eval();
      *cell = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic[pi](idx);
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("closed form: sum of squares has gradient 2p") {
  std::mt19937_64 rng(2);
  Mat p = randn(4, 3, rng);
  Tape t;
  Var leaf = t.param(&p);
  Var loss = t.mse_to(leaf, Mat::Zero(4, 3), Reduction::Sum);
  t.backward(loss);
  CHECK(t.grad(leaf).isApprox(2.0 * p, 1e-12));
  CHECK(t.scalar(loss) == doctest::Approx(p.squaredNorm()));
}

TEST_CASE("elementwise and linear op gradients") {
  std::mt19937_64 rng(3);
  const Mat target = randn(4, 6, rng);

  SUBCASE("matmul + add_bias + relu") {
    const double err = fd_check(
        {randn(4, 5, rng), randn(5, 6, rng), randn(4, 1, rng)},
        [&](Tape& t, const std::vector<Var>& p) {
          return t.mse_to(t.relu(t.add_bias(t.matmul(p[0], p[1]), p[2])), target);
        });
    CHECK(err < 1e-6);
  }

  SUBCASE("add, sub, hadamard, scale, add_scaled") {
    const double err = fd_check(
        {randn(4, 6, rng), randn(4, 6, rng), randn(4, 6, rng)},
        [&](Tape& t, const std::vector<Var>& p) {
          Var a = t.add(p[0], p[1]);
          Var b = t.sub(a, p[2]);
          Var c = t.hadamard(b, p[0]);
          Var l1 = t.mse_to(t.scale(c, 0.7), target);
          Var l2 = t.mse(p[1], p[2]);
          return t.add_scaled(l1, l2, 3.5);
        });
    CHECK(err < 1e-6);
  }

  SUBCASE("concat_rows") {
    const Mat tgt = randn(7, 6, rng);
    const double err = fd_check({randn(3, 6, rng), randn(4, 6, rng)},
                                [&](Tape& t, const std::vector<Var>& p) {
                                  return t.mse_to(t.concat_rows(p[0], p[1]), tgt);
                                });
    CHECK(err < 1e-6);
  }

  SUBCASE("mse propagates into both arguments") {
    const double err = fd_check({randn(4, 6, rng), randn(4, 6, rng)},
                                [&](Tape& t, const std::vector<Var>& p) {
                                  return t.mse(p[0], p[1]);
                                });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("conv1d gradients over multi-segment layouts") {
  std::mt19937_64 rng(4);
  const Layout lay{6, 2};
  const Mat target = randn(3, 12, rng);
  const double err = fd_check(
      {randn(4, 12, rng), randn(3, 4 * 5, rng), randn(3, 1, rng)},
      [&](Tape& t, const std::vector<Var>& p) {
        return t.mse_to(t.conv1d(p[0], p[1], p[2], 5, lay), target);
      });
  CHECK(err < 1e-6);
}

TEST_CASE("normalization gradients") {
  std::mt19937_64 rng(5);
  const Layout lay{5, 2};
  const Mat target = randn(3, 10, rng);

  SUBCASE("instance norm, training mode") {
    NormState ns;
    ns.init(3);
    const double err = fd_check({randn(3, 10, rng)}, [&](Tape& t, const std::vector<Var>& p) {
      return t.mse_to(t.instance_norm(p[0], lay, &ns, true, false), target);
    });
    CHECK(err < 1e-5);
  }

  SUBCASE("batch norm, training mode") {
    NormState ns;
    ns.init(3);
    const double err = fd_check({randn(3, 10, rng)}, [&](Tape& t, const std::vector<Var>& p) {
      return t.mse_to(t.batch_norm(p[0], lay, &ns, true, false), target);
    });
    CHECK(err < 1e-5);
  }

  SUBCASE("eval mode uses running statistics") {
    NormState ns;
    ns.init(3);
    ns.running_mean = Vec::Constant(3, 0.3);
    ns.running_var = Vec::Constant(3, 2.0);
    const double err = fd_check({randn(3, 10, rng)}, [&](Tape& t, const std::vector<Var>& p) {
      return t.mse_to(t.batch_norm(p[0], lay, &ns, false, false), target);
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("training-mode output is normalized per channel") {
    NormState ns;
    ns.init(3);
    Tape t;
    Mat x = randn(3, 10, rng, 3.0);
    Var in = t.constant(x);
    Var out = t.batch_norm(in, lay, &ns, true, false);
    const Mat y = t.val(out);
    for (long r = 0; r < 3; ++r) {
      CHECK(y.row(r).mean() == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(y.row(r).array().square().mean() == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
}

TEST_CASE("lstm gradients (forward, reverse, segmented)") {
  std::mt19937_64 rng(6);
  const int C = 5, H = 4;
  const Layout lay{4, 2};
  const Mat target = randn(H, 8, rng);
  for (bool reverse : {false, true}) {
    CAPTURE(reverse);
    const double err = fd_check(
        {randn(C, 8, rng), randn(4 * H, C, rng, 0.5), randn(4 * H, H, rng, 0.5),
         randn(4 * H, 1, rng, 0.2)},
        [&](Tape& t, const std::vector<Var>& p) {
          return t.mse_to(t.lstm(p[0], p[1], p[2], p[3], lay, reverse), target);
        });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("gru gradients (forward, reverse, segmented)") {
  std::mt19937_64 rng(7);
  const int C = 5, H = 4;
  const Layout lay{4, 2};
  const Mat target = randn(H, 8, rng);
  for (bool reverse : {false, true}) {
    CAPTURE(reverse);
    const double err = fd_check(
        {randn(C, 8, rng), randn(3 * H, C, rng, 0.5), randn(3 * H, H, rng, 0.5),
         randn(3 * H, 1, rng, 0.2), randn(3 * H, 1, rng, 0.2)},
        [&](Tape& t, const std::vector<Var>& p) {
          return t.mse_to(t.gru(p[0], p[1], p[2], p[3], p[4], lay, reverse), target);
        });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("resampling ops") {
  std::mt19937_64 rng(8);
  const Layout lay{6, 2};

  SUBCASE("upsample repeats columns and routes gradients") {
    Mat z = randn(3, 12, rng);
    Tape t;
    Var in = t.constant(z);
    Var up = t.upsample_cols(in, 3, lay);
    const Mat& y = t.val(up);
    CHECK(y.cols() == 36);
    for (long f = 0; f < 12; ++f)
      for (int k = 0; k < 3; ++k) CHECK(y.col(f * 3 + k) == z.col(f));

    const Mat target = randn(3, 36, rng);
    const double err = fd_check({z}, [&](Tape& tt, const std::vector<Var>& p) {
      return tt.mse_to(tt.upsample_cols(p[0], 3, lay), target);
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("subsample takes every stride-th frame per segment") {
    Mat x = randn(3, 12, rng);
    Tape t;
    Var in = t.constant(x);
    Var sub = t.subsample_cols(in, 3, lay);
    const Mat& y = t.val(sub);
    CHECK(y.cols() == 4);
    CHECK(y.col(0) == x.col(0));
    CHECK(y.col(1) == x.col(3));
    CHECK(y.col(2) == x.col(6));  // second segment starts at column 6
    CHECK(y.col(3) == x.col(9));

    const Mat target = randn(3, 4, rng);
    const double err = fd_check({x}, [&](Tape& tt, const std::vector<Var>& p) {
      return tt.mse_to(tt.subsample_cols(p[0], 3, lay), target);
    });
    CHECK(err < 1e-6);
  }

  SUBCASE("subsample then upsample is identity on kept frames") {
    Mat x = randn(2, 12, rng);
    Tape t;
    Var in = t.constant(x);
    Var round = t.upsample_cols(t.subsample_cols(in, 3, lay), 3, Layout{2, 2});
    const Mat& y = t.val(round);
    for (long s = 0; s < 2; ++s)
      for (long f = 0; f < 2; ++f) CHECK(y.col(s * 6 + f * 3) == x.col(s * 6 + f * 3));
  }
}

TEST_CASE("softmax cross entropy") {
  std::mt19937_64 rng(9);
  const std::vector<int> labels = {0, 2, 1, 2, 0, 1};
  const double err = fd_check({randn(3, 6, rng)}, [&](Tape& t, const std::vector<Var>& p) {
    return t.softmax_xent(p[0], labels);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward rejects non-finite losses with a diagnostic") {
  Mat p(1, 1);
  p << 1e308;
  Tape t;
  Var leaf = t.param(&p);
  Var big = t.hadamard(leaf, leaf);  // overflows to inf
  Var loss = t.mse_to(big, Mat::Zero(1, 1), Reduction::Sum);
  CHECK_THROWS_AS(t.backward(loss), NumericError);
}

TEST_CASE("frozen leaves receive no gradient but pass it through") {
  std::mt19937_64 rng(10);
  Mat w = randn(3, 3, rng);
  Mat x = randn(3, 4, rng);
  Tape t;
  Var wf = t.frozen_param(&w);
  Var xv = t.param(&x);
  Var y = t.matmul(wf, xv);
  Var loss = t.mse_to(y, Mat::Zero(3, 4));
  t.backward(loss);
  CHECK(t.grad(wf).isZero());
  CHECK(!t.grad(xv).isZero());
}
