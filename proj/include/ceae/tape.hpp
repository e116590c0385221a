#pragma once

#include "ceae/common.hpp"

#include <functional>
#include <vector>

namespace ceae::nn {

using Mat = ceae::Mat;
using Vec = ceae::Vec;

/// How matrix columns are grouped: columns = frames * segments, segment s
/// occupying columns [s*frames, (s+1)*frames). Recurrences and per-instance
/// statistics never cross a segment boundary.
struct Layout {
  int frames = 0;
  int segments = 1;

  int cols() const { return frames * segments; }
};

enum class Reduction { MeanCells, Sum };

/// Running statistics for a normalization layer (no learnable affine).
struct NormState {
  Vec running_mean;
  Vec running_var;
  double momentum = 0.1;

  void init(int channels) {
    running_mean = Vec::Zero(channels);
    running_var = Vec::Ones(channels);
  }
};

/// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over coarse matrix operations. Creation order is
/// the topological order; backward() walks it in reverse. Nodes hold either
/// an owned value or a pointer to external storage (parameters), so no
/// parameter copies are made per step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reset();
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Parameter leaf referencing external storage; receives a gradient.
  Var param(const Mat* external);
  /// External leaf that never receives a gradient (frozen parameters).
  Var frozen_param(const Mat* external);
  /// Constant leaf (inputs, targets); no gradient.
  Var constant(Mat value);

  const Mat& val(Var v) const;
  /// Gradient of the last backward() with respect to v (zero matrix if the
  /// node was never reached).
  Mat grad(Var v) const;

  /// Backpropagates from a scalar (1x1) loss node. Throws NumericError if
  /// the loss value is not finite.
  void backward(Var loss);

  // --- elementwise / linear ops ---------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var add_bias(Var x, Var bias);  // bias: n x 1, broadcast over columns
  Var relu(Var x);
  Var concat_rows(Var a, Var b);

  // --- structured ops ---------------------------------------------------
  Var conv1d(Var x, Var w, Var bias, int kernel, Layout lay);
  Var instance_norm(Var x, Layout lay, NormState* state, bool training, bool update_stats,
                    double eps = 1e-5);
  Var batch_norm(Var x, Layout lay, NormState* state, bool training, bool update_stats,
                 double eps = 1e-5);
  /// LSTM over each segment independently; returns hidden states H x cols.
  /// Weights: wx 4H x C, wh 4H x H, bias 4H x 1; gate order [i, f, g, o].
  Var lstm(Var x, Var wx, Var wh, Var bias, Layout lay, bool reverse);
  /// GRU, gate order [r, z, n]; wx 3H x C, wh 3H x H, bx/bh 3H x 1.
  Var gru(Var x, Var wx, Var wh, Var bx, Var bh, Layout lay, bool reverse);
  Var upsample_cols(Var x, int stride, Layout in_lay);   // nearest-neighbor repeat
  Var subsample_cols(Var x, int stride, Layout in_lay);  // take every stride-th frame

  // --- losses -------------------------------------------------------------
  Var mse(Var a, Var b, Reduction red = Reduction::MeanCells);
  Var mse_to(Var a, const Mat& target, Reduction red = Reduction::MeanCells);
  /// Scalar combine: a + alpha * b.
  Var add_scaled(Var a, Var b, double alpha);
  /// Mean cross-entropy of softmax(logits) against integer labels.
  Var softmax_xent(Var logits, std::vector<int> labels);

  double scalar(Var v) const { return val(v)(0, 0); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat gradient;
    bool requires_grad = false;
    bool reached = false;
    std::function<void()> back;

    const Mat& val() const { return external ? *external : value; }
  };

  Var push(Mat value, bool requires_grad);
  void accum(int id, const Mat& g);
  bool req(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace ceae::nn
