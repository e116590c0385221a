#pragma once

#include "ceae/nn.hpp"

namespace ceae::nn {

enum class LossPath { Reconstruction, Cycle };

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

/// Compares analytic gradients against central finite differences on a
/// randomly sampled set of parameter coordinates, over a deterministic
/// two-speaker toy batch. Reconstruction checks encoder and decoder
/// parameters of m -> E -> D -> m; Cycle checks encoder parameters through
/// the full m -> E -> D_cross -> E re-encoding path. The relative error is
/// |a - f| / max(|a|, |f|, 1e-4). corruption != 0 perturbs the first sampled
/// analytic coordinate (negative-control hook).
GradCheckReport grad_check(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                           LossPath path, uint64_t seed, int coords = 200,
                           double epsilon = 1e-5, double corruption = 0.0);

}  // namespace ceae::nn
