#pragma once

#include "ceae/tape.hpp"

#include <vector>

namespace ceae::nn {

/// Sum over pairs of ||a_i - b_i||^2, each pair mean-reduced over cells
/// (Reduction::Sum keeps the raw squared norms).
double loss_rec(const std::vector<Mat>& m_hats, const std::vector<Mat>& ms,
                Reduction red = Reduction::MeanCells);

/// Same reduction applied to content codes: z_hats[i] is the re-encoded
/// cross-reconstruction code, zs[i] the original code.
double loss_cyc(const std::vector<Mat>& z_hats, const std::vector<Mat>& zs,
                Reduction red = Reduction::MeanCells);

/// l_rec + alpha * l_cyc.
double loss_total(double l_rec, double l_cyc, double alpha);

}  // namespace ceae::nn
