#include "ceae/losses.hpp"

#include <cmath>

namespace ceae::nn {

namespace {

double pair_sum(const std::vector<Mat>& a, const std::vector<Mat>& b, Reduction red,
                const char* what) {
  require(a.size() == b.size(), std::string(what) + ": list length mismatch");
  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    require(a[i].rows() == b[i].rows() && a[i].cols() == b[i].cols(),
            std::string(what) + ": shape mismatch at pair " + std::to_string(i));
    const double n = red == Reduction::MeanCells ? static_cast<double>(a[i].size()) : 1.0;
    total += (a[i] - b[i]).squaredNorm() / n;
  }
  return total;
}

}  // namespace

double loss_rec(const std::vector<Mat>& m_hats, const std::vector<Mat>& ms, Reduction red) {
  return pair_sum(m_hats, ms, red, "loss_rec");
}

double loss_cyc(const std::vector<Mat>& z_hats, const std::vector<Mat>& zs, Reduction red) {
  return pair_sum(z_hats, zs, red, "loss_cyc");
}

double loss_total(double l_rec, double l_cyc, double alpha) {
  require(std::isfinite(l_rec) && std::isfinite(l_cyc) && std::isfinite(alpha),
          "loss_total: inputs must be finite");
  return l_rec + alpha * l_cyc;
}

}  // namespace ceae::nn
