#include "ceae/optim.hpp"

#include <cmath>

namespace ceae::nn {

Adam::Adam(AdamConfig cfg_in, const ParamStore& store) : cfg(cfg_in) {
  m.reserve(store.values.size());
  v.reserve(store.values.size());
  for (const auto& p : store.values) {
    m.push_back(Mat::Zero(p.rows(), p.cols()));
    v.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void Adam::step(ParamStore& store, const std::vector<Mat>& grads) {
  require(grads.size() == store.values.size(), "Adam: gradient count mismatch");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite())
      throw NumericError("non-finite gradient for parameter '" + store.names[i] +
                         "'; step rejected");
  }
  ++t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < grads.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    store.values[i].array() -=
        cfg.lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace ceae::nn
