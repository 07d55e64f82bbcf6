#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/tensor.hpp"

namespace hazekit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  AdamConfig cfg;

  static AdamState for_param(const Tensor& p, const AdamConfig& cfg) {
    AdamState s;
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
    s.cfg = cfg;
    return s;
  }
};

/// One bias-corrected Adam update. The gradient is validated before any state
/// is touched, so a rejected step leaves both the parameter and the moments
/// unchanged.
inline void adam_step(Tensor& param, const std::vector<double>& grad,
                      AdamState& st) {
  if (grad.size() != param.size()) {
    throw std::invalid_argument("adam_step: gradient length " +
                                std::to_string(grad.size()) +
                                " does not match parameter length " +
                                std::to_string(param.size()));
  }
  if (st.m.size() != param.size() || st.v.size() != param.size()) {
    throw std::invalid_argument("adam_step: moment buffers do not match "
                                "parameter shape");
  }
  if (!(st.cfg.eps > 0.0)) {
    throw std::invalid_argument("adam_step: epsilon must be positive");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw std::runtime_error(
          "adam_step: non-finite gradient component; step rejected");
    }
  }
  st.t += 1;
  const double b1 = st.cfg.beta1;
  const double b2 = st.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    param.data[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
  }
}

}  // namespace hazekit
