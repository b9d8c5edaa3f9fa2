// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/optim.hpp"

#include <cmath>

#include "dmdlab/errors.hpp"

namespace dmdlab {

void AdamW::step(ParamVector& params, const ParamVector& grad) {
  DMDLAB_REQUIRE(params.same_layout(grad), "AdamW: gradient layout does not match parameters");
  if (m_.size() == 0) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
  }
  ++t_;
  const auto& g = grad.flat();
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& p = params.flat();
  if (cfg_.weight_decay != 0.0) p *= 1.0 - cfg_.lr * cfg_.weight_decay;
  p.array() -= cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

}  // namespace dmdlab
