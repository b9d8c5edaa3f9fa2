// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/nets.hpp"

#include <cmath>
#include <string>

#include "dmdlab/errors.hpp"

namespace dmdlab {

namespace {

void silu_inplace(Matrix& h) { h = (h.array() / (1.0 + (-h.array()).exp())).matrix(); }

Matrix uniform_init(Rng& rng, Index rows, Index cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

void check_cond(std::span<const int> cond, Index rows, int num_conditions) {
  DMDLAB_REQUIRE(static_cast<Index>(cond.size()) == rows, "one condition label per row required");
  for (int c : cond) DMDLAB_REQUIRE(c >= 0 && c < num_conditions, "condition label out of range");
}

void check_times(const Vector& t, Index rows) {
  DMDLAB_REQUIRE(t.size() == rows, "one time per row required");
  for (Index i = 0; i < t.size(); ++i) DMDLAB_REQUIRE(t(i) >= 0.0 && t(i) <= 1.0, "t must lie in [0, 1]");
}

// Slot indices of the velocity layout.
constexpr std::size_t kInX = 0, kInT = 1, kCondTable = 2, kInC = 3, kInB = 4, kFirstHidden = 5;

}  // namespace

Matrix time_embedding(const Vector& t, int dim) {
  DMDLAB_REQUIRE(dim >= 2 && dim % 2 == 0, "time embedding dimension must be even");
  const int half = dim / 2;
  Matrix out(t.size(), dim);
  for (int k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * k / half);
    for (Index i = 0; i < t.size(); ++i) {
      const double a = 1000.0 * t(i) * w;
      out(i, k) = std::sin(a);
      out(i, half + k) = std::cos(a);
    }
  }
  return out;
}

Matrix one_hot(std::span<const int> labels, int num_classes) {
  Matrix out = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    DMDLAB_REQUIRE(labels[i] >= 0 && labels[i] < num_classes, "label out of range");
    out(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return out;
}

VelocityNet::VelocityNet(VelocityNetConfig cfg, ParamVector params) : cfg_(cfg), params_(std::move(params)) {
  DMDLAB_REQUIRE(params_.layout() == *make_layout(cfg_), "VelocityNet: parameter layout does not match config");
}

std::shared_ptr<const ParamLayout> VelocityNet::make_layout(const VelocityNetConfig& cfg) {
  DMDLAB_REQUIRE(cfg.depth >= 1 && cfg.width >= 1 && cfg.num_conditions >= 1 && cfg.cond_dim >= 1,
                 "VelocityNet: invalid config");
  auto l = std::make_shared<ParamLayout>();
  l->add("in.x", cfg.data_dim, cfg.width);
  l->add("in.t", cfg.time_dim, cfg.width);
  l->add("cond.table", cfg.num_conditions, cfg.cond_dim);
  l->add("in.c", cfg.cond_dim, cfg.width);
  l->add("in.b", 1, cfg.width);
  for (int i = 1; i < cfg.depth; ++i) {
    l->add("h" + std::to_string(i) + ".w", cfg.width, cfg.width);
    l->add("h" + std::to_string(i) + ".b", 1, cfg.width);
  }
  l->add("out.w", cfg.width, cfg.data_dim);
  l->add("out.b", 1, cfg.data_dim);
  return l;
}

VelocityNet VelocityNet::init(const VelocityNetConfig& cfg, Rng& rng) {
  auto layout = make_layout(cfg);
  std::vector<Matrix> t;
  const double in_fan = cfg.data_dim + cfg.time_dim + cfg.cond_dim;
  const double b_in = 1.0 / std::sqrt(in_fan);
  const double b_h = 1.0 / std::sqrt(static_cast<double>(cfg.width));
  t.push_back(uniform_init(rng, cfg.data_dim, cfg.width, b_in));
  t.push_back(uniform_init(rng, cfg.time_dim, cfg.width, b_in));
  t.push_back(standard_normal(rng, cfg.num_conditions, cfg.cond_dim));
  t.push_back(uniform_init(rng, cfg.cond_dim, cfg.width, b_in));
  t.push_back(uniform_init(rng, 1, cfg.width, b_in));
  for (int i = 1; i < cfg.depth; ++i) {
    t.push_back(uniform_init(rng, cfg.width, cfg.width, b_h));
    t.push_back(uniform_init(rng, 1, cfg.width, b_h));
  }
  t.push_back(uniform_init(rng, cfg.width, cfg.data_dim, b_h));
  t.push_back(uniform_init(rng, 1, cfg.data_dim, b_h));
  return VelocityNet(cfg, ParamVector::flatten(layout, t));
}

void VelocityNet::set_params(ParamVector p) {
  DMDLAB_REQUIRE(p.same_layout(params_), "set_params: layout mismatch");
  params_ = std::move(p);
}

Var VelocityNet::forward(Tape& tape, std::span<const Var> vars, Var x, const Vector& t,
                         std::span<const int> cond) const {
  DMDLAB_REQUIRE(vars.size() == params_.layout().count(), "forward: wrong number of bound parameters");
  DMDLAB_REQUIRE(x.cols() == cfg_.data_dim, "forward: x has the wrong data dimension");
  check_times(t, x.rows());
  check_cond(cond, x.rows(), cfg_.num_conditions);
  Var temb = tape.constant(time_embedding(t, cfg_.time_dim));
  Var oh = tape.constant(one_hot(cond, cfg_.num_conditions));
  Var h = matmul(x, vars[kInX]) + matmul(temb, vars[kInT]);
  h = h + matmul(matmul(oh, vars[kCondTable]), vars[kInC]);
  h = silu(h + vars[kInB]);
  std::size_t k = kFirstHidden;
  for (int i = 1; i < cfg_.depth; ++i, k += 2) h = silu(affine(h, vars[k], vars[k + 1]));
  return affine(h, vars[k], vars[k + 1]);
}

Matrix VelocityNet::velocity(const Matrix& x, const Vector& t, std::span<const int> cond) const {
  return velocity(params_, x, t, cond);
}

Matrix VelocityNet::velocity(const ParamVector& p, const Matrix& x, const Vector& t,
                             std::span<const int> cond) const {
  DMDLAB_REQUIRE(p.same_layout(params_), "velocity: layout mismatch");
  DMDLAB_REQUIRE(x.cols() == cfg_.data_dim, "velocity: x has the wrong data dimension");
  check_times(t, x.rows());
  check_cond(cond, x.rows(), cfg_.num_conditions);
  const Matrix temb = time_embedding(t, cfg_.time_dim);
  const Matrix oh = one_hot(cond, cfg_.num_conditions);
  Matrix h = x * p.block(kInX);
  h += temb * p.block(kInT);
  h += Matrix(oh * p.block(kCondTable)) * p.block(kInC);
  h.rowwise() += p.block(kInB).row(0);
  silu_inplace(h);
  std::size_t k = kFirstHidden;
  for (int i = 1; i < cfg_.depth; ++i, k += 2) {
    Matrix next = h * p.block(k);
    next.rowwise() += p.block(k + 1).row(0);
    silu_inplace(next);
    h = std::move(next);
  }
  Matrix out = h * p.block(k);
  out.rowwise() += p.block(k + 1).row(0);
  if (!out.allFinite()) throw NumericFailure("velocity", "non-finite velocity prediction");
  return out;
}

VelocityField VelocityNet::field() const {
  return [net = *this](const Matrix& x, const Vector& t, std::span<const int> cond) {
    return net.velocity(x, t, cond);
  };
}

Matrix velocity_forward(const VelocityNet& net, const Matrix& x, double t, std::span<const int> cond) {
  DMDLAB_REQUIRE(t >= 0.0 && t <= 1.0, "velocity_forward: t must lie in [0, 1]");
  return net.velocity(x, Vector::Constant(x.rows(), t), cond);
}

Matrix generator_step(const VelocityField& field, const Matrix& x, double tau_from, double tau_to,
                      std::span<const int> cond) {
  DMDLAB_REQUIRE(tau_to <= tau_from, "generator_step: tau_to must not exceed tau_from");
  if (tau_to == tau_from) return x;
  return x + (tau_to - tau_from) * field(x, Vector::Constant(x.rows(), tau_from), cond);
}

Matrix generator_step(const VelocityNet& g, const Matrix& x, double tau_from, double tau_to,
                      std::span<const int> cond) {
  DMDLAB_REQUIRE(tau_to <= tau_from, "generator_step: tau_to must not exceed tau_from");
  if (tau_to == tau_from) return x;
  return x + (tau_to - tau_from) * velocity_forward(g, x, tau_from, cond);
}

Discriminator::Discriminator(DiscriminatorConfig cfg, ParamVector backbone, ParamVector head)
    : cfg_(cfg), backbone_(std::move(backbone)), head_(std::move(head)) {
  DMDLAB_REQUIRE(backbone_.layout() == *backbone_layout(cfg_), "Discriminator: backbone layout mismatch");
  DMDLAB_REQUIRE(head_.layout() == *head_layout(cfg_), "Discriminator: head layout mismatch");
}

std::shared_ptr<const ParamLayout> Discriminator::backbone_layout(const DiscriminatorConfig& cfg) {
  auto l = std::make_shared<ParamLayout>();
  l->add("bb1.w", cfg.data_dim, cfg.backbone_width);
  l->add("bb1.b", 1, cfg.backbone_width);
  l->add("bb2.w", cfg.backbone_width, cfg.backbone_width);
  l->add("bb2.b", 1, cfg.backbone_width);
  return l;
}

std::shared_ptr<const ParamLayout> Discriminator::head_layout(const DiscriminatorConfig& cfg) {
  auto l = std::make_shared<ParamLayout>();
  l->add("h1.w", cfg.backbone_width, cfg.head_width);
  l->add("h1.b", 1, cfg.head_width);
  l->add("h2.w", cfg.head_width, cfg.feature_dim);
  l->add("h2.b", 1, cfg.feature_dim);
  l->add("ref.w", cfg.backbone_width, cfg.feature_dim);
  l->add("ref.b", 1, cfg.feature_dim);
  l->add("cond.table", cfg.num_conditions, cfg.feature_dim);
  l->add("out.b", 1, 1);
  return l;
}

Discriminator Discriminator::init(const DiscriminatorConfig& cfg, Rng& rng) {
  const double b_in = 1.0 / std::sqrt(static_cast<double>(cfg.data_dim));
  const double b_bb = 1.0 / std::sqrt(static_cast<double>(cfg.backbone_width));
  const double b_hw = 1.0 / std::sqrt(static_cast<double>(cfg.head_width));
  std::vector<Matrix> bb;
  bb.push_back(uniform_init(rng, cfg.data_dim, cfg.backbone_width, b_in));
  bb.push_back(uniform_init(rng, 1, cfg.backbone_width, b_in));
  bb.push_back(uniform_init(rng, cfg.backbone_width, cfg.backbone_width, b_bb));
  bb.push_back(uniform_init(rng, 1, cfg.backbone_width, b_bb));
  std::vector<Matrix> hd;
  hd.push_back(uniform_init(rng, cfg.backbone_width, cfg.head_width, b_bb));
  hd.push_back(uniform_init(rng, 1, cfg.head_width, b_bb));
  hd.push_back(uniform_init(rng, cfg.head_width, cfg.feature_dim, b_hw));
  hd.push_back(uniform_init(rng, 1, cfg.feature_dim, b_hw));
  hd.push_back(uniform_init(rng, cfg.backbone_width, cfg.feature_dim, b_bb));
  hd.push_back(uniform_init(rng, 1, cfg.feature_dim, b_bb));
  hd.push_back(Matrix::Ones(cfg.num_conditions, cfg.feature_dim));
  hd.push_back(Matrix::Zero(1, 1));
  return Discriminator(cfg, ParamVector::flatten(backbone_layout(cfg), bb), ParamVector::flatten(head_layout(cfg), hd));
}

Var Discriminator::features(Tape& tape, std::span<const Var> bb, Var x) const {
  DMDLAB_REQUIRE(bb.size() == 4, "features: wrong number of backbone parameters");
  // Frozen: backbone weights never receive gradient, x still does.
  Var w1 = stop_gradient(bb[0]), b1 = stop_gradient(bb[1]);
  Var w2 = stop_gradient(bb[2]), b2 = stop_gradient(bb[3]);
  return silu(affine(silu(affine(x, w1, b1)), w2, b2));
}

Matrix Discriminator::features(const Matrix& x) const {
  Matrix h = x * backbone_.block(0);
  h.rowwise() += backbone_.block(1).row(0);
  silu_inplace(h);
  Matrix f = h * backbone_.block(2);
  f.rowwise() += backbone_.block(3).row(0);
  silu_inplace(f);
  return f;
}

Var Discriminator::logits(Tape& tape, std::span<const Var> bb, std::span<const Var> hv, Var x,
                          std::span<const int> cond, Var ref_features) const {
  DMDLAB_REQUIRE(hv.size() == 8, "logits: wrong number of head parameters");
  DMDLAB_REQUIRE(ref_features.rows() == x.rows(), "logits: one reference per sample required");
  check_cond(cond, x.rows(), cfg_.num_conditions);
  Var z = features(tape, bb, x);
  Var h = affine(silu(affine(z, hv[0], hv[1])), hv[2], hv[3]);
  Var q = affine(ref_features, hv[4], hv[5]);
  Var c = matmul(tape.constant(one_hot(cond, cfg_.num_conditions)), hv[6]);
  return row_sum(h * c * q) + hv[7];
}

Vector discriminate(const Discriminator& d, const Matrix& x, std::span<const int> cond, const Matrix& x_ref) {
  Tape tape;
  const auto bb = tape.bind(d.backbone(), false);
  const auto hv = tape.bind(d.head(), false);
  Var r = tape.constant(d.features(x_ref));
  Var out = d.logits(tape, bb, hv, tape.constant(x), cond, r);
  return out.value().col(0);
}

}  // namespace dmdlab
