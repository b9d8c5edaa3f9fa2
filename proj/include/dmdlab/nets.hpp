// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dmdlab/ndgrad.hpp"
#include "dmdlab/params.hpp"
#include "dmdlab/random.hpp"

namespace dmdlab {

/// Velocity prediction v(x, t, c). t holds one time per row of x.
using VelocityField = std::function<Matrix(const Matrix& x, const Vector& t, std::span<const int> cond)>;

struct VelocityNetConfig {
  int data_dim = 2;
  int width = 128;
  int depth = 4;  // hidden layers, each followed by SiLU
  int time_dim = 32;
  int cond_dim = 16;
  int num_conditions = 1;

  bool operator==(const VelocityNetConfig&) const = default;
};

/// Sinusoidal features [sin(1000 t w_k), cos(1000 t w_k)], w_k = 10000^(-k/half).
Matrix time_embedding(const Vector& t, int dim);
Matrix one_hot(std::span<const int> labels, int num_classes);

/// MLP over [x, time features, learned condition embedding]. Teacher,
/// generator and fake model are three parameter sets of this one shape.
class VelocityNet {
 public:
  VelocityNet() = default;
  VelocityNet(VelocityNetConfig cfg, ParamVector params);

  static std::shared_ptr<const ParamLayout> make_layout(const VelocityNetConfig& cfg);
  static VelocityNet init(const VelocityNetConfig& cfg, Rng& rng);

  const VelocityNetConfig& config() const { return cfg_; }
  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }
  void set_params(ParamVector p);

  /// Differentiable forward; vars come from Tape::bind(params()).
  Var forward(Tape& tape, std::span<const Var> vars, Var x, const Vector& t, std::span<const int> cond) const;
  /// Plain evaluation with the current parameters.
  Matrix velocity(const Matrix& x, const Vector& t, std::span<const int> cond) const;
  /// Plain evaluation with explicit parameters of this layout.
  Matrix velocity(const ParamVector& params, const Matrix& x, const Vector& t, std::span<const int> cond) const;

  VelocityField field() const;

 private:
  VelocityNetConfig cfg_;
  ParamVector params_;
};

/// Deterministic velocity at a single time for the whole batch.
Matrix velocity_forward(const VelocityNet& net, const Matrix& x, double t, std::span<const int> cond);

/// One Euler displacement x + (tau_to - tau_from) v(x, tau_from).
Matrix generator_step(const VelocityField& field, const Matrix& x, double tau_from, double tau_to,
                      std::span<const int> cond);
Matrix generator_step(const VelocityNet& g, const Matrix& x, double tau_from, double tau_to, std::span<const int> cond);

struct DiscriminatorConfig {
  int data_dim = 2;
  int backbone_width = 256;
  int head_width = 128;
  int feature_dim = 64;
  int num_conditions = 1;

  bool operator==(const DiscriminatorConfig&) const = default;
};

/// D(x, c, r) = sum_j h(f(x))_j * e_c,j * q(f(x_ref))_j + b.
///
/// f is a randomly initialised two-layer backbone that is never trained;
/// h (MLP head), q (reference projection), the condition table e and the
/// bias b are trainable.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(DiscriminatorConfig cfg, ParamVector backbone, ParamVector head);

  static std::shared_ptr<const ParamLayout> backbone_layout(const DiscriminatorConfig& cfg);
  static std::shared_ptr<const ParamLayout> head_layout(const DiscriminatorConfig& cfg);
  static Discriminator init(const DiscriminatorConfig& cfg, Rng& rng);

  const DiscriminatorConfig& config() const { return cfg_; }
  const ParamVector& backbone() const { return backbone_; }
  const ParamVector& head() const { return head_; }
  ParamVector& head() { return head_; }

  /// Backbone features; differentiable in x, never in the backbone weights.
  Var features(Tape& tape, std::span<const Var> backbone_vars, Var x) const;
  Matrix features(const Matrix& x) const;

  /// Logits (n x 1) on a tape. ref_features are f(x_ref), treated as data.
  Var logits(Tape& tape, std::span<const Var> backbone_vars, std::span<const Var> head_vars, Var x,
             std::span<const int> cond, Var ref_features) const;

 private:
  DiscriminatorConfig cfg_;
  ParamVector backbone_;
  ParamVector head_;
};

/// Plain logits for a batch (n x 1 column).
Vector discriminate(const Discriminator& d, const Matrix& x, std::span<const int> cond, const Matrix& x_ref);

}  // namespace dmdlab
