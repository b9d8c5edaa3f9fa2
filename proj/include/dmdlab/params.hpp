// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmdlab {

/// Dense rank-2 value type. Row-major so the flat buffer matches the
/// checkpoint payload order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct ParamSlot {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;

  Index size() const { return rows * cols; }
  bool operator==(const ParamSlot&) const = default;
};

/// Ordered (name, shape, offset) table describing one network's parameters.
class ParamLayout {
 public:
  ParamLayout& add(std::string name, Index rows, Index cols);

  const std::vector<ParamSlot>& slots() const { return slots_; }
  Index size() const { return size_; }
  std::size_t count() const { return slots_.size(); }
  /// Throws ContractViolation when the name is unknown.
  std::size_t index_of(std::string_view name) const;

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamSlot> slots_;
  Index size_ = 0;
};

/// Flat concatenation of every trainable tensor of one network.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::shared_ptr<const ParamLayout> layout);
  ParamVector(std::shared_ptr<const ParamLayout> layout, Vector flat);

  static ParamVector flatten(std::shared_ptr<const ParamLayout> layout, std::span<const Matrix> tensors);
  std::vector<Matrix> unflatten() const;

  Eigen::Map<const Matrix> block(std::size_t slot) const;
  Eigen::Map<Matrix> block(std::size_t slot);
  Eigen::Map<const Matrix> block(std::string_view name) const { return block(layout_->index_of(name)); }
  Eigen::Map<Matrix> block(std::string_view name) { return block(layout_->index_of(name)); }

  const Vector& flat() const { return flat_; }
  Vector& flat() { return flat_; }
  Index size() const { return flat_.size(); }

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  bool same_layout(const ParamVector& other) const;

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vector flat_;
};

/// Euclidean norm of (a - b). Layouts must match.
double param_distance(const ParamVector& a, const ParamVector& b);

/// lambda * target + (1 - lambda) * source, lambda in (0, 1].
ParamVector blend_params(const ParamVector& target, const ParamVector& source, double lambda);

}  // namespace dmdlab
