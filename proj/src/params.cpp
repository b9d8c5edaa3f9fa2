// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/params.hpp"

#include "dmdlab/errors.hpp"

namespace dmdlab {

ParamLayout& ParamLayout::add(std::string name, Index rows, Index cols) {
  DMDLAB_REQUIRE(rows > 0 && cols > 0, "parameter '" + name + "' must have a positive shape");
  for (const auto& s : slots_) {
    DMDLAB_REQUIRE(s.name != name, "duplicate parameter name '" + name + "'");
  }
  slots_.push_back({std::move(name), rows, cols, size_});
  size_ += rows * cols;
  return *this;
}

std::size_t ParamLayout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name == name) return i;
  }
  throw ContractViolation("unknown parameter '" + std::string(name) + "'");
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), flat_(Vector::Zero(layout_->size())) {}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, Vector flat)
    : layout_(std::move(layout)), flat_(std::move(flat)) {
  DMDLAB_REQUIRE(flat_.size() == layout_->size(), "flat buffer size does not match layout");
}

ParamVector ParamVector::flatten(std::shared_ptr<const ParamLayout> layout, std::span<const Matrix> tensors) {
  DMDLAB_REQUIRE(tensors.size() == layout->count(), "tensor count does not match layout");
  ParamVector out(std::move(layout));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& slot = out.layout().slots()[i];
    DMDLAB_REQUIRE(tensors[i].rows() == slot.rows && tensors[i].cols() == slot.cols,
                   "tensor shape does not match slot '" + slot.name + "'");
    out.block(i) = tensors[i];
  }
  return out;
}

std::vector<Matrix> ParamVector::unflatten() const {
  std::vector<Matrix> out;
  out.reserve(layout_->count());
  for (std::size_t i = 0; i < layout_->count(); ++i) out.emplace_back(block(i));
  return out;
}

Eigen::Map<const Matrix> ParamVector::block(std::size_t slot) const {
  const auto& s = layout_->slots().at(slot);
  return Eigen::Map<const Matrix>(flat_.data() + s.offset, s.rows, s.cols);
}

Eigen::Map<Matrix> ParamVector::block(std::size_t slot) {
  const auto& s = layout_->slots().at(slot);
  return Eigen::Map<Matrix>(flat_.data() + s.offset, s.rows, s.cols);
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (!layout_ || !other.layout_) return false;
  return layout_ == other.layout_ || *layout_ == *other.layout_;
}

double param_distance(const ParamVector& a, const ParamVector& b) {
  DMDLAB_REQUIRE(a.same_layout(b), "param_distance: layout mismatch");
  return (a.flat() - b.flat()).norm();
}

ParamVector blend_params(const ParamVector& target, const ParamVector& source, double lambda) {
  DMDLAB_REQUIRE(target.same_layout(source), "blend_params: layout mismatch");
  DMDLAB_REQUIRE(lambda > 0.0 && lambda <= 1.0, "blend_params: lambda must lie in (0, 1]");
  if (lambda == 1.0) return target;
  return ParamVector(target.layout_ptr(), lambda * target.flat() + (1.0 - lambda) * source.flat());
}

}  // namespace dmdlab
