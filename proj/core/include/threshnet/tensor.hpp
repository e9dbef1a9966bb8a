#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace threshnet {

// Dense row-major double tensor. Activations are rank 4 (N, C, H, W);
// logits are rank 2 (N, classes).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](size_t i) { return values_[i]; }
  double operator[](size_t i) const { return values_[i]; }

  double& at(int n, int c, int h, int w) { return values_[Offset(n, c, h, w)]; }
  const double& at(int n, int c, int h, int w) const { return values_[Offset(n, c, h, w)]; }
  double& at(int n, int f) { return values_[static_cast<size_t>(n) * shape_[1] + f]; }
  const double& at(int n, int f) const { return values_[static_cast<size_t>(n) * shape_[1] + f]; }

  // Same values, new shape with the same element count.
  Tensor Reshaped(std::vector<int> shape) const;
  bool AllFinite() const;
  std::string ShapeString() const;

  bool operator==(const Tensor&) const = default;

 private:
  size_t Offset(int n, int c, int h, int w) const {
    return ((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::vector<int> shape_;
  std::vector<double> values_;
};

}  // namespace threshnet
