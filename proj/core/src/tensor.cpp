#include "threshnet/tensor.hpp"

#include <cmath>

#include "threshnet/error.hpp"

namespace threshnet {

namespace {

size_t Volume(const std::vector<int>& shape) {
  size_t v = 1;
  for (int d : shape) {
    if (d < 0) throw Error(ErrorKind::kExecution, "negative tensor dimension");
    v *= static_cast<size_t>(d);
  }
  return v;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), values_(Volume(shape_), fill) {}

Tensor Tensor::Reshaped(std::vector<int> shape) const {
  if (Volume(shape) != values_.size()) {
    throw Error(ErrorKind::kExecution, "reshape changes element count");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = values_;
  return t;
}

bool Tensor::AllFinite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::ShapeString() const {
  std::string out = "(";
  for (size_t k = 0; k < shape_.size(); ++k) {
    if (k) out += ", ";
    out += std::to_string(shape_[k]);
  }
  return out + ")";
}

}  // namespace threshnet
