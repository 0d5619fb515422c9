#include "mbgen/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mbgen {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(Shape{});
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::vec(std::initializer_list<double> v) {
  return Tensor(Shape{v.size()}, std::vector<double>(v));
}

bool Tensor::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw std::runtime_error(std::string(op) + ": non-finite value in result tensor " +
                             shape_str(t.shape));
  }
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("dimension error: " + what);
}

}  // namespace mbgen
