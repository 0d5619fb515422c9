#include "mbgen/nn_util.hpp"

#include <cmath>

namespace mbgen {

Tensor xavier_uniform(Rng& rng, std::size_t out, std::size_t in) {
  Tensor t(Shape{out, in});
  const double lim = std::sqrt(6.0 / static_cast<double>(out + in));
  for (double& v : t.data) v = rng.uniform(-lim, lim);
  return t;
}

Tensor time_embedding(std::size_t t, std::size_t dim) {
  Tensor e(Shape{dim});
  const double pos = static_cast<double>(t);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    e.data[2 * i] = std::sin(pos * w);
    e.data[2 * i + 1] = std::cos(pos * w);
  }
  if (dim % 2 == 1) e.data[dim - 1] = std::sin(pos);
  return e;
}

}  // namespace mbgen
