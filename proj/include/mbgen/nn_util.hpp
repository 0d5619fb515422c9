#pragma once

#include "mbgen/rng.hpp"
#include "mbgen/tensor.hpp"

namespace mbgen {

Tensor xavier_uniform(Rng& rng, std::size_t out, std::size_t in);

// Sinusoidal embedding of an integer timestep.
Tensor time_embedding(std::size_t t, std::size_t dim);

}  // namespace mbgen
