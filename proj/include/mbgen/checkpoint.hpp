#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbgen/tape.hpp"
#include "mbgen/tensor.hpp"

namespace mbgen {

// Self-describing binary snapshot: version, stage tag, config echo, RNG
// state, and a named tensor table of raw little-endian 64-bit values, with a
// whole-file checksum. Round trips are byte exact.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string stage;
  std::string config_echo;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add_params(const ParamStore& store);
  void add_tensor(std::string name, Tensor t);
  const Tensor* find(const std::string& name) const;

  // Copies values into matching parameters; a missing name or shape mismatch
  // refuses the load and names the tensor.
  void apply_to(ParamStore& store) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mbgen
