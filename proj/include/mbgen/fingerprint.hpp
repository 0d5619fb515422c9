#pragma once

#include <cstdint>
#include <vector>

#include "mbgen/chem.hpp"

namespace mbgen {

// Fixed-length binary structural vector.
struct Fingerprint {
  std::vector<std::uint8_t> bits;  // 0/1 per position

  std::size_t length() const { return bits.size(); }
  std::size_t popcount() const;
  std::vector<double> as_doubles() const;
};

// Folded circular environments: for every atom and radius 0..radius, the
// canonical string of its r-ball (induced subgraph of nodes within r bonds,
// center marked) is hashed into [0, length).
Fingerprint circular_fingerprint(const MolecularGraph& g, int radius, std::size_t length);

// |a AND b| / |a OR b|; two all-zero fingerprints count as identical (1.0).
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace mbgen
