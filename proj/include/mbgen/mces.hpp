#pragma once

#include <cstddef>

#include "mbgen/chem.hpp"

namespace mbgen {

struct McesResult {
  double distance = 0.0;  // |E1| + |E2| - 2*|MCES|, or a lower bound on it
  bool exact = true;      // false when the search budget ran out
};

// Maximum common edge substructure distance. Branch and bound over partial
// atom mappings (element labels and bond categories must match), with a
// degree-sequence upper bound. `budget` caps the number of assignment
// attempts; when exceeded the best provable lower bound on the distance is
// returned with exact=false.
McesResult mces_distance(const MolecularGraph& g1, const MolecularGraph& g2,
                         std::size_t budget = 2'000'000);

}  // namespace mbgen
