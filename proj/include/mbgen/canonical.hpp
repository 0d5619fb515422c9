#pragma once

#include <string>
#include <vector>

#include "mbgen/chem.hpp"

namespace mbgen {

// Relabeling-invariant serialization: iterative neighborhood refinement with
// full backtracking over tied color classes, returning the lexicographically
// minimal adjacency string. init_colors partitions nodes beyond the element
// labels; tag_node, when >= 0, has its final position recorded in the string
// (used to mark fingerprint environment centers).
std::string canonical_string(const MolecularGraph& g, const std::vector<int>& init_colors,
                             int tag_node = -1);

std::string canonical_form(const MolecularGraph& g);

bool is_isomorphic(const MolecularGraph& a, const MolecularGraph& b);

}  // namespace mbgen
