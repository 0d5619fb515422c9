#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mbgen/chem.hpp"

namespace mbgen {

// One molecule per line: "id formula bond-list". The bond list is
// semicolon-separated "i-j:c" with i < j over the formula_to_nodes ordering
// and c in 1..4; "-" (or nothing) means no bonds.
struct GraphRecord {
  std::string id;
  MolecularFormula formula;
  MolecularGraph graph;
};

std::vector<GraphRecord> load_graph_dataset(const std::string& path);
std::vector<GraphRecord> load_graph_stream(std::istream& in, const std::string& origin);

std::string graph_record_line(const std::string& id, const MolecularGraph& g);
void write_graph_dataset(const std::string& path, const std::vector<GraphRecord>& records);
void write_graph_dataset(std::ostream& out, const std::vector<GraphRecord>& records);

}  // namespace mbgen
