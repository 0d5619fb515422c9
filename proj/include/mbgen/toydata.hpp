#pragma once

#include <cstdint>
#include <vector>

#include "mbgen/chem.hpp"
#include "mbgen/graph_io.hpp"
#include "mbgen/spectrum.hpp"

namespace mbgen {

// Deterministic desk-scale dataset: random valid molecules whose synthetic
// spectra list the formulas of connected fragments produced by deleting up to
// fragment_depth bonds, plus the intact precursor.
struct ToySpec {
  std::size_t molecule_count = 20;
  std::size_t min_heavy_atoms = 3;
  std::size_t max_heavy_atoms = 9;
  std::vector<Element> palette = {Element::C, Element::C, Element::C, Element::C,
                                  Element::N, Element::O, Element::O};
  int fragment_depth = 2;
  std::uint64_t seed = 1;
  // > 1 groups molecules into families sharing one formula (structural
  // isomers), which makes conditioning genuinely structure-dependent
  std::size_t isomers_per_formula = 1;
  double aromatic_ring_prob = 0.2;
  double extra_edge_prob = 0.5;
  double upgrade_prob = 0.35;
};

struct ToyDataset {
  std::vector<GraphRecord> graphs;
  std::vector<Spectrum> spectra;  // same order and ids as graphs
};

ToyDataset generate_toy_dataset(const ToySpec& spec);

// Fragment formulas reachable by deleting exactly 1..depth bonds; each
// fragment keeps the per-atom hydrogen counts of the parent molecule.
std::vector<MolecularFormula> fragment_formulas(const MolecularGraph& g, int depth);

Spectrum spectrum_for_molecule(const std::string& id, const MolecularGraph& g, int depth);

void write_toy_dataset(const ToyDataset& ds, const std::string& graph_path,
                       const std::string& mgf_path);

}  // namespace mbgen
