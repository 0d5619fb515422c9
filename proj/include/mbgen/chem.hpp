#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mbgen {

// Heavy elements in node order: carbon first, then alphabetical.
enum class Element : std::uint8_t { C = 0, Br, Cl, F, I, N, O, P, S };
constexpr std::size_t kElementCount = 9;

// Index layout of element-count vectors fed to the models: the nine heavy
// elements in node order, hydrogen last.
constexpr std::size_t kFormulaVectorLen = 10;

const char* element_symbol(Element e);
double element_max_valence(Element e);
double element_mass(Element e);
double hydrogen_mass();

// Bond classes; class 0 means no bond.
enum class BondCategory : std::uint8_t { none = 0, single, double_, triple, aromatic };
constexpr std::size_t kBondClasses = 5;
double bond_order(BondCategory c);  // aromatic counts 1.5

// Element -> count map over {C,H,N,O,S,P,F,Cl,Br,I}; counts >= 1.
struct MolecularFormula {
  std::map<std::string, int> counts;

  int heavy_atom_count() const;
  int hydrogen_count() const;
  bool contains(const MolecularFormula& sub) const;  // elementwise >=
  std::vector<double> count_vector() const;          // kFormulaVectorLen wide
  double monoisotopic_mass() const;
  std::string to_string() const;  // Hill order: C, H, then alphabetical
};

// Parses Hill-style element+count tokens ("C8H10N4O2"); throws
// std::invalid_argument with the byte offset on malformed input.
MolecularFormula parse_formula(const std::string& text);

// Symmetric bond-category matrix with a zero diagonal.
struct BondMatrix {
  std::size_t n = 0;
  std::vector<std::uint8_t> cat;  // n*n row-major

  BondMatrix() = default;
  explicit BondMatrix(std::size_t nn) : n(nn), cat(nn * nn, 0) {}

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return cat[i * n + j]; }
  void set(std::size_t i, std::size_t j, std::uint8_t c);
  bool is_symmetric_zero_diag() const;
  std::size_t edge_count() const;  // unordered bonded pairs
  bool operator==(const BondMatrix& o) const = default;
};

struct MolecularGraph {
  std::vector<Element> nodes;
  BondMatrix edges;

  std::size_t heavy_atom_count() const { return nodes.size(); }
  // Heavy atoms plus implicit hydrogens from free valence.
  MolecularFormula formula() const;
  void validate() const;  // throws on any broken invariant
};

// Heavy atoms of f, carbon first then alphabetical; throws if no heavy atom.
std::vector<Element> formula_to_nodes(const MolecularFormula& f);

struct ValenceViolation {
  std::size_t node;
  double used;
  double max;
};
std::vector<ValenceViolation> valence_violations(const MolecularGraph& g);

}  // namespace mbgen
