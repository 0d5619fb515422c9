#include "mbgen/chem.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace mbgen {

namespace {
struct ElementInfo {
  const char* symbol;
  double max_valence;
  double mass;
};

// order must match the Element enum (C first, then alphabetical)
constexpr std::array<ElementInfo, kElementCount> kElements = {{
    {"C", 4.0, 12.0},
    {"Br", 1.0, 78.918338},
    {"Cl", 1.0, 34.968853},
    {"F", 1.0, 18.998403},
    {"I", 1.0, 126.904473},
    {"N", 3.0, 14.003074},
    {"O", 2.0, 15.994915},
    {"P", 5.0, 30.973762},
    {"S", 6.0, 31.972071},
}};

constexpr double kHydrogenMass = 1.007825;

int element_index(const std::string& sym) {
  for (std::size_t i = 0; i < kElements.size(); ++i)
    if (sym == kElements[i].symbol) return static_cast<int>(i);
  return -1;
}
}  // namespace

const char* element_symbol(Element e) { return kElements[static_cast<std::size_t>(e)].symbol; }
double element_max_valence(Element e) {
  return kElements[static_cast<std::size_t>(e)].max_valence;
}
double element_mass(Element e) { return kElements[static_cast<std::size_t>(e)].mass; }
double hydrogen_mass() { return kHydrogenMass; }

double bond_order(BondCategory c) {
  switch (c) {
    case BondCategory::none: return 0.0;
    case BondCategory::single: return 1.0;
    case BondCategory::double_: return 2.0;
    case BondCategory::triple: return 3.0;
    case BondCategory::aromatic: return 1.5;
  }
  return 0.0;
}

int MolecularFormula::heavy_atom_count() const {
  int n = 0;
  for (const auto& [sym, c] : counts)
    if (sym != "H") n += c;
  return n;
}

int MolecularFormula::hydrogen_count() const {
  auto it = counts.find("H");
  return it == counts.end() ? 0 : it->second;
}

bool MolecularFormula::contains(const MolecularFormula& sub) const {
  for (const auto& [sym, c] : sub.counts) {
    auto it = counts.find(sym);
    if (it == counts.end() || it->second < c) return false;
  }
  return true;
}

std::vector<double> MolecularFormula::count_vector() const {
  std::vector<double> v(kFormulaVectorLen, 0.0);
  for (const auto& [sym, c] : counts) {
    if (sym == "H") {
      v[kFormulaVectorLen - 1] = c;
    } else {
      const int idx = element_index(sym);
      if (idx < 0) throw std::invalid_argument("unsupported element: " + sym);
      v[static_cast<std::size_t>(idx)] = c;
    }
  }
  return v;
}

double MolecularFormula::monoisotopic_mass() const {
  double m = 0.0;
  for (const auto& [sym, c] : counts) {
    if (sym == "H") {
      m += kHydrogenMass * c;
    } else {
      m += kElements[static_cast<std::size_t>(element_index(sym))].mass * c;
    }
  }
  return m;
}

std::string MolecularFormula::to_string() const {
  // Hill order: C, H, then remaining symbols alphabetically
  std::string out;
  auto emit = [&](const std::string& sym) {
    auto it = counts.find(sym);
    if (it == counts.end()) return;
    out += sym;
    if (it->second > 1) out += std::to_string(it->second);
  };
  emit("C");
  emit("H");
  std::vector<std::string> rest;
  for (const auto& [sym, c] : counts) {
    (void)c;
    if (sym != "C" && sym != "H") rest.push_back(sym);
  }
  std::sort(rest.begin(), rest.end());
  for (const auto& s : rest) emit(s);
  return out;
}

MolecularFormula parse_formula(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("formula parse error at offset 0: empty input");
  MolecularFormula f;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isupper(static_cast<unsigned char>(text[i]))) {
      throw std::invalid_argument("formula parse error at offset " + std::to_string(i) +
                                  ": expected element symbol");
    }
    const std::size_t sym_off = i;
    std::string sym(1, text[i]);
    ++i;
    if (i < text.size() && std::islower(static_cast<unsigned char>(text[i]))) {
      sym += text[i];
      ++i;
    }
    if (sym != "H" && element_index(sym) < 0) {
      throw std::invalid_argument("formula parse error at offset " + std::to_string(sym_off) +
                                  ": unknown element symbol '" + sym + "'");
    }
    int count = 1;
    if (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      const std::size_t num_off = i;
      long v = 0;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        v = v * 10 + (text[i] - '0');
        if (v > 100000) {
          throw std::invalid_argument("formula parse error at offset " +
                                      std::to_string(num_off) + ": count out of range");
        }
        ++i;
      }
      if (v == 0) {
        throw std::invalid_argument("formula parse error at offset " + std::to_string(num_off) +
                                    ": zero count");
      }
      count = static_cast<int>(v);
    }
    f.counts[sym] += count;
  }
  return f;
}

void BondMatrix::set(std::size_t i, std::size_t j, std::uint8_t c) {
  if (i == j && c != 0) throw std::invalid_argument("bond matrix: self bond");
  if (c >= kBondClasses) throw std::invalid_argument("bond matrix: bad category");
  cat[i * n + j] = c;
  cat[j * n + i] = c;
}

bool BondMatrix::is_symmetric_zero_diag() const {
  for (std::size_t i = 0; i < n; ++i) {
    if (cat[i * n + i] != 0) return false;
    for (std::size_t j = i + 1; j < n; ++j)
      if (cat[i * n + j] != cat[j * n + i]) return false;
  }
  return true;
}

std::size_t BondMatrix::edge_count() const {
  std::size_t e = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (cat[i * n + j] != 0) ++e;
  return e;
}

MolecularFormula MolecularGraph::formula() const {
  MolecularFormula f;
  for (Element e : nodes) f.counts[element_symbol(e)] += 1;
  double hydrogens = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double used = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j)
      used += bond_order(static_cast<BondCategory>(edges(i, j)));
    const double free = element_max_valence(nodes[i]) - used;
    if (free > 0.0) hydrogens += std::floor(free);
  }
  if (hydrogens > 0.0) f.counts["H"] = static_cast<int>(hydrogens);
  return f;
}

void MolecularGraph::validate() const {
  if (edges.n != nodes.size())
    throw std::invalid_argument("molecular graph: node/edge size mismatch");
  for (std::uint8_t c : edges.cat)
    if (c >= kBondClasses) throw std::invalid_argument("molecular graph: bad bond category");
  if (!edges.is_symmetric_zero_diag())
    throw std::invalid_argument("molecular graph: edges must be symmetric with zero diagonal");
}

std::vector<Element> formula_to_nodes(const MolecularFormula& f) {
  std::vector<Element> nodes;
  for (std::size_t e = 0; e < kElementCount; ++e) {
    auto it = f.counts.find(kElements[e].symbol);
    if (it == f.counts.end()) continue;
    for (int c = 0; c < it->second; ++c) nodes.push_back(static_cast<Element>(e));
  }
  if (nodes.empty())
    throw std::invalid_argument("formula has no heavy atoms: " + f.to_string());
  return nodes;
}

std::vector<ValenceViolation> valence_violations(const MolecularGraph& g) {
  std::vector<ValenceViolation> out;
  const std::size_t n = g.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    double used = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      used += bond_order(static_cast<BondCategory>(g.edges(i, j)));
    const double maxv = element_max_valence(g.nodes[i]);
    if (used > maxv + 1e-9) out.push_back({i, used, maxv});
  }
  return out;
}

}  // namespace mbgen
