#include "mbgen/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "mbgen/canonical.hpp"
#include "mbgen/mgf.hpp"
#include "mbgen/rng.hpp"

namespace mbgen {

namespace {

// structural recipe; two molecules built from the same recipe share a formula
struct Recipe {
  std::vector<Element> elements;  // sorted, matches formula_to_nodes order
  bool aromatic_ring = false;
  std::size_t extra_edges = 0;
  std::size_t doubles = 0;
  std::size_t triples = 0;
};

Recipe sample_recipe(const ToySpec& spec, Rng& rng) {
  Recipe r;
  const std::size_t n =
      spec.min_heavy_atoms + rng.uniform_int(spec.max_heavy_atoms - spec.min_heavy_atoms + 1);
  for (std::size_t i = 0; i < n; ++i)
    r.elements.push_back(spec.palette[rng.uniform_int(spec.palette.size())]);
  std::sort(r.elements.begin(), r.elements.end(),
            [](Element a, Element b) { return static_cast<int>(a) < static_cast<int>(b); });
  const std::size_t carbons =
      static_cast<std::size_t>(std::count(r.elements.begin(), r.elements.end(), Element::C));
  r.aromatic_ring = carbons >= 6 && rng.uniform01() < spec.aromatic_ring_prob;
  r.extra_edges = (rng.uniform01() < spec.extra_edge_prob ? 1 : 0) +
                  (rng.uniform01() < spec.extra_edge_prob * 0.4 ? 1 : 0);
  r.doubles = (rng.uniform01() < spec.upgrade_prob ? 1 : 0) +
              (rng.uniform01() < spec.upgrade_prob * 0.5 ? 1 : 0);
  r.triples = rng.uniform01() < spec.upgrade_prob * 0.3 ? 1 : 0;
  return r;
}

// builds a molecule realizing the recipe exactly, or returns false
bool build_from_recipe(const Recipe& rec, Rng& rng, MolecularGraph& out) {
  const std::size_t n = rec.elements.size();
  MolecularGraph g;
  g.nodes = rec.elements;
  g.edges = BondMatrix(n);
  std::vector<double> free(n);
  for (std::size_t i = 0; i < n; ++i) free[i] = element_max_valence(g.nodes[i]);

  std::vector<bool> attached(n, false);
  std::vector<std::size_t> pending;

  if (rec.aromatic_ring) {
    std::vector<std::size_t> carbons;
    for (std::size_t i = 0; i < n; ++i)
      if (g.nodes[i] == Element::C) carbons.push_back(i);
    if (carbons.size() < 6) return false;
    // pick 6 distinct carbons
    for (std::size_t i = 0; i < 6; ++i) {
      const std::size_t j = i + rng.uniform_int(carbons.size() - i);
      std::swap(carbons[i], carbons[j]);
    }
    for (std::size_t i = 0; i < 6; ++i) {
      const std::size_t a = carbons[i], b = carbons[(i + 1) % 6];
      g.edges.set(a, b, static_cast<std::uint8_t>(BondCategory::aromatic));
      free[a] -= 1.5;
      free[b] -= 1.5;
    }
    for (std::size_t i = 0; i < 6; ++i) attached[carbons[i]] = true;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!attached[i]) pending.push_back(i);
  // random attach order
  for (std::size_t i = 0; i + 1 < pending.size(); ++i) {
    const std::size_t j = i + rng.uniform_int(pending.size() - i);
    std::swap(pending[i], pending[j]);
  }
  std::size_t start = 0;
  if (std::none_of(attached.begin(), attached.end(), [](bool b) { return b; })) {
    attached[pending[0]] = true;
    start = 1;
  }
  for (std::size_t pi = start; pi < pending.size(); ++pi) {
    const std::size_t v = pending[pi];
    std::vector<std::size_t> hosts;
    for (std::size_t u = 0; u < n; ++u)
      if (attached[u] && free[u] >= 1.0) hosts.push_back(u);
    if (hosts.empty()) return false;
    const std::size_t u = hosts[rng.uniform_int(hosts.size())];
    g.edges.set(v, u, static_cast<std::uint8_t>(BondCategory::single));
    free[v] -= 1.0;
    free[u] -= 1.0;
    attached[v] = true;
  }

  for (std::size_t k = 0; k < rec.extra_edges; ++k) {
    std::vector<std::pair<std::size_t, std::size_t>> cands;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (g.edges(i, j) == 0 && free[i] >= 1.0 && free[j] >= 1.0) cands.emplace_back(i, j);
    if (cands.empty()) return false;
    const auto [i, j] = cands[rng.uniform_int(cands.size())];
    g.edges.set(i, j, static_cast<std::uint8_t>(BondCategory::single));
    free[i] -= 1.0;
    free[j] -= 1.0;
  }
  for (std::size_t k = 0; k < rec.doubles; ++k) {
    std::vector<std::pair<std::size_t, std::size_t>> cands;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (g.edges(i, j) == static_cast<std::uint8_t>(BondCategory::single) &&
            free[i] >= 1.0 && free[j] >= 1.0)
          cands.emplace_back(i, j);
    if (cands.empty()) return false;
    const auto [i, j] = cands[rng.uniform_int(cands.size())];
    g.edges.set(i, j, static_cast<std::uint8_t>(BondCategory::double_));
    free[i] -= 1.0;
    free[j] -= 1.0;
  }
  for (std::size_t k = 0; k < rec.triples; ++k) {
    std::vector<std::pair<std::size_t, std::size_t>> cands;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (g.edges(i, j) == static_cast<std::uint8_t>(BondCategory::double_) &&
            free[i] >= 1.0 && free[j] >= 1.0)
          cands.emplace_back(i, j);
    if (cands.empty()) return false;
    const auto [i, j] = cands[rng.uniform_int(cands.size())];
    g.edges.set(i, j, static_cast<std::uint8_t>(BondCategory::triple));
    free[i] -= 1.0;
    free[j] -= 1.0;
  }

  if (!valence_violations(g).empty()) return false;
  g.validate();
  out = std::move(g);
  return true;
}

std::vector<double> original_hydrogens(const MolecularGraph& g) {
  const std::size_t n = g.nodes.size();
  std::vector<double> h(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double used = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      used += bond_order(static_cast<BondCategory>(g.edges(i, j)));
    h[i] = std::max(0.0, std::floor(element_max_valence(g.nodes[i]) - used));
  }
  return h;
}

void collect_components(const MolecularGraph& g,
                        const std::vector<std::pair<std::size_t, std::size_t>>& removed,
                        std::vector<std::vector<std::size_t>>& comps) {
  const std::size_t n = g.nodes.size();
  auto removed_has = [&](std::size_t a, std::size_t b) {
    for (const auto& [x, y] : removed)
      if ((x == a && y == b) || (x == b && y == a)) return true;
    return false;
  };
  std::vector<int> comp(n, -1);
  int nc = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = nc;
    std::vector<std::size_t> members;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (std::size_t u = 0; u < n; ++u) {
        if (g.edges(v, u) != 0 && comp[u] < 0 && !removed_has(v, u)) {
          comp[u] = nc;
          stack.push_back(u);
        }
      }
    }
    std::sort(members.begin(), members.end());
    comps.push_back(std::move(members));
    ++nc;
  }
}

}  // namespace

std::vector<MolecularFormula> fragment_formulas(const MolecularGraph& g, int depth) {
  const std::size_t n = g.nodes.size();
  const std::vector<double> orig_h = original_hydrogens(g);
  std::vector<std::pair<std::size_t, std::size_t>> bonds;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (g.edges(i, j) != 0) bonds.emplace_back(i, j);

  std::vector<MolecularFormula> out;
  auto emit_components = [&](const std::vector<std::pair<std::size_t, std::size_t>>& removed) {
    std::vector<std::vector<std::size_t>> comps;
    collect_components(g, removed, comps);
    for (const auto& members : comps) {
      if (members.size() == n) continue;  // intact molecule, not a fragment
      MolecularFormula f;
      double h = 0.0;
      for (std::size_t v : members) {
        f.counts[element_symbol(g.nodes[v])] += 1;
        h += orig_h[v];
      }
      if (h > 0.0) f.counts["H"] = static_cast<int>(h);
      out.push_back(std::move(f));
    }
  };

  if (depth >= 1) {
    for (const auto& b : bonds) emit_components({b});
  }
  if (depth >= 2) {
    for (std::size_t a = 0; a < bonds.size(); ++a)
      for (std::size_t b = a + 1; b < bonds.size(); ++b)
        emit_components({bonds[a], bonds[b]});
  }
  return out;
}

Spectrum spectrum_for_molecule(const std::string& id, const MolecularGraph& g, int depth) {
  Spectrum s;
  s.id = id;
  s.precursor = g.formula();
  const std::size_t n = g.nodes.size();

  std::map<std::string, std::pair<MolecularFormula, double>> peaks;  // formula -> weight
  for (MolecularFormula& f : fragment_formulas(g, depth)) {
    const double w = static_cast<double>(f.heavy_atom_count());
    auto [it, fresh] = peaks.try_emplace(f.to_string(), f, w);
    if (!fresh) it->second.second = std::max(it->second.second, w);
  }
  // the intact precursor is always the heaviest peak
  peaks[s.precursor.to_string()] = {s.precursor, static_cast<double>(n)};

  for (auto& [key, fw] : peaks) {
    (void)key;
    Peak p;
    p.formula = fw.first;
    p.mz = fw.first.monoisotopic_mass();
    p.intensity = fw.second;
    s.peaks.push_back(std::move(p));
  }
  std::sort(s.peaks.begin(), s.peaks.end(),
            [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
  s.normalize();
  s.validate();
  return s;
}

ToyDataset generate_toy_dataset(const ToySpec& spec) {
  if (spec.molecule_count == 0) throw std::invalid_argument("toy dataset: zero molecules");
  if (spec.min_heavy_atoms < 2 || spec.max_heavy_atoms < spec.min_heavy_atoms)
    throw std::invalid_argument("toy dataset: bad atom range");
  if (spec.fragment_depth < 1) throw std::invalid_argument("toy dataset: depth must be >= 1");
  Rng rng(spec.seed);

  ToyDataset ds;
  std::vector<std::string> canon_seen;
  while (ds.graphs.size() < spec.molecule_count) {
    // base molecule of a new formula family
    MolecularGraph base;
    Recipe rec;
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      rec = sample_recipe(spec, rng);
      ok = build_from_recipe(rec, rng, base);
      if (ok) {
        const std::string c = canonical_form(base);
        if (std::find(canon_seen.begin(), canon_seen.end(), c) != canon_seen.end()) ok = false;
      }
    }
    if (!ok) throw std::runtime_error("toy dataset: could not build a molecule (spec too tight)");

    std::vector<MolecularGraph> family{base};
    std::vector<std::string> family_canon{canonical_form(base)};
    while (family.size() < spec.isomers_per_formula &&
           ds.graphs.size() + family.size() < spec.molecule_count) {
      bool got = false;
      for (int attempt = 0; attempt < 400 && !got; ++attempt) {
        MolecularGraph iso;
        if (!build_from_recipe(rec, rng, iso)) continue;
        const std::string c = canonical_form(iso);
        if (std::find(family_canon.begin(), family_canon.end(), c) != family_canon.end())
          continue;
        if (std::find(canon_seen.begin(), canon_seen.end(), c) != canon_seen.end()) continue;
        family.push_back(std::move(iso));
        family_canon.push_back(c);
        got = true;
      }
      if (!got) break;  // family saturated, move on
    }
    for (std::size_t i = 0; i < family.size(); ++i) {
      canon_seen.push_back(family_canon[i]);
      GraphRecord rec2;
      char idbuf[16];
      std::snprintf(idbuf, sizeof idbuf, "m%04zu", ds.graphs.size() + 1);
      rec2.id = idbuf;
      rec2.graph = std::move(family[i]);
      rec2.formula = rec2.graph.formula();
      ds.graphs.push_back(std::move(rec2));
    }
  }

  for (const GraphRecord& gr : ds.graphs)
    ds.spectra.push_back(spectrum_for_molecule(gr.id, gr.graph, spec.fragment_depth));
  return ds;
}

void write_toy_dataset(const ToyDataset& ds, const std::string& graph_path,
                       const std::string& mgf_path) {
  write_graph_dataset(graph_path, ds.graphs);
  write_mgf_file(mgf_path, ds.spectra);
}

}  // namespace mbgen
