#include "mbgen/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace mbgen {

namespace {
[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}
}  // namespace

std::vector<GraphRecord> load_graph_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("graph dataset: cannot open " + path);
  return load_graph_stream(in, path);
}

std::vector<GraphRecord> load_graph_stream(std::istream& in, const std::string& origin) {
  std::vector<GraphRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string id, formula_tok, bonds_tok, extra;
    if (!(ls >> id)) continue;  // blank line
    if (!(ls >> formula_tok)) fail(origin, lineno, "missing formula");
    ls >> bonds_tok;
    if (ls >> extra) fail(origin, lineno, "trailing token: " + extra);

    GraphRecord rec;
    rec.id = id;
    try {
      rec.formula = parse_formula(formula_tok);
    } catch (const std::exception& e) {
      fail(origin, lineno, e.what());
    }
    std::vector<Element> nodes;
    try {
      nodes = formula_to_nodes(rec.formula);
    } catch (const std::exception& e) {
      fail(origin, lineno, e.what());
    }
    rec.graph.nodes = nodes;
    rec.graph.edges = BondMatrix(nodes.size());

    if (!bonds_tok.empty() && bonds_tok != "-") {
      std::istringstream bs(bonds_tok);
      std::string item;
      while (std::getline(bs, item, ';')) {
        if (item.empty()) fail(origin, lineno, "empty bond entry");
        std::size_t dash = item.find('-');
        std::size_t colon = item.find(':');
        if (dash == std::string::npos || colon == std::string::npos || dash > colon)
          fail(origin, lineno, "bond entry must be 'i-j:c', got '" + item + "'");
        std::size_t i = 0, j = 0;
        int c = 0;
        try {
          i = std::stoul(item.substr(0, dash));
          j = std::stoul(item.substr(dash + 1, colon - dash - 1));
          c = std::stoi(item.substr(colon + 1));
        } catch (const std::exception&) {
          fail(origin, lineno, "bond entry must be 'i-j:c', got '" + item + "'");
        }
        if (i >= nodes.size() || j >= nodes.size())
          fail(origin, lineno, "bond index out of range in '" + item + "' (n=" +
                                   std::to_string(nodes.size()) + ")");
        if (i >= j) fail(origin, lineno, "bond entry must have i < j, got '" + item + "'");
        if (c < 1 || c > 4)
          fail(origin, lineno, "bond category must be 1..4, got '" + item + "'");
        if (rec.graph.edges(i, j) != 0)
          fail(origin, lineno, "duplicate bond pair in '" + item + "'");
        rec.graph.edges.set(i, j, static_cast<std::uint8_t>(c));
      }
    }
    rec.graph.validate();
    if (!valence_violations(rec.graph).empty())
      std::cerr << origin << ":" << lineno << ": warning: molecule " << id
                << " exceeds standard valences\n";
    out.push_back(std::move(rec));
  }
  return out;
}

std::string graph_record_line(const std::string& id, const MolecularGraph& g) {
  // indices in the file refer to formula_to_nodes ordering, so remap
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<int>(g.nodes[a]) < static_cast<int>(g.nodes[b]);
  });
  std::vector<std::size_t> pos(n);
  for (std::size_t r = 0; r < n; ++r) pos[order[r]] = r;

  std::string s = id + " " + g.formula().to_string() + " ";
  std::vector<std::array<std::size_t, 3>> entries;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const std::uint8_t c = g.edges(a, b);
      if (c == 0) continue;
      std::size_t i = pos[a], j = pos[b];
      if (i > j) std::swap(i, j);
      entries.push_back({i, j, static_cast<std::size_t>(c)});
    }
  }
  std::sort(entries.begin(), entries.end());
  std::string bonds;
  for (const auto& e : entries) {
    if (!bonds.empty()) bonds += ';';
    bonds += std::to_string(e[0]) + "-" + std::to_string(e[1]) + ":" + std::to_string(e[2]);
  }
  s += bonds.empty() ? "-" : bonds;
  return s;
}

void write_graph_dataset(std::ostream& out, const std::vector<GraphRecord>& records) {
  for (const GraphRecord& r : records) out << graph_record_line(r.id, r.graph) << "\n";
}

void write_graph_dataset(const std::string& path, const std::vector<GraphRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("graph dataset: cannot write " + path);
  write_graph_dataset(out, records);
}

}  // namespace mbgen
