#include "mbgen/canonical.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace mbgen {

namespace {

using Colors = std::vector<int>;

// stable 1-WL refinement: new color ranks by (old color, sorted bonded
// neighborhood), so refined colors respect the old ordering
Colors refine(const MolecularGraph& g, Colors colors) {
  const std::size_t n = g.nodes.size();
  while (true) {
    std::vector<std::pair<std::vector<int>, std::size_t>> sig(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<int> s;
      s.push_back(colors[i]);
      std::vector<std::pair<int, int>> nb;
      for (std::size_t j = 0; j < n; ++j) {
        const std::uint8_t c = g.edges(i, j);
        if (c != 0) nb.emplace_back(static_cast<int>(c), colors[j]);
      }
      std::sort(nb.begin(), nb.end());
      for (auto& [c, col] : nb) {
        s.push_back(c);
        s.push_back(col);
      }
      sig[i] = {std::move(s), i};
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sig[a].first < sig[b].first; });
    Colors next(n);
    int rank = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0 && sig[order[k]].first != sig[order[k - 1]].first) ++rank;
      next[order[k]] = rank;
    }
    int old_classes = 0, new_classes = rank + 1;
    {
      std::vector<int> tmp = colors;
      std::sort(tmp.begin(), tmp.end());
      old_classes = static_cast<int>(std::unique(tmp.begin(), tmp.end()) - tmp.begin());
    }
    if (new_classes == old_classes) return next;
    colors = std::move(next);
  }
}

std::string serialize(const MolecularGraph& g, const Colors& colors, int tag_node) {
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[static_cast<std::size_t>(colors[i])] = i;
  std::string s;
  if (tag_node >= 0) {
    s += 'c';
    s += std::to_string(colors[static_cast<std::size_t>(tag_node)]);
    s += '|';
  }
  for (std::size_t i = 0; i < n; ++i) {
    s += element_symbol(g.nodes[order[i]]);
    s += ',';
  }
  s += '|';
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      s += static_cast<char>('0' + g.edges(order[i], order[j]));
  return s;
}

void search(const MolecularGraph& g, const Colors& colors, int tag_node, std::string& best) {
  const std::size_t n = g.nodes.size();
  // smallest color value whose class has more than one member
  int target = -1;
  std::map<int, int> class_size;
  for (int c : colors) class_size[c] += 1;
  for (const auto& [c, sz] : class_size) {
    if (sz > 1) {
      target = c;
      break;
    }
  }
  if (target < 0) {
    std::string s = serialize(g, colors, tag_node);
    if (best.empty() || s < best) best = std::move(s);
    return;
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (colors[v] != target) continue;
    Colors c2(n);
    for (std::size_t u = 0; u < n; ++u) c2[u] = 2 * colors[u] + (u == v ? 0 : 1);
    search(g, refine(g, std::move(c2)), tag_node, best);
  }
}

}  // namespace

std::string canonical_string(const MolecularGraph& g, const std::vector<int>& init_colors,
                             int tag_node) {
  g.validate();
  if (g.nodes.empty()) throw std::invalid_argument("canonical_string: empty graph");
  if (init_colors.size() != g.nodes.size())
    throw std::invalid_argument("canonical_string: color count mismatch");
  std::string best;
  search(g, refine(g, init_colors), tag_node, best);
  return best;
}

std::string canonical_form(const MolecularGraph& g) {
  std::vector<int> colors(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    colors[i] = static_cast<int>(g.nodes[i]);
  return canonical_string(g, colors);
}

bool is_isomorphic(const MolecularGraph& a, const MolecularGraph& b) {
  if (a.nodes.size() != b.nodes.size()) return false;
  std::vector<std::size_t> ca(kElementCount, 0), cb(kElementCount, 0);
  for (Element e : a.nodes) ca[static_cast<std::size_t>(e)]++;
  for (Element e : b.nodes) cb[static_cast<std::size_t>(e)]++;
  if (ca != cb) return false;
  return canonical_form(a) == canonical_form(b);
}

}  // namespace mbgen
