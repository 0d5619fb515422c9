#include "mbgen/mces.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mbgen {

namespace {

struct Search {
  const MolecularGraph& g1;
  const MolecularGraph& g2;
  std::size_t n1, n2;
  std::vector<std::size_t> order;  // g1 nodes, high degree first
  std::vector<int> map1;           // g1 node -> g2 node or -1 (unmapped/undecided)
  std::vector<bool> used2;
  std::vector<std::size_t> deg2;  // total degree in g2
  std::size_t e2_total = 0;
  std::size_t budget;
  std::size_t attempts = 0;
  bool aborted = false;
  std::size_t best = 0;
  std::size_t ub_skipped = 0;

  Search(const MolecularGraph& a, const MolecularGraph& b, std::size_t bud)
      : g1(a), g2(b), n1(a.nodes.size()), n2(b.nodes.size()), budget(bud) {
    map1.assign(n1, -1);
    used2.assign(n2, false);
    deg2.assign(n2, 0);
    std::vector<std::size_t> deg1(n1, 0);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n1; ++j)
        if (g1.edges(i, j) != 0) deg1[i]++;
    for (std::size_t i = 0; i < n2; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        if (g2.edges(i, j) != 0) deg2[i]++;
    e2_total = g2.edges.edge_count();
    order.resize(n1);
    for (std::size_t i = 0; i < n1; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a1, std::size_t b1) { return deg1[a1] > deg1[b1]; });
  }

  // Admissible bound on edges still matchable from position `pos`.
  std::size_t remaining_bound(std::size_t pos) const {
    // degree pairing for edges between two still-unassigned g1 nodes
    double pair_sum = 0.0;
    std::size_t cross = 0;
    for (std::size_t p = pos; p < n1; ++p) {
      const std::size_t v = order[p];
      std::size_t deg_rem = 0;
      for (std::size_t q = pos; q < n1; ++q) {
        const std::size_t w = order[q];
        if (w != v && g1.edges(v, w) != 0) deg_rem++;
      }
      std::size_t cap = 0;
      for (std::size_t u = 0; u < n2; ++u)
        if (!used2[u] && g2.nodes[u] == g1.nodes[v]) cap = std::max(cap, deg2[u]);
      pair_sum += static_cast<double>(std::min(deg_rem, cap));
      // edges from v to already-assigned g1 nodes; count only if some unused
      // compatible g2 node could still realize them
      for (std::size_t q = 0; q < pos; ++q) {
        const std::size_t w = order[q];
        const std::uint8_t c = g1.edges(v, w);
        if (c == 0 || map1[w] < 0) continue;
        bool possible = false;
        for (std::size_t u = 0; u < n2 && !possible; ++u) {
          if (!used2[u] && g2.nodes[u] == g1.nodes[v] &&
              g2.edges(u, static_cast<std::size_t>(map1[w])) == c)
            possible = true;
        }
        if (possible) cross++;
      }
    }
    return static_cast<std::size_t>(std::floor(pair_sum / 2.0)) + cross;
  }

  void dfs(std::size_t pos, std::size_t matched) {
    best = std::max(best, matched);
    if (pos == n1) return;
    // each matched edge consumes one distinct g2 edge
    std::size_t bound = matched + std::min(remaining_bound(pos), e2_total - matched);
    if (bound <= best) return;
    if (aborted || attempts >= budget) {
      aborted = true;
      ub_skipped = std::max(ub_skipped, bound);
      return;
    }
    const std::size_t v = order[pos];
    for (std::size_t u = 0; u < n2; ++u) {
      if (used2[u] || g2.nodes[u] != g1.nodes[v]) continue;
      ++attempts;
      std::size_t gained = 0;
      for (std::size_t q = 0; q < pos; ++q) {
        const std::size_t w = order[q];
        if (map1[w] < 0) continue;
        const std::uint8_t c = g1.edges(v, w);
        if (c != 0 && g2.edges(u, static_cast<std::size_t>(map1[w])) == c) gained++;
      }
      map1[v] = static_cast<int>(u);
      used2[u] = true;
      dfs(pos + 1, matched + gained);
      used2[u] = false;
      map1[v] = -1;
    }
    // leave v unmapped
    ++attempts;
    dfs(pos + 1, matched);
  }
};

}  // namespace

McesResult mces_distance(const MolecularGraph& g1, const MolecularGraph& g2,
                         std::size_t budget) {
  g1.validate();
  g2.validate();
  const std::size_t e1 = g1.edges.edge_count();
  const std::size_t e2 = g2.edges.edge_count();
  if (e1 == 0 || e2 == 0) {
    return {static_cast<double>(e1 + e2), true};
  }
  Search s(g1, g2, budget);
  s.dfs(0, 0);
  McesResult r;
  if (s.aborted) {
    const std::size_t ub = std::max(s.best, s.ub_skipped);
    r.distance = static_cast<double>(e1 + e2) - 2.0 * static_cast<double>(std::min(ub, std::min(e1, e2)));
    r.exact = false;
  } else {
    r.distance = static_cast<double>(e1 + e2) - 2.0 * static_cast<double>(s.best);
    r.exact = true;
  }
  if (r.distance < 0.0) r.distance = 0.0;
  return r;
}

}  // namespace mbgen
