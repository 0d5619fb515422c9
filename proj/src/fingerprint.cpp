#include "mbgen/fingerprint.hpp"

#include <queue>
#include <stdexcept>

#include "mbgen/canonical.hpp"

namespace mbgen {

namespace {
std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// induced subgraph of all nodes within `radius` bonds of `center`;
// the center becomes local node 0
MolecularGraph ball_subgraph(const MolecularGraph& g, std::size_t center, int radius) {
  const std::size_t n = g.nodes.size();
  std::vector<int> dist(n, -1);
  std::queue<std::size_t> q;
  dist[center] = 0;
  q.push(center);
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    if (dist[v] == radius) continue;
    for (std::size_t u = 0; u < n; ++u) {
      if (g.edges(v, u) != 0 && dist[u] < 0) {
        dist[u] = dist[v] + 1;
        q.push(u);
      }
    }
  }
  std::vector<std::size_t> keep;
  keep.push_back(center);
  for (std::size_t v = 0; v < n; ++v)
    if (v != center && dist[v] >= 0) keep.push_back(v);
  MolecularGraph sub;
  sub.nodes.reserve(keep.size());
  for (std::size_t v : keep) sub.nodes.push_back(g.nodes[v]);
  sub.edges = BondMatrix(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = a + 1; b < keep.size(); ++b)
      sub.edges.set(a, b, g.edges(keep[a], keep[b]));
  return sub;
}
}  // namespace

std::size_t Fingerprint::popcount() const {
  std::size_t n = 0;
  for (std::uint8_t b : bits) n += b;
  return n;
}

std::vector<double> Fingerprint::as_doubles() const {
  std::vector<double> v(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) v[i] = bits[i] ? 1.0 : 0.0;
  return v;
}

Fingerprint circular_fingerprint(const MolecularGraph& g, int radius, std::size_t length) {
  if (radius < 0) throw std::invalid_argument("circular_fingerprint: negative radius");
  if (length == 0) throw std::invalid_argument("circular_fingerprint: zero length");
  g.validate();
  Fingerprint fp;
  fp.bits.assign(length, 0);
  for (std::size_t atom = 0; atom < g.nodes.size(); ++atom) {
    for (int r = 0; r <= radius; ++r) {
      MolecularGraph sub = ball_subgraph(g, atom, r);
      std::vector<int> colors(sub.nodes.size());
      for (std::size_t i = 0; i < sub.nodes.size(); ++i)
        colors[i] = 2 * static_cast<int>(sub.nodes[i]) + (i == 0 ? 0 : 1);
      const std::string env = canonical_string(sub, colors, 0);
      fp.bits[fnv1a64(env) % length] = 1;
    }
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.length() != b.length())
    throw std::invalid_argument("tanimoto: fingerprint lengths differ (" +
                                std::to_string(a.length()) + " vs " +
                                std::to_string(b.length()) + ")");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool ba = a.bits[i] != 0, bb = b.bits[i] != 0;
    inter += (ba && bb) ? 1 : 0;
    uni += (ba || bb) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace mbgen
