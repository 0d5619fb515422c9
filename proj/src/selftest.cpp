#include "mbgen/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "mbgen/adam.hpp"
#include "mbgen/canonical.hpp"
#include "mbgen/chem.hpp"
#include "mbgen/checkpoint.hpp"
#include "mbgen/decoder.hpp"
#include "mbgen/diffusion.hpp"
#include "mbgen/encoder.hpp"
#include "mbgen/fingerprint.hpp"
#include "mbgen/graph_io.hpp"
#include "mbgen/kernels.hpp"
#include "mbgen/mces.hpp"
#include "mbgen/mgf.hpp"
#include "mbgen/nn_util.hpp"
#include "mbgen/toydata.hpp"
#include "mbgen/train.hpp"

namespace mbgen {

namespace {

struct Harness {
  std::ostream& out;
  int failures = 0;

  void check(const char* name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string err;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      err = e.what();
    }
    if (ok) {
      out << "[ ok ] " << name << "\n";
    } else {
      ++failures;
      out << "[FAIL] " << name;
      if (!err.empty()) out << " (" << err << ")";
      out << "\n";
    }
  }
};

bool approx(double a, double b, double tol) { return std::abs(a - b) <= tol; }

MolecularGraph chain_graph(std::vector<Element> elems,
                           std::vector<std::tuple<std::size_t, std::size_t, int>> bonds) {
  MolecularGraph g;
  g.nodes = std::move(elems);
  g.edges = BondMatrix(g.nodes.size());
  for (auto& [i, j, c] : bonds) g.edges.set(i, j, static_cast<std::uint8_t>(c));
  return g;
}

MolecularGraph random_graph(Rng& rng, std::size_t n) {
  MolecularGraph g;
  for (std::size_t i = 0; i < n; ++i)
    g.nodes.push_back(static_cast<Element>(rng.uniform_int(kElementCount)));
  g.edges = BondMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform01() < 0.4)
        g.edges.set(i, j, static_cast<std::uint8_t>(1 + rng.uniform_int(4)));
  return g;
}

MolecularGraph permute_graph(const MolecularGraph& g, const std::vector<std::size_t>& perm) {
  const std::size_t n = g.nodes.size();
  MolecularGraph p;
  p.nodes.resize(n);
  p.edges = BondMatrix(n);
  for (std::size_t i = 0; i < n; ++i) p.nodes[perm[i]] = g.nodes[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (g.edges(i, j) != 0) p.edges.set(perm[i], perm[j], g.edges(i, j));
  return p;
}

// central finite differences against the tape's gradients; the denominator
// floor absorbs subtraction roundoff on near-zero gradients
bool gradcheck(ParamStore& store, const std::function<double()>& loss_with_grads,
               double tol) {
  store.zero_grads();
  const double l0 = loss_with_grads();
  std::vector<std::vector<double>> analytic;
  for (Parameter* p : store.all()) analytic.push_back(p->grad.data);
  const double h = 1e-6;
  const double floor = 1e-4 * std::max(1.0, std::abs(l0));
  std::size_t pi = 0;
  for (Parameter* p : store.all()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + h;
      store.zero_grads();
      const double lp = loss_with_grads();
      p->value.data[i] = keep - h;
      store.zero_grads();
      const double lm = loss_with_grads();
      p->value.data[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
      if (rel > tol) return false;
    }
    ++pi;
  }
  return true;
}

}  // namespace

int run_selftest(std::ostream& out) {
  Harness h{out};

  h.check("rng determinism", [] {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
      if (a.next_u64() != b.next_u64()) return false;
    Rng c1 = a.child(1), c2 = a.child(2);
    return c1.next_u64() != c2.next_u64();
  });

  h.check("softmax is a probability vector", [] {
    Rng rng(7);
    Tape t;
    for (int rep = 0; rep < 20; ++rep) {
      Tensor x(Shape{7});
      for (double& v : x.data) v = rng.uniform(-50, 50);
      const Tensor& y = t.val(t.softmax(t.input(x), 0));
      double s = 0.0;
      for (double v : y.data) {
        if (v < 0.0) return false;
        s += v;
      }
      if (!approx(s, 1.0, 1e-12)) return false;
    }
    return true;
  });

  h.check("softmax symmetric and shifted cases", [] {
    Tape t;
    const Tensor& a = t.val(t.softmax(t.input(Tensor::vec({0, 0, 0})), 0));
    if (!approx(a.data[0], 1.0 / 3, 1e-15) || !approx(a.data[2], 1.0 / 3, 1e-15)) return false;
    const Tensor& b = t.val(t.softmax(t.input(Tensor::vec({1000, 0})), 0));
    return approx(b.data[0], 1.0, 1e-12) && approx(b.data[1], 0.0, 1e-12);
  });

  h.check("softmax of fully masked slice is uniform", [] {
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor x(Shape{3});
    for (double& v : x.data) v = ninf;
    Tensor y(Shape{3});
    kern::softmax(x.data.data(), y.data.data(), 1, 3, 1);
    return approx(y.data[0], 1.0 / 3, 1e-15) && approx(y.data[1], 1.0 / 3, 1e-15);
  });

  h.check("linear identity and hand case", [] {
    Tape t;
    Tensor I2(Shape{2, 2}, {1, 0, 0, 1});
    const Tensor& y1 =
        t.val(t.linear(t.input(I2), Tape::kNone, t.input(Tensor::vec({3, 4}))));
    if (y1.data[0] != 3 || y1.data[1] != 4) return false;
    Tensor W(Shape{2, 2}, {1, 1, 0, 1});
    const Tensor& y2 =
        t.val(t.linear(t.input(W), t.input(Tensor::vec({0, 0})), t.input(Tensor::vec({1, 2}))));
    if (y2.data[0] != 3 || y2.data[1] != 2) return false;
    try {
      t.linear(t.input(Tensor(Shape{3, 5})), Tape::kNone, t.input(Tensor::vec({1, 2})));
      return false;
    } catch (const std::invalid_argument&) {
      return true;
    }
  });

  h.check("film leaves o unchanged at y = 0", [] {
    Rng rng(3);
    ParamStore store;
    Parameter& W1 = store.create("W1", xavier_uniform(rng, 4, 3));
    Parameter& W2 = store.create("W2", xavier_uniform(rng, 4, 3));
    Tape t;
    Tensor o(Shape{2, 2, 4});
    for (double& v : o.data) v = rng.normal();
    Tape::Id oid = t.input(o);
    Tape::Id f = t.film(oid, t.input(Tensor::zeros({3})), t.param(W1), t.param(W2));
    const Tensor& fo = t.val(f);
    for (std::size_t i = 0; i < o.size(); ++i)
      if (fo.data[i] != o.data[i]) return false;
    return true;
  });

  h.check("gradients match finite differences", [] {
    Rng rng(11);
    ParamStore store;
    Parameter& W = store.create("W", xavier_uniform(rng, 4, 4));
    Parameter& b = store.create("b", Tensor::zeros({4}));
    Parameter& W1 = store.create("W1", xavier_uniform(rng, 4, 3));
    Parameter& W2 = store.create("W2", xavier_uniform(rng, 4, 3));
    Tensor x(Shape{5, 4});
    for (double& v : x.data) v = rng.normal();
    Tensor y(Shape{3});
    for (double& v : y.data) v = rng.normal();
    auto loss = [&] {
      Tape t;
      Tape::Id o = t.gelu(t.linear(t.param(W), t.param(b), t.input(x)));
      Tape::Id f = t.film(o, t.input(y), t.param(W1), t.param(W2));
      Tape::Id l = t.sum_all(t.softmax(f, 1));
      t.backward(l);
      return t.val(l).data[0];
    };
    return gradcheck(store, loss, 1e-5);
  });

  h.check("second backward without reset fails", [] {
    Tape t;
    Tape::Id l = t.sum_all(t.input(Tensor::vec({1, 2})));
    t.backward(l);
    try {
      t.backward(l);
      return false;
    } catch (const std::logic_error&) {
      return true;
    }
  });

  h.check("adam descends and converges on a quadratic", [] {
    ParamStore store;
    Parameter& w = store.create("w", Tensor::vec({1.0}));
    Adam adam(store.all(), {0.1, 0.9, 0.999, 1e-8});
    adam.step();  // zero gradient: no change
    if (w.value.data[0] != 1.0) return false;
    // minimize (w - 0.25)^2
    for (int i = 0; i < 200; ++i) {
      w.grad.data[0] = 2.0 * (w.value.data[0] - 0.25);
      adam.step();
    }
    return std::abs(w.value.data[0] - 0.25) < 1e-3;
  });

  h.check("formula parsing", [] {
    MolecularFormula f = parse_formula("C8H10N4O2");
    if (f.counts["C"] != 8 || f.counts["H"] != 10 || f.counts["N"] != 4 || f.counts["O"] != 2)
      return false;
    try {
      parse_formula("X2");
      return false;
    } catch (const std::invalid_argument& e) {
      return std::string(e.what()).find("offset 0") != std::string::npos;
    }
  });

  h.check("formula_to_nodes ordering", [] {
    MolecularFormula f;
    f.counts = {{"C", 2}, {"H", 6}, {"O", 1}};
    auto nodes = formula_to_nodes(f);
    if (nodes != std::vector<Element>{Element::C, Element::C, Element::O}) return false;
    MolecularFormula h2;
    h2.counts = {{"H", 2}};
    try {
      formula_to_nodes(h2);
      return false;
    } catch (const std::invalid_argument&) {
      return true;
    }
  });

  h.check("canonical form is permutation invariant", [] {
    Rng rng(5);
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t n = 2 + rng.uniform_int(6);
      MolecularGraph g = random_graph(rng, n);
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(perm[i], perm[j]);
      }
      if (canonical_form(g) != canonical_form(permute_graph(g, perm))) return false;
    }
    return true;
  });

  h.check("canonical form separates C2H6O isomers", [] {
    MolecularGraph ethanol = chain_graph({Element::C, Element::C, Element::O},
                                         {{0, 1, 1}, {1, 2, 1}});
    MolecularGraph ether = chain_graph({Element::C, Element::C, Element::O},
                                       {{0, 2, 1}, {1, 2, 1}});
    return canonical_form(ethanol) != canonical_form(ether) &&
           !is_isomorphic(ethanol, ether) &&
           is_isomorphic(ethanol, permute_graph(ethanol, {2, 1, 0}));
  });

  h.check("circular fingerprint", [] {
    MolecularGraph lone = chain_graph({Element::C}, {});
    Fingerprint fp = circular_fingerprint(lone, 2, 2048);
    if (fp.popcount() != 1) return false;
    MolecularGraph ethanol = chain_graph({Element::C, Element::C, Element::O},
                                         {{0, 1, 1}, {1, 2, 1}});
    MolecularGraph ether = chain_graph({Element::C, Element::C, Element::O},
                                       {{0, 2, 1}, {1, 2, 1}});
    Fingerprint fa = circular_fingerprint(ethanol, 1, 2048);
    Fingerprint fb = circular_fingerprint(ether, 1, 2048);
    if (fa.bits == fb.bits) return false;
    Fingerprint fc = circular_fingerprint(permute_graph(ethanol, {1, 2, 0}), 1, 2048);
    return fa.bits == fc.bits;
  });

  h.check("tanimoto", [] {
    Fingerprint a, b;
    a.bits = {0, 1, 1, 0};
    b.bits = {0, 0, 1, 1};
    if (!approx(tanimoto(a, a), 1.0, 0)) return false;
    if (!approx(tanimoto(a, b), 1.0 / 3, 1e-15)) return false;
    Fingerprint empty1, empty2;
    empty1.bits.assign(4, 0);
    empty2.bits.assign(4, 0);
    if (!approx(tanimoto(empty1, empty2), 1.0, 0)) return false;
    Fingerprint c;
    c.bits.assign(5, 0);
    try {
      tanimoto(a, c);
      return false;
    } catch (const std::invalid_argument&) {
      return true;
    }
  });

  h.check("mces distance basics", [] {
    MolecularGraph cc = chain_graph({Element::C, Element::C}, {{0, 1, 1}});
    MolecularGraph c2 = chain_graph({Element::C, Element::C}, {});
    if (mces_distance(cc, cc).distance != 0.0) return false;
    if (mces_distance(cc, c2).distance != 1.0) return false;
    MolecularGraph g1 = chain_graph({Element::C, Element::C, Element::O},
                                    {{0, 1, 2}, {1, 2, 1}});
    MolecularGraph g2 = chain_graph({Element::C, Element::C, Element::O},
                                    {{0, 1, 1}, {1, 2, 1}});
    return mces_distance(g1, g2).distance == mces_distance(g2, g1).distance;
  });

  h.check("valence accounting", [] {
    MolecularGraph lone = chain_graph({Element::C}, {});
    if (!valence_violations(lone).empty()) return false;
    MolecularGraph crowded = chain_graph(
        {Element::C, Element::C, Element::C, Element::C, Element::C, Element::C},
        {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}, {0, 5, 1}});
    auto v = valence_violations(crowded);
    if (v.size() != 1 || v[0].node != 0 || v[0].used != 5.0 || v[0].max != 4.0) return false;
    MolecularGraph benzene = chain_graph(
        {Element::C, Element::C, Element::C, Element::C, Element::C, Element::C},
        {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 4, 4}, {4, 5, 4}, {0, 5, 4}});
    return valence_violations(benzene).empty();
  });

  h.check("transition matrices: stochastic, closed form = product", [] {
    NoiseSchedule s = NoiseSchedule::cosine(50);
    std::vector<double> m = {0.6, 0.2, 0.1, 0.06, 0.04};
    TransitionMatrices tm = build_transitions(s, m);  // validates internally
    return tm.T == 50 && tm.k == 5;
  });

  h.check("posterior equals Bayes enumeration", [] {
    NoiseSchedule s = NoiseSchedule::cosine(50);
    TransitionMatrices tm = build_transitions(s, {0.6, 0.2, 0.1, 0.06, 0.04});
    for (std::size_t t = 1; t <= tm.T; ++t) {
      for (std::size_t et = 0; et < tm.k; ++et) {
        for (std::size_t e0 = 0; e0 < tm.k; ++e0) {
          std::vector<double> direct(tm.k);
          double norm = 0.0;
          for (std::size_t c = 0; c < tm.k; ++c) {
            direct[c] = tm.Q[t].at2(c, et) * tm.Qbar[t - 1].at2(e0, c);
            norm += direct[c];
          }
          const std::vector<double> p = posterior(et, e0, t, tm);
          for (std::size_t c = 0; c < tm.k; ++c)
            if (!approx(p[c], direct[c] / norm, 1e-12)) return false;
        }
      }
    }
    return true;
  });

  h.check("forward noise: identity step and symmetry", [] {
    NoiseSchedule s;
    s.T = 2;
    s.alpha_bar = {1.0, 1.0, 0.0};
    TransitionMatrices tm = build_transitions(s, {0.7, 0.1, 0.1, 0.05, 0.05});
    Rng rng(8);
    MolecularGraph g = random_graph(rng, 6);
    const BondMatrix e1 = forward_noise(g.edges, 1, tm, rng);
    if (!(e1 == g.edges)) return false;
    const BondMatrix e2 = forward_noise(g.edges, 2, tm, rng);
    return e2.is_symmetric_zero_diag();
  });

  h.check("training loss analytic values", [] {
    Tape t;
    BondMatrix e0(3);
    e0.set(0, 1, 2);
    Tensor uniform(Shape{3, 3, 5});
    Tape::Id l1 = training_loss(t, t.input(uniform), e0);
    if (!approx(t.val(l1).data[0], std::log(5.0), 1e-12)) return false;
    Tensor sharp(Shape{3, 3, 5});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 5; ++c)
          sharp.data[(i * 3 + j) * 5 + c] = (c == e0(i, j) ? 30.0 : 0.0);
    Tape::Id l2 = training_loss(t, t.input(sharp), e0);
    return t.val(l2).data[0] < 1e-3;
  });

  h.check("reverse mixture matches enumeration and normalizes", [] {
    NoiseSchedule s = NoiseSchedule::cosine(50);
    TransitionMatrices tm = build_transitions(s, {0.6, 0.2, 0.1, 0.06, 0.04});
    Rng rng(13);
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t t = 1 + rng.uniform_int(tm.T);
      const std::size_t et = rng.uniform_int(tm.k);
      std::vector<double> phat(tm.k);
      double zs = 0.0;
      for (double& v : phat) {
        v = rng.uniform01() + 1e-3;
        zs += v;
      }
      for (double& v : phat) v /= zs;
      const std::vector<double> mix = reverse_mixture(phat, et, t, tm);
      std::vector<double> direct(tm.k, 0.0);
      for (std::size_t e = 0; e < tm.k; ++e) {
        const std::vector<double> post = posterior(et, e, t, tm);
        for (std::size_t c = 0; c < tm.k; ++c) direct[c] += post[c] * phat[e];
      }
      for (std::size_t c = 0; c < tm.k; ++c)
        if (!approx(mix[c], direct[c], 1e-12)) return false;
    }
    return true;
  });

  h.check("decoder logits: symmetric, diagonal pinned, normalized", [] {
    Rng rng(21);
    ParamStore store;
    DecoderConfig dc;
    dc.node_dim = 16;
    dc.edge_dim = 8;
    dc.layers = 1;
    dc.node_heads = 2;
    dc.mb_heads = 2;
    dc.ffn_hidden = 16;
    dc.cond_dim = 8;
    dc.time_dim = 8;
    dc.y_dim = 8;
    ManyBodyDecoder dec(dc, store, rng);
    MolecularGraph g = random_graph(rng, 5);
    BondMatrix Et(5);
    Et.set(0, 1, 1);
    Et.set(2, 3, 4);
    Tape t(false);
    Tensor y(Shape{8});
    for (double& v : y.data) v = rng.normal();
    Tape::Id logits = dec.decode_logits(t, g.nodes, Et, 3, t.input(y));
    const Tensor& lv = t.val(logits);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t c = 0; c < 5; ++c)
          if (lv.at3(i, j, c) != lv.at3(j, i, c)) return false;
    const Tensor probs = softmax_last(lv);
    for (std::size_t i = 0; i < 5; ++i) {
      if (!approx(probs.at3(i, i, 0), 1.0, 1e-12)) return false;
      for (std::size_t j = 0; j < 5; ++j) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) sum += probs.at3(i, j, c);
        if (!approx(sum, 1.0, 1e-12)) return false;
      }
    }
    return true;
  });

  h.check("encoder is permutation invariant over peaks", [] {
    Rng rng(31);
    ParamStore store;
    EncoderConfig ec;
    ec.dim = 16;
    ec.heads = 2;
    ec.layers = 2;
    ec.fp_bits = 64;
    SpectrumEncoder enc(ec, store, rng);
    Spectrum s;
    s.id = "t";
    s.precursor = parse_formula("C6H12O2N2");
    for (int i = 0; i < 5; ++i) {
      Peak p;
      p.mz = 10.0 + i;
      p.intensity = 0.2 + 0.15 * i;
      p.formula = parse_formula(i % 2 ? "C2H4O" : "C3H6N");
      s.peaks.push_back(p);
    }
    s.normalize();
    Tape t1(false);
    const Tensor y1 = t1.val(enc.encode(t1, s));
    Spectrum sp = s;
    std::swap(sp.peaks[0], sp.peaks[3]);
    std::swap(sp.peaks[1], sp.peaks[4]);
    Tape t2(false);
    const Tensor y2 = t2.val(enc.encode(t2, sp));
    for (std::size_t i = 0; i < y1.size(); ++i)
      if (!approx(y1.data[i], y2.data[i], 1e-10)) return false;
    return true;
  });

  h.check("checkpoint round trip is byte exact and verified", [] {
    Rng rng(17);
    ParamStore store;
    store.create("a", xavier_uniform(rng, 3, 4));
    store.create("b", Tensor::vec({1.5, -2.5}));
    Checkpoint ck;
    ck.stage = "selftest";
    ck.config_echo = "k = v\n";
    ck.rng_seed = 7;
    ck.rng_counter = 99;
    ck.add_params(store);
    const std::string p1 = "/tmp/mbgen_selftest_ck1.bin";
    const std::string p2 = "/tmp/mbgen_selftest_ck2.bin";
    save_checkpoint(p1, ck);
    Checkpoint lk = load_checkpoint(p1);
    save_checkpoint(p2, lk);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    if (s1 != s2 || s1.empty()) return false;
    std::ofstream trunc(p2, std::ios::binary);
    trunc.write(s1.data(), static_cast<std::streamsize>(s1.size() - 3));
    trunc.close();
    try {
      load_checkpoint(p2);
      return false;
    } catch (const std::runtime_error&) {
      return true;
    }
  });

  h.check("mgf round trip and diagnostics", [] {
    ToySpec spec;
    spec.molecule_count = 4;
    spec.seed = 77;
    ToyDataset ds = generate_toy_dataset(spec);
    std::ostringstream os;
    write_mgf(os, ds.spectra);
    std::istringstream is(os.str());
    const std::vector<Spectrum> back = parse_mgf_stream(is, "mem");
    if (back.size() != ds.spectra.size()) return false;
    for (std::size_t i = 0; i < back.size(); ++i) {
      if (back[i].id != ds.spectra[i].id) return false;
      if (back[i].peaks.size() != ds.spectra[i].peaks.size()) return false;
    }
    std::istringstream bad("BEGIN IONS\nTITLE=x\nFORMULA=C2H6\n12.0 1.0 C3\nEND IONS\n");
    try {
      parse_mgf_stream(bad, "mem");
      return false;
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()).find("mem:4") == std::string::npos) return false;
    }
    std::istringstream bad2("BEGIN IONS\nTITLE=x\nFORMULA=C2H6\n12.0 1.0 C2H6\n");
    try {
      parse_mgf_stream(bad2, "mem");
      return false;
    } catch (const std::runtime_error& e) {
      return std::string(e.what()).find("END IONS") != std::string::npos;
    }
  });

  h.check("graph dataset format", [] {
    std::istringstream in(
        "m1 C2H6O 0-1:1;1-2:1\n"
        "m2 C6H6 0-1:4;1-2:4;2-3:4;3-4:4;4-5:4;0-5:4\n");
    const auto recs = load_graph_stream(in, "mem");
    if (recs.size() != 2) return false;
    if (recs[0].graph.nodes != std::vector<Element>{Element::C, Element::C, Element::O})
      return false;
    if (recs[1].graph.edges.edge_count() != 6) return false;
    std::istringstream dup("m3 C2H6 0-1:1;0-1:2\n");
    try {
      load_graph_stream(dup, "mem");
      return false;
    } catch (const std::runtime_error& e) {
      return std::string(e.what()).find("duplicate") != std::string::npos;
    }
  });

  h.check("toy dataset: valid molecules, sub-formula peaks, deterministic", [] {
    ToySpec spec;
    spec.molecule_count = 6;
    spec.seed = 123;
    ToyDataset a = generate_toy_dataset(spec);
    ToyDataset b = generate_toy_dataset(spec);
    std::ostringstream ga, gb;
    write_graph_dataset(ga, a.graphs);
    write_graph_dataset(gb, b.graphs);
    if (ga.str() != gb.str()) return false;
    for (const GraphRecord& r : a.graphs)
      if (!valence_violations(r.graph).empty()) return false;
    for (const Spectrum& s : a.spectra)
      for (const Peak& p : s.peaks)
        if (!s.precursor.contains(p.formula)) return false;
    return true;
  });

  return h.failures;
}

}  // namespace mbgen
