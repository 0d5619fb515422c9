#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mbgen/decoder.hpp"
#include "mbgen/diffusion.hpp"
#include "mbgen/encoder.hpp"
#include "mbgen/nn_util.hpp"
#include "model_oracles.hpp"
#include "test_util.hpp"

using namespace mbgen;
using testutil::make_graph;
using testutil::random_tensor;

namespace {

using oracles::Vec;
using oracles::matvec;
using oracles::P;
using oracles::encoder_oracle;
using oracles::node_edge_oracle;
using oracles::many_body_oracle;

Spectrum toy_spectrum(Rng& rng, std::size_t n_peaks) {
  Spectrum s;
  s.id = "t";
  s.precursor = parse_formula("C8H16N2O3S");
  const char* frags[] = {"C2H4O", "C3H6N", "CH3", "C4H8S", "C2H5NO"};
  for (std::size_t i = 0; i < n_peaks; ++i) {
    Peak p;
    p.formula = parse_formula(frags[i % 5]);
    p.mz = p.formula.monoisotopic_mass();
    p.intensity = 0.1 + rng.uniform01();
    s.peaks.push_back(p);
  }
  s.normalize();
  s.validate();
  return s;
}

struct SmallDecoder {
  ParamStore store;
  DecoderConfig cfg;
  std::unique_ptr<ManyBodyDecoder> dec;

  explicit SmallDecoder(std::uint64_t seed, bool many_body = true, std::size_t layers = 1) {
    cfg.node_dim = 8;
    cfg.edge_dim = 8;
    cfg.layers = layers;
    cfg.node_heads = 2;
    cfg.mb_heads = 2;
    cfg.ffn_hidden = 8;
    cfg.cond_dim = 6;
    cfg.time_dim = 6;
    cfg.y_dim = 6;
    cfg.many_body = many_body;
    Rng rng(seed);
    dec = std::make_unique<ManyBodyDecoder>(cfg, store, rng);
  }
};

}  // namespace

TEST_CASE("embed_peak: zero formula and intensity hit the projection bias") {
  Rng rng(1);
  ParamStore store;
  EncoderConfig cfg{16, 2, 1, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Peak p;
  p.mz = 1.0;
  p.intensity = 0.0;  // empty formula: all counts zero
  Tape t;
  const Tensor& x = t.val(enc.embed_peak(t, p));
  const Tensor& b = P(store, "enc.proj.b");
  REQUIRE(x.shape == Shape{1, 16});
  for (std::size_t c = 0; c < 16; ++c) CHECK(x.data[c] == b.data[c]);
}

TEST_CASE("embed_peak: deterministic, matches the projection oracle") {
  Rng rng(2);
  ParamStore store;
  EncoderConfig cfg{16, 2, 1, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Peak p;
  p.formula = parse_formula("C3H5NO2");
  p.intensity = 0.73;
  p.mz = p.formula.monoisotopic_mass();
  Tape t;
  const Tensor& a = t.val(enc.embed_peak(t, p));
  const Tensor& b = t.val(enc.embed_peak(t, p));
  CHECK(a.data == b.data);

  Vec femb = matvec(P(store, "enc.femb.W"), p.formula.count_vector());
  femb.push_back(p.intensity);
  Vec expect = matvec(P(store, "enc.proj.W"), femb);
  for (std::size_t c = 0; c < 16; ++c) expect[c] += P(store, "enc.proj.b").data[c];
  for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(a.data[c] - expect[c]) <= 1e-12);
}

TEST_CASE("encoder: single peak reduces to residual plus value projection") {
  Rng rng(3);
  ParamStore store;
  EncoderConfig cfg{12, 2, 1, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Rng prng(4);
  Spectrum s = toy_spectrum(prng, 1);
  Tape t;
  const Tensor& y = t.val(enc.encode(t, s));
  const Vec oracle = encoder_oracle(store, cfg, s);
  for (std::size_t c = 0; c < 12; ++c) CHECK(std::abs(y.data[c] - oracle[c]) <= 1e-12);
}

TEST_CASE("encoder: identical peaks give the single-peak pooling") {
  Rng rng(5);
  ParamStore store;
  EncoderConfig cfg{16, 4, 2, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Rng prng(6);
  Spectrum one = toy_spectrum(prng, 1);
  Spectrum many = one;
  for (int i = 0; i < 4; ++i) many.peaks.push_back(one.peaks[0]);
  Tape t;
  const Tensor& y1 = t.val(enc.encode(t, one));
  const Tensor& yn = t.val(enc.encode(t, many));
  for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(y1.data[c] - yn.data[c]) <= 1e-12);
}

TEST_CASE("encoder: random spectrum matches the layer-by-layer oracle") {
  Rng rng(7);
  ParamStore store;
  EncoderConfig cfg{16, 4, 3, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Rng prng(8);
  for (int rep = 0; rep < 4; ++rep) {
    Spectrum s = toy_spectrum(prng, 4);
    Tape t;
    const Tensor& y = t.val(enc.encode(t, s));
    const Vec oracle = encoder_oracle(store, cfg, s);
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(y.data[c] - oracle[c]) <= 1e-10);
  }
}

TEST_CASE("encoder: permutation invariance and intensity scaling contract") {
  Rng rng(9);
  ParamStore store;
  EncoderConfig cfg{16, 2, 2, 32};
  SpectrumEncoder enc(cfg, store, rng);
  Rng prng(10);
  Spectrum s = toy_spectrum(prng, 6);
  Spectrum shuffled = s;
  std::swap(shuffled.peaks[0], shuffled.peaks[5]);
  std::swap(shuffled.peaks[2], shuffled.peaks[4]);
  Tape t;
  const Tensor& y1 = t.val(enc.encode(t, s));
  const Tensor& y2 = t.val(enc.encode(t, shuffled));
  for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(y1.data[c] - y2.data[c]) <= 1e-10);

  // common pre-normalization factor cancels
  Spectrum scaled = s;
  for (Peak& p : scaled.peaks) p.intensity *= 7.5;
  scaled.normalize();
  Tape t2;
  const Tensor& y3 = t2.val(enc.encode(t2, scaled));
  for (std::size_t c = 0; c < 16; ++c) CHECK(y3.data[c] == y1.data[c]);
}

TEST_CASE("predict_fp_logits: zero-initialized head gives probability one half") {
  Rng rng(11);
  ParamStore store;
  EncoderConfig cfg{16, 2, 1, 128};
  SpectrumEncoder enc(cfg, store, rng);
  Rng prng(12);
  Spectrum s = toy_spectrum(prng, 3);
  Tape t;
  Tape::Id logits = enc.predict_fp_logits(t, enc.encode(t, s));
  const Tensor& lv = t.val(logits);
  REQUIRE(lv.shape == Shape{128});
  const Tensor& probs = t.val(t.sigmoid(logits));
  for (double v : probs.data) {
    CHECK(v == 0.5);
  }
}

TEST_CASE("encoder gradients pass finite differences through BCE") {
  Rng rng(13);
  ParamStore store;
  EncoderConfig cfg{8, 2, 1, 16};
  SpectrumEncoder enc(cfg, store, rng);
  // perturb the zero-initialized head so its gradient paths are generic
  for (double& v : store.find("enc.fp.W")->value.data) v = 0.1 * rng.normal();
  Rng prng(14);
  Spectrum s = toy_spectrum(prng, 3);
  std::vector<double> targets(16);
  for (double& v : targets) v = prng.uniform01() < 0.5 ? 1.0 : 0.0;
  auto loss_fn = [&] {
    Tape t;
    Tape::Id l = t.bce_with_logits(enc.predict_fp_logits(t, enc.encode(t, s)), targets);
    t.backward(l);
    return t.val(l).data[0];
  };
  CHECK(testutil::gradcheck_max_rel(store, loss_fn) <= 1e-5);
}

TEST_CASE("decoder init_embeddings: symmetry, equal rows, scalar oracle") {
  SmallDecoder sd(21);
  const std::vector<Element> nodes = {Element::C, Element::C, Element::O};
  BondMatrix Et(3);
  Et.set(0, 1, 2);
  Tape t;
  auto [h0, e0] = sd.dec->init_embeddings(t, nodes, Et);
  const Tensor& hv = t.val(h0);
  const Tensor& ev = t.val(e0);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(hv.at2(0, c) == hv.at2(1, c));  // identical elements share one embedding row
    CHECK(ev.at3(0, 1, c) == ev.at3(1, 0, c));
    CHECK(ev.at3(0, 2, c) == ev.at3(2, 0, c));
  }

  // scalar oracle: e_ij = 0.5*(W[hi;hj;onehot]+b + W[hj;hi;onehot]+b)
  const Tensor& W = P(sd.store, "dec.edge_init.W");
  const Tensor& b = P(sd.store, "dec.edge_init.b");
  const Tensor& emb = P(sd.store, "dec.node_emb");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      Vec cat(2 * 8 + 5, 0.0);
      for (std::size_t c = 0; c < 8; ++c) {
        cat[c] = emb.at2(static_cast<std::size_t>(nodes[i]), c);
        cat[8 + c] = emb.at2(static_cast<std::size_t>(nodes[j]), c);
      }
      cat[16 + Et(i, j)] = 1.0;
      Vec eij = matvec(W, cat);
      Vec cat_ji(2 * 8 + 5, 0.0);
      for (std::size_t c = 0; c < 8; ++c) {
        cat_ji[c] = emb.at2(static_cast<std::size_t>(nodes[j]), c);
        cat_ji[8 + c] = emb.at2(static_cast<std::size_t>(nodes[i]), c);
      }
      cat_ji[16 + Et(i, j)] = 1.0;
      Vec eji = matvec(W, cat_ji);
      for (std::size_t c = 0; c < 8; ++c) {
        const double expect = 0.5 * ((eij[c] + b.data[c]) + (eji[c] + b.data[c]));
        CHECK(std::abs(ev.at3(i, j, c) - expect) <= 1e-12);
      }
    }
  }

  BondMatrix bad(3);
  bad.cat[1] = 1;
  CHECK_THROWS_AS(sd.dec->init_embeddings(t, nodes, bad), std::invalid_argument);
}

TEST_CASE("node_edge_layer: residual identity when update paths are zeroed") {
  SmallDecoder sd(22);
  // zero the score-to-edge map and the FFN output so the edge path is inert
  for (double& v : sd.store.find("dec.l0.ne.Walpha")->value.data) v = 0.0;
  for (double& v : sd.store.find("dec.l0.ne.ffn.W2")->value.data) v = 0.0;
  for (double& v : sd.store.find("dec.l0.ne.ffn.b2")->value.data) v = 0.0;
  Rng rng(30);
  Tape t;
  Tape::Id e = t.symmetrize_pairs(t.input(random_tensor(rng, {4, 4, 8})));
  Tape::Id h = t.input(random_tensor(rng, {4, 8}));
  Tape::Id c = t.input(Tensor::zeros({6}));
  auto [h2, e2] = sd.dec->node_edge_layer(t, h, e, c, 0);
  const Tensor& ein = t.val(e);
  const Tensor& eout = t.val(e2);
  for (std::size_t i = 0; i < ein.size(); ++i) CHECK(eout.data[i] == ein.data[i]);
  for (double v : t.val(h2).data) CHECK(std::isfinite(v));
}

TEST_CASE("node_edge_layer: n=1 stays finite") {
  SmallDecoder sd(23);
  Rng rng(31);
  Tape t;
  Tape::Id e = t.input(random_tensor(rng, {1, 1, 8}));
  Tape::Id h = t.input(random_tensor(rng, {1, 8}));
  Tape::Id c = t.input(random_tensor(rng, {6}));
  auto [h2, e2] = sd.dec->node_edge_layer(t, h, e, c, 0);
  for (double v : t.val(h2).data) CHECK(std::isfinite(v));
  for (double v : t.val(e2).data) CHECK(std::isfinite(v));
}

TEST_CASE("node_edge_layer: random instance matches the pair-loop oracle") {
  SmallDecoder sd(24);
  Rng rng(32);
  const std::size_t n = 5;
  Tensor h_in = random_tensor(rng, {n, 8});
  Tensor e_raw = random_tensor(rng, {n, n, 8});
  Tensor c_in = random_tensor(rng, {6});
  Tape t;
  Tape::Id e_sym = t.symmetrize_pairs(t.input(e_raw));
  Tape::Id h = t.input(h_in);
  Tape::Id c = t.input(c_in);
  auto [h2, e2] = sd.dec->node_edge_layer(t, h, e_sym, c, 0);

  std::vector<Vec> ho(n, Vec(8));
  std::vector<std::vector<Vec>> eo(n, std::vector<Vec>(n, Vec(8)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < 8; ++cc) ho[i][cc] = h_in.at2(i, cc);
  const Tensor& esym_v = t.val(e_sym);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t cc = 0; cc < 8; ++cc) eo[i][j][cc] = esym_v.at3(i, j, cc);
  Vec co(6);
  for (std::size_t cc = 0; cc < 6; ++cc) co[cc] = c_in.data[cc];
  node_edge_oracle(sd.store, sd.cfg, 0, ho, eo, co);

  const Tensor& hv = t.val(h2);
  const Tensor& ev = t.val(e2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cc = 0; cc < 8; ++cc) CHECK(std::abs(hv.at2(i, cc) - ho[i][cc]) <= 1e-10);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t cc = 0; cc < 8; ++cc)
        CHECK(std::abs(ev.at3(i, j, cc) - eo[i][j][cc]) <= 1e-10);
}

TEST_CASE("many_body_attention: n=1 single-term softmax with gate") {
  SmallDecoder sd(25);
  Rng rng(33);
  Tensor e_in = random_tensor(rng, {1, 1, 8});
  Tensor c_in = random_tensor(rng, {6});
  Tape t;
  Tape::Id e2 = sd.dec->many_body_attention(t, t.input(e_in), t.input(c_in), 0);

  std::vector<std::vector<Vec>> eo(1, std::vector<Vec>(1, Vec(8)));
  for (std::size_t cc = 0; cc < 8; ++cc) eo[0][0][cc] = e_in.data[cc];
  Vec co(6);
  for (std::size_t cc = 0; cc < 6; ++cc) co[cc] = c_in.data[cc];
  many_body_oracle(sd.store, sd.cfg, 0, eo, co);
  const Tensor& ev = t.val(e2);
  for (std::size_t cc = 0; cc < 8; ++cc) CHECK(std::abs(ev.data[cc] - eo[0][0][cc]) <= 1e-12);
}

TEST_CASE("many_body_attention: equal pair embeddings give uniform attention") {
  SmallDecoder sd(26);
  Rng rng(34);
  Tensor e_in(Shape{3, 3, 8});
  Vec shared(8);
  for (double& v : shared) v = rng.normal();
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t cc = 0; cc < 8; ++cc) e_in.data[i * 8 + cc] = shared[cc];
  Tensor c_in = random_tensor(rng, {6});
  Tape t;
  Tape::Id e2 = sd.dec->many_body_attention(t, t.input(e_in), t.input(c_in), 0);
  const Tensor& ev = t.val(e2);
  // all output pairs stay equal by symmetry
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t cc = 0; cc < 8; ++cc)
      CHECK(ev.data[i * 8 + cc] == doctest::Approx(ev.data[cc]).epsilon(1e-12));
}

TEST_CASE("many_body_attention: random n=4 matches the triple-loop oracle") {
  SmallDecoder sd(27);
  Rng rng(35);
  for (int rep = 0; rep < 3; ++rep) {
    Tensor e_in = random_tensor(rng, {4, 4, 8});
    Tensor c_in = random_tensor(rng, {6});
    Tape t;
    Tape::Id e2 = sd.dec->many_body_attention(t, t.input(e_in), t.input(c_in), 0);

    std::vector<std::vector<Vec>> eo(4, std::vector<Vec>(4, Vec(8)));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t cc = 0; cc < 8; ++cc) eo[i][j][cc] = e_in.at3(i, j, cc);
    Vec co(6);
    for (std::size_t cc = 0; cc < 6; ++cc) co[cc] = c_in.data[cc];
    many_body_oracle(sd.store, sd.cfg, 0, eo, co);
    const Tensor& ev = t.val(e2);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t cc = 0; cc < 8; ++cc)
          CHECK(std::abs(ev.at3(i, j, cc) - eo[i][j][cc]) <= 1e-10);
  }
}

TEST_CASE("many_body_attention: closed gates reduce to e + cW2") {
  SmallDecoder sd(28);
  for (std::size_t hh = 0; hh < 2; ++hh)
    for (double& v : sd.store.find("dec.l0.mb.h" + std::to_string(hh) + ".bg")->value.data)
      v = -1e9;
  Rng rng(36);
  Tensor e_in = random_tensor(rng, {3, 3, 8});
  // symmetric input isolates the additive term
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t cc = 0; cc < 8; ++cc)
        e_in.at3(j, i, cc) = e_in.at3(i, j, cc);
  Tensor c_in = random_tensor(rng, {6});
  Tape t;
  Tape::Id e2 = sd.dec->many_body_attention(t, t.input(e_in), t.input(c_in), 0);
  const Vec cw2 = matvec(P(sd.store, "dec.l0.mb.film.W2"), {c_in.data.begin(), c_in.data.end()});
  const Tensor& ev = t.val(e2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t cc = 0; cc < 8; ++cc)
        CHECK(ev.at3(i, j, cc) == e_in.at3(i, j, cc) + cw2[cc]);
}

TEST_CASE("decode_logits: shape, normalization, symmetry, diagonal") {
  SmallDecoder sd(29, true, 2);
  Rng rng(37);
  const std::vector<Element> nodes = {Element::C, Element::C, Element::N, Element::O};
  BondMatrix Et(4);
  Et.set(0, 1, 1);
  Et.set(1, 2, 2);
  Tape t;
  Tensor y = random_tensor(rng, {6});
  Tape::Id logits = sd.dec->decode_logits(t, nodes, Et, 5, t.input(y));
  const Tensor& lv = t.val(logits);
  REQUIRE(lv.shape == Shape{4, 4, 5});
  const Tensor probs = softmax_last(lv);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(probs.at3(i, i, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(lv.at3(i, j, c) == lv.at3(j, i, c));
        sum += probs.at3(i, j, c);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("decode_logits: permutation equivariance within 1e-8") {
  SmallDecoder sd(30, true, 2);
  Rng rng(38);
  const std::size_t n = 6;
  std::vector<Element> nodes;
  for (std::size_t i = 0; i < n; ++i)
    nodes.push_back(static_cast<Element>(rng.uniform_int(3) * 2));
  MolecularGraph g;
  g.nodes = nodes;
  g.edges = BondMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform01() < 0.5) g.edges.set(i, j, static_cast<std::uint8_t>(1 + rng.uniform_int(4)));
  Tensor y = random_tensor(rng, {6});

  Tape t0;
  const Tensor base = t0.val(sd.dec->decode_logits(t0, g.nodes, g.edges, 7, t0.input(y)));

  for (int rep = 0; rep < 5; ++rep) {
    const auto perm = testutil::random_permutation(rng, n);
    MolecularGraph pg = testutil::permute_graph(g, perm);
    Tape t1;
    const Tensor pl = t1.val(sd.dec->decode_logits(t1, pg.nodes, pg.edges, 7, t1.input(y)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < 5; ++c)
          CHECK(std::abs(base.at3(i, j, c) - pl.at3(perm[i], perm[j], c)) <= 1e-8);
  }
}

TEST_CASE("decoder gradients pass finite differences through the diffusion loss") {
  SmallDecoder sd(31, true, 1);
  Rng rng(39);
  const std::vector<Element> nodes = {Element::C, Element::C, Element::O};
  BondMatrix E0(3);
  E0.set(0, 1, 1);
  BondMatrix Et(3);
  Et.set(0, 2, 2);
  Tensor y = random_tensor(rng, {6});
  auto loss_fn = [&] {
    Tape t;
    Tape::Id logits = sd.dec->decode_logits(t, nodes, Et, 3, t.input(y));
    Tape::Id l = training_loss(t, logits, E0);
    t.backward(l);
    return t.val(l).data[0];
  };
  CHECK(testutil::gradcheck_max_rel(sd.store, loss_fn) <= 1e-5);
}
