#pragma once

// Scalar-loop re-evaluations of the encoder and decoder stages, written
// directly from their defining formulas against raw parameter tensors.
// Shared by the unit tests and the acceptance suite.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbgen/decoder.hpp"
#include "mbgen/encoder.hpp"
#include "mbgen/spectrum.hpp"
#include "mbgen/tape.hpp"

namespace oracles {

using Vec = std::vector<double>;
using mbgen::ParamStore;
using mbgen::Tensor;

inline const Tensor& P(const ParamStore& store, const std::string& name) {
  const mbgen::Parameter* p = store.find(name);
  if (!p) throw std::runtime_error("oracle: missing parameter " + name);
  return p->value;
}

inline Vec matvec(const Tensor& W, const Vec& x) {
  const std::size_t out = W.shape[0], in = W.shape[1];
  if (x.size() != in) throw std::runtime_error("oracle: matvec size");
  Vec y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) y[o] += W.at2(o, i) * x[i];
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec softmax_vec(Vec s) {
  double m = s[0];
  for (double v : s) m = std::max(m, v);
  double z = 0.0;
  for (double& v : s) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : s) v /= z;
  return s;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// full encoder stack: peak embedding, L attention layers, mean pooling
inline Vec encoder_oracle(const ParamStore& store, const mbgen::EncoderConfig& cfg,
                          const mbgen::Spectrum& s) {
  const std::size_t N = s.peaks.size(), d = cfg.dim, H = cfg.heads, dk = d / H;
  const Tensor& Wf = P(store, "enc.femb.W");
  const Tensor& Wp = P(store, "enc.proj.W");
  const Tensor& bp = P(store, "enc.proj.b");

  std::vector<Vec> cv(N), X(N);
  for (std::size_t i = 0; i < N; ++i) cv[i] = s.peaks[i].formula.count_vector();
  for (std::size_t i = 0; i < N; ++i) {
    Vec femb = matvec(Wf, cv[i]);
    femb.push_back(s.peaks[i].intensity);
    X[i] = matvec(Wp, femb);
    for (std::size_t c = 0; c < d; ++c) X[i][c] += bp.data[c];
  }
  std::vector<std::vector<Vec>> D(N, std::vector<Vec>(N));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      Vec diff(mbgen::kFormulaVectorLen);
      for (std::size_t c = 0; c < mbgen::kFormulaVectorLen; ++c)
        diff[c] = std::abs(cv[i][c] - cv[j][c]);
      D[i][j] = matvec(Wf, diff);
    }

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l) + ".";
    std::vector<Vec> upd(N, Vec(d, 0.0));
    for (std::size_t h = 0; h < H; ++h) {
      const std::string hp = lp + "h" + std::to_string(h) + ".";
      const Tensor& Wq = P(store, hp + "Wq");
      const Tensor& Wk = P(store, hp + "Wk");
      const Tensor& Wv = P(store, hp + "Wv");
      const Tensor& b1 = P(store, hp + "b1");
      const Tensor& b2 = P(store, hp + "b2");
      std::vector<Vec> Q(N), K(N), V(N);
      for (std::size_t i = 0; i < N; ++i) {
        Q[i] = matvec(Wq, X[i]);
        K[i] = matvec(Wk, X[i]);
        V[i] = matvec(Wv, X[i]);
      }
      for (std::size_t i = 0; i < N; ++i) {
        Vec scores(N);
        for (std::size_t j = 0; j < N; ++j) {
          Vec qb1 = Q[i], qb2 = Q[i];
          for (std::size_t c = 0; c < dk; ++c) {
            qb1[c] += b1.data[c];
            qb2[c] += b2.data[c];
          }
          Vec dh(dk);
          for (std::size_t c = 0; c < dk; ++c) dh[c] = D[i][j][h * dk + c];
          scores[j] = (dot(qb1, K[j]) + dot(qb2, dh)) / std::sqrt(double(dk));
        }
        const Vec alpha = softmax_vec(scores);
        for (std::size_t j = 0; j < N; ++j)
          for (std::size_t c = 0; c < dk; ++c) upd[i][h * dk + c] += alpha[j] * V[j][c];
      }
    }
    const Tensor& Wo = P(store, lp + "Wo");
    for (std::size_t i = 0; i < N; ++i) {
      const Vec o = matvec(Wo, upd[i]);
      for (std::size_t c = 0; c < d; ++c) X[i][c] += o[c];
    }
  }
  Vec y(d, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < d; ++c) y[c] += X[i][c];
  for (double& v : y) v /= static_cast<double>(N);
  return y;
}

// node-edge interaction stage in place (scores, o, FiLM, residual FFN,
// symmetrization, node attention)
inline void node_edge_oracle(const ParamStore& store, const mbgen::DecoderConfig& cfg,
                             std::size_t layer, std::vector<Vec>& h,
                             std::vector<std::vector<Vec>>& e, const Vec& c) {
  const std::size_t n = h.size(), H = cfg.node_heads, dk = cfg.node_dim / H;
  const std::string lp = "dec.l" + std::to_string(layer) + ".";
  std::vector<std::vector<Vec>> scores(H, std::vector<Vec>(n, Vec(n)));
  for (std::size_t hh = 0; hh < H; ++hh) {
    const std::string hp = lp + "ne.h" + std::to_string(hh) + ".";
    const Tensor& Wq = P(store, hp + "Wq");
    const Tensor& Wk = P(store, hp + "Wk");
    const Tensor& wE = P(store, hp + "wE");
    for (std::size_t i = 0; i < n; ++i) {
      const Vec qi = matvec(Wq, h[i]);
      for (std::size_t j = 0; j < n; ++j) {
        const Vec kj = matvec(Wk, h[j]);
        double we = 0.0;
        for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc) we += wE.data[cc] * e[i][j][cc];
        scores[hh][i][j] = dot(qi, kj) / std::sqrt(double(dk)) + we;
      }
    }
  }
  const Tensor& Walpha = P(store, lp + "ne.Walpha");
  const Tensor& F1 = P(store, lp + "ne.film.W1");
  const Tensor& F2 = P(store, lp + "ne.film.W2");
  const Tensor& W1 = P(store, lp + "ne.ffn.W1");
  const Tensor& b1 = P(store, lp + "ne.ffn.b1");
  const Tensor& W2 = P(store, lp + "ne.ffn.W2");
  const Tensor& b2 = P(store, lp + "ne.ffn.b2");
  const Vec cw1 = matvec(F1, c), cw2 = matvec(F2, c);

  std::vector<std::vector<Vec>> e_new(n, std::vector<Vec>(n, Vec(cfg.edge_dim)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Vec stacked(H);
      for (std::size_t hh = 0; hh < H; ++hh) stacked[hh] = scores[hh][i][j];
      const Vec o = matvec(Walpha, stacked);
      Vec x(cfg.edge_dim);
      for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc)
        x[cc] = e[i][j][cc] + (cw2[cc] + o[cc] * cw1[cc] + o[cc]);
      Vec hid = matvec(W1, x);
      for (std::size_t cc = 0; cc < hid.size(); ++cc) hid[cc] = gelu_ref(hid[cc] + b1.data[cc]);
      const Vec out = matvec(W2, hid);
      for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc)
        e_new[i][j][cc] = x[cc] + out[cc] + b2.data[cc];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc)
        e[i][j][cc] = 0.5 * (e_new[i][j][cc] + e_new[j][i][cc]);

  const Tensor& Wo = P(store, lp + "ne.Wo");
  std::vector<Vec> hcat(n, Vec(H * dk, 0.0));
  for (std::size_t hh = 0; hh < H; ++hh) {
    const std::string hp = lp + "ne.h" + std::to_string(hh) + ".";
    const Tensor& Wv = P(store, hp + "Wv");
    std::vector<Vec> V(n);
    for (std::size_t j = 0; j < n; ++j) V[j] = matvec(Wv, h[j]);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec alpha = softmax_vec(scores[hh][i]);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t cc = 0; cc < dk; ++cc) hcat[i][hh * dk + cc] += alpha[j] * V[j][cc];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec o = matvec(Wo, hcat[i]);
    for (std::size_t cc = 0; cc < cfg.node_dim; ++cc) h[i][cc] += o[cc];
  }
}

// triple-loop many-body stage in place: per head q.k/sqrt(d)+b scores over k,
// softmax, sigmoid-gated value sum, FiLM residual, symmetrization
inline void many_body_oracle(const ParamStore& store, const mbgen::DecoderConfig& cfg,
                             std::size_t layer, std::vector<std::vector<Vec>>& e,
                             const Vec& c) {
  const std::size_t n = e.size(), H = cfg.mb_heads, dm = cfg.edge_dim / H;
  const std::string lp = "dec.l" + std::to_string(layer) + ".";
  std::vector<std::vector<Vec>> z(n, std::vector<Vec>(n, Vec(cfg.edge_dim, 0.0)));
  for (std::size_t hh = 0; hh < H; ++hh) {
    const std::string hp = lp + "mb.h" + std::to_string(hh) + ".";
    const Tensor& Wq = P(store, hp + "Wq");
    const Tensor& Wk = P(store, hp + "Wk");
    const Tensor& Wv = P(store, hp + "Wv");
    const Tensor& Wg = P(store, hp + "Wg");
    const Tensor& bg = P(store, hp + "bg");
    const Tensor& wb = P(store, hp + "wb");
    std::vector<std::vector<Vec>> q(n, std::vector<Vec>(n)), kk = q, vv = q, gg = q;
    std::vector<Vec> bb(n, Vec(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        q[i][j] = matvec(Wq, e[i][j]);
        kk[i][j] = matvec(Wk, e[i][j]);
        vv[i][j] = matvec(Wv, e[i][j]);
        gg[i][j] = matvec(Wg, e[i][j]);
        for (std::size_t cc = 0; cc < dm; ++cc)
          gg[i][j][cc] = sigmoid(gg[i][j][cc] + bg.data[cc]);
        double bsum = 0.0;
        for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc) bsum += wb.data[cc] * e[i][j][cc];
        bb[i][j] = bsum;
      }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Vec s(n);
        for (std::size_t k = 0; k < n; ++k)
          s[k] = dot(q[i][j], kk[j][k]) / std::sqrt(double(dm)) + bb[i][k];
        const Vec alpha = softmax_vec(s);
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t cc = 0; cc < dm; ++cc)
            z[i][j][hh * dm + cc] += alpha[k] * gg[i][k][cc] * vv[j][k][cc];
      }
    }
  }
  const Tensor& F1 = P(store, lp + "mb.film.W1");
  const Tensor& F2 = P(store, lp + "mb.film.W2");
  const Vec cw1 = matvec(F1, c), cw2 = matvec(F2, c);
  std::vector<std::vector<Vec>> e_new(n, std::vector<Vec>(n, Vec(cfg.edge_dim)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc)
        e_new[i][j][cc] = e[i][j][cc] + (cw2[cc] + z[i][j][cc] * cw1[cc] + z[i][j][cc]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t cc = 0; cc < cfg.edge_dim; ++cc)
        e[i][j][cc] = 0.5 * (e_new[i][j][cc] + e_new[j][i][cc]);
}

}  // namespace oracles
