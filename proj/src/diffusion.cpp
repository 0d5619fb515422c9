#include "mbgen/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mbgen/kernels.hpp"

namespace mbgen {

NoiseSchedule NoiseSchedule::cosine(std::size_t T) {
  if (T == 0) throw std::invalid_argument("noise schedule: T must be positive");
  NoiseSchedule s;
  s.T = T;
  s.alpha_bar.resize(T + 1);
  const double off = 0.008;
  auto f = [&](double t) {
    const double x = (t / static_cast<double>(T) + off) / (1.0 + off) * std::numbers::pi / 2.0;
    const double c = std::cos(x);
    return c * c;
  };
  const double f0 = f(0.0);
  for (std::size_t t = 0; t <= T; ++t) {
    double a = f(static_cast<double>(t)) / f0;
    if (a < 0.0) a = 0.0;
    if (a > 1.0) a = 1.0;
    s.alpha_bar[t] = a;
  }
  s.alpha_bar[0] = 1.0;
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (alpha_bar.size() != T + 1) throw std::invalid_argument("noise schedule: wrong length");
  if (alpha_bar[0] != 1.0) throw std::invalid_argument("noise schedule: alpha_bar[0] must be 1");
  for (std::size_t t = 1; t <= T; ++t) {
    if (alpha_bar[t] > alpha_bar[t - 1] + 1e-15)
      throw std::invalid_argument("noise schedule: alpha_bar must be nonincreasing");
    if (alpha_bar[t] < 0.0) throw std::invalid_argument("noise schedule: negative alpha_bar");
  }
  if (alpha_bar[T] > 1e-4)
    throw std::invalid_argument("noise schedule: alpha_bar[T] must not exceed 1e-4");
}

std::vector<double> estimate_marginal(const std::vector<const MolecularGraph*>& graphs,
                                      std::size_t k, double floor_prob) {
  std::vector<double> counts(k, 0.0);
  for (const MolecularGraph* g : graphs) {
    const std::size_t n = g->nodes.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) counts[g->edges(i, j)] += 1.0;
  }
  double total = 0.0;
  for (double c : counts) total += c;
  std::vector<double> m(k);
  if (total <= 0.0) {
    for (std::size_t c = 0; c < k; ++c) m[c] = 1.0 / static_cast<double>(k);
    return m;
  }
  for (std::size_t c = 0; c < k; ++c) m[c] = std::max(counts[c] / total, floor_prob);
  double s = 0.0;
  for (double v : m) s += v;
  for (double& v : m) v /= s;
  return m;
}

namespace {
Tensor kernel_matrix(double a, const std::vector<double>& m) {
  const std::size_t k = m.size();
  Tensor q(Shape{k, k});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) q.at2(i, j) = (i == j ? a : 0.0) + (1.0 - a) * m[j];
  return q;
}

void check_row_stochastic(const Tensor& q, const char* what) {
  const std::size_t k = q.shape[0];
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (q.at2(i, j) < 0.0)
        throw std::runtime_error(std::string(what) + ": negative transition probability");
      s += q.at2(i, j);
    }
    if (std::abs(s - 1.0) > 1e-12)
      throw std::runtime_error(std::string(what) + ": row does not sum to 1");
  }
}
}  // namespace

TransitionMatrices build_transitions(const NoiseSchedule& s, std::vector<double> marginal) {
  s.validate();
  const std::size_t k = marginal.size();
  if (k < 2) throw std::invalid_argument("build_transitions: need at least 2 classes");
  double msum = 0.0;
  for (double v : marginal) {
    if (v <= 0.0)
      throw std::invalid_argument("build_transitions: marginal must be strictly positive");
    msum += v;
  }
  if (std::abs(msum - 1.0) > 1e-9)
    throw std::invalid_argument("build_transitions: marginal must sum to 1");

  TransitionMatrices tm;
  tm.T = s.T;
  tm.k = k;
  tm.marginal = std::move(marginal);
  tm.Q.resize(s.T + 1);
  tm.Qbar.resize(s.T + 1);
  tm.Qbar[0] = kernel_matrix(1.0, tm.marginal);  // identity
  Tensor prod = tm.Qbar[0];
  for (std::size_t t = 1; t <= s.T; ++t) {
    const double at = s.alpha_bar[t] / s.alpha_bar[t - 1];
    tm.Q[t] = kernel_matrix(at, tm.marginal);
    tm.Qbar[t] = kernel_matrix(s.alpha_bar[t], tm.marginal);
    check_row_stochastic(tm.Q[t], "Q_t");
    check_row_stochastic(tm.Qbar[t], "Qbar_t");
    // closed form must agree with the running product
    Tensor next(Shape{k, k});
    kern::mm_nn(prod.data.data(), tm.Q[t].data.data(), next.data.data(), k, k, k);
    prod = std::move(next);
    for (std::size_t i = 0; i < k * k; ++i) {
      if (std::abs(prod.data[i] - tm.Qbar[t].data[i]) > 1e-10)
        throw std::runtime_error("build_transitions: closed-form Qbar deviates from product at t=" +
                                 std::to_string(t));
    }
  }
  return tm;
}

BondMatrix forward_noise(const BondMatrix& e0, std::size_t t, const TransitionMatrices& tm,
                         Rng& rng) {
  if (t < 1 || t > tm.T) throw std::invalid_argument("forward_noise: t out of range");
  if (!e0.is_symmetric_zero_diag())
    throw std::invalid_argument("forward_noise: input must be symmetric with zero diagonal");
  const std::size_t n = e0.n;
  BondMatrix out(n);
  const Tensor& Qb = tm.Qbar[t];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::uint8_t c0 = e0(i, j);
      std::span<const double> row(Qb.data.data() + c0 * tm.k, tm.k);
      out.set(i, j, static_cast<std::uint8_t>(rng.categorical(row)));
    }
  }
  return out;
}

std::vector<double> posterior(std::size_t e_t, std::size_t e_0, std::size_t t,
                              const TransitionMatrices& tm) {
  if (t < 1 || t > tm.T) throw std::invalid_argument("posterior: t out of range");
  if (e_t >= tm.k || e_0 >= tm.k) throw std::invalid_argument("posterior: class out of range");
  std::vector<double> p(tm.k);
  double norm = 0.0;
  for (std::size_t c = 0; c < tm.k; ++c) {
    p[c] = tm.Q[t].at2(c, e_t) * tm.Qbar[t - 1].at2(e_0, c);
    norm += p[c];
  }
  if (norm <= 0.0)
    throw std::runtime_error("posterior: zero normalizer (impossible under positive marginal)");
  for (double& v : p) v /= norm;
  return p;
}

Tape::Id training_loss(Tape& tape, Tape::Id logits, const BondMatrix& e0) {
  const Tensor& tl = tape.val(logits);
  require_shape(tl.rank() == 3 && tl.shape[0] == e0.n && tl.shape[1] == e0.n,
                "training_loss: logits " + shape_str(tl.shape) + " vs n=" +
                    std::to_string(e0.n));
  return tape.cross_entropy_pairs(logits, e0.cat);
}

std::vector<double> reverse_mixture(std::span<const double> phat, std::size_t e_t,
                                    std::size_t t, const TransitionMatrices& tm) {
  if (phat.size() != tm.k) throw std::invalid_argument("reverse_mixture: phat size");
  std::vector<double> mix(tm.k, 0.0);
  for (std::size_t e = 0; e < tm.k; ++e) {
    const std::vector<double> post = posterior(e_t, e, t, tm);
    for (std::size_t c = 0; c < tm.k; ++c) {
      const double term = post[c] * phat[e];
      if (term < 0.0) throw std::runtime_error("reverse_mixture: negative mixture term");
      mix[c] += term;
    }
  }
  double s = 0.0;
  for (double v : mix) s += v;
  if (std::abs(s - 1.0) > 1e-9)
    throw std::runtime_error("reverse_mixture: non-normalizable mixture");
  return mix;
}

BondMatrix reverse_step(const Tensor& phat, const BondMatrix& Et, std::size_t t,
                        const TransitionMatrices& tm, Rng& rng) {
  const std::size_t n = Et.n, k = tm.k;
  require_shape(phat.rank() == 3 && phat.shape[0] == n && phat.shape[1] == n &&
                    phat.shape[2] == k,
                "reverse_step: phat " + shape_str(phat.shape));
  // posterior table per (current class, predicted clean class)
  std::vector<std::vector<double>> post(k * k);
  for (std::size_t et = 0; et < k; ++et)
    for (std::size_t e0 = 0; e0 < k; ++e0) post[et * k + e0] = posterior(et, e0, t, tm);
  BondMatrix out(n);
  std::vector<double> mix(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::uint8_t et = Et(i, j);
      const double* p = phat.data.data() + (i * n + j) * k;
      std::fill(mix.begin(), mix.end(), 0.0);
      double norm = 0.0;
      for (std::size_t e = 0; e < k; ++e) {
        const std::vector<double>& po = post[et * k + e];
        for (std::size_t c = 0; c < k; ++c) mix[c] += po[c] * p[e];
      }
      for (double v : mix) norm += v;
      if (std::abs(norm - 1.0) > 1e-9)
        throw std::runtime_error("reverse_step: non-normalizable mixture");
      out.set(i, j, static_cast<std::uint8_t>(rng.categorical(mix)));
    }
  }
  return out;
}

BondMatrix sample_prior(std::size_t n, const TransitionMatrices& tm, Rng& rng) {
  BondMatrix e(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      e.set(i, j, static_cast<std::uint8_t>(rng.categorical(tm.marginal)));
  return e;
}

BondMatrix sample_edges(std::size_t n, const DenoiserFn& denoiser, const TransitionMatrices& tm,
                        Rng& rng) {
  BondMatrix e = sample_prior(n, tm, rng);
  for (std::size_t t = tm.T; t >= 1; --t) {
    const Tensor probs = denoiser(e, t);
    e = reverse_step(probs, e, t, tm, rng);
  }
  return e;
}

MolecularGraph sample_molecule(const MolecularFormula& formula, const Tensor& y,
                               const ManyBodyDecoder& dec, const TransitionMatrices& tm,
                               Rng& rng) {
  MolecularGraph g;
  g.nodes = formula_to_nodes(formula);
  const std::size_t n = g.nodes.size();
  g.edges = BondMatrix(n);
  if (n == 1) return g;  // a single heavy atom has no bonds to sample
  DenoiserFn denoiser = [&](const BondMatrix& Et, std::size_t t) {
    Tape tape(false);
    Tape::Id yid = tape.input_view(&y);
    Tape::Id logits = dec.decode_logits(tape, g.nodes, Et, t, yid);
    return softmax_last(tape.val(logits));
  };
  g.edges = sample_edges(n, denoiser, tm, rng);
  return g;
}

Tensor softmax_last(const Tensor& logits) {
  if (logits.shape.empty()) throw std::invalid_argument("softmax_last: scalar input");
  const std::size_t k = logits.shape.back();
  Tensor out(logits.shape);
  kern::softmax(logits.data.data(), out.data.data(), logits.size() / k, k, 1);
  return out;
}

}  // namespace mbgen
