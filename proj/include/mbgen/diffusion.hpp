#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mbgen/chem.hpp"
#include "mbgen/decoder.hpp"
#include "mbgen/rng.hpp"
#include "mbgen/tape.hpp"
#include "mbgen/tensor.hpp"

namespace mbgen {

struct NoiseSchedule {
  std::size_t T = 50;
  std::vector<double> alpha_bar;  // T+1 entries, alpha_bar[0] = 1, nonincreasing

  static NoiseSchedule cosine(std::size_t T);
  void validate() const;
};

// Bond-class frequencies over all unordered pairs of the training graphs,
// floored away from zero so every transition row stays strictly positive.
std::vector<double> estimate_marginal(const std::vector<const MolecularGraph*>& graphs,
                                      std::size_t k, double floor_prob = 1e-3);

struct TransitionMatrices {
  std::size_t T = 0;
  std::size_t k = 0;
  std::vector<double> marginal;
  std::vector<Tensor> Q;     // [t] valid for t = 1..T, each k x k row-stochastic
  std::vector<Tensor> Qbar;  // [t] valid for t = 0..T, cumulative products
};

// Q_t = a_t I + (1-a_t) 1 m^T with a_t = alpha_bar[t]/alpha_bar[t-1]; the
// closed-form Qbar is cross-checked against the explicit matrix product.
TransitionMatrices build_transitions(const NoiseSchedule& s, std::vector<double> marginal);

// Samples q(E_t | E_0) pairwise on the upper triangle, then mirrors.
BondMatrix forward_noise(const BondMatrix& e0, std::size_t t, const TransitionMatrices& tm,
                         Rng& rng);

// q(e_{t-1} | e_t, e_0), exact; one-hot on e_0 at t = 1.
std::vector<double> posterior(std::size_t e_t, std::size_t e_0, std::size_t t,
                              const TransitionMatrices& tm);

// Mean cross-entropy between softmax(logits) and the clean classes over
// unordered off-diagonal pairs.
Tape::Id training_loss(Tape& tape, Tape::Id logits, const BondMatrix& e0);

// p(e_{t-1}) = sum_e posterior(e_t, e, t) * phat[e] for one pair.
std::vector<double> reverse_mixture(std::span<const double> phat, std::size_t e_t,
                                    std::size_t t, const TransitionMatrices& tm);

// One ancestral step: sample e_{t-1} per upper-triangle pair, then mirror.
BondMatrix reverse_step(const Tensor& phat, const BondMatrix& Et, std::size_t t,
                        const TransitionMatrices& tm, Rng& rng);

// E_T with every pair drawn i.i.d. from the marginal.
BondMatrix sample_prior(std::size_t n, const TransitionMatrices& tm, Rng& rng);

// denoiser hook: bond-class probabilities [n,n,k] for a noisy state
using DenoiserFn = std::function<Tensor(const BondMatrix& Et, std::size_t t)>;

// Full reverse chain from the prior to E_0.
BondMatrix sample_edges(std::size_t n, const DenoiserFn& denoiser, const TransitionMatrices& tm,
                        Rng& rng);

MolecularGraph sample_molecule(const MolecularFormula& formula, const Tensor& y,
                               const ManyBodyDecoder& dec, const TransitionMatrices& tm,
                               Rng& rng);

// softmax over the last axis, host side
Tensor softmax_last(const Tensor& logits);

}  // namespace mbgen
