#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbgen/train.hpp"

namespace mbgen {

// 1 iff one of the first k unique candidates is isomorphic to the truth.
int topk_accuracy(const CandidateSet& candidates, const MolecularGraph& truth, std::size_t k);

struct SimilarityResult {
  double best_tanimoto = 0.0;
  double best_mces = 0.0;
  bool mces_exact = true;  // false if a branch-and-bound budget was hit
};

// Best-of-k: max Tanimoto and min MCES distance over the first k candidates.
SimilarityResult topk_similarity(const CandidateSet& candidates, const MolecularGraph& truth,
                                 std::size_t k, int fp_radius, std::size_t fp_bits,
                                 std::size_t mces_budget);

struct ItemEval {
  std::string id;
  std::size_t n_atoms = 0;
  int top1 = 0, top10 = 0;
  double tan1 = 0.0, tan10 = 0.0;
  double mces1 = 0.0, mces10 = 0.0;
  bool mces1_exact = true, mces10_exact = true;
  std::size_t unique_candidates = 0;
};

struct EvalSummary {
  std::size_t items = 0;
  double top1_acc = 0.0, top10_acc = 0.0;
  double mean_tan1 = 0.0, mean_tan10 = 0.0;
  double mean_mces1 = 0.0, mean_mces10 = 0.0;
};

struct AtomBucket {
  std::size_t n_atoms = 0;
  std::size_t count = 0;
  double top1_acc = 0.0, top10_acc = 0.0;
  double mean_tan1 = 0.0, mean_mces1 = 0.0;
};

struct EvalReport {
  std::vector<ItemEval> items;
  EvalSummary summary;
  std::vector<AtomBucket> by_atoms;  // ascending heavy-atom count

  std::string to_tsv() const;
};

struct EvalConfig {
  std::size_t n_candidates = 100;
  int fp_radius = 2;
  std::size_t fp_bits = 2048;
  std::size_t mces_budget = 2'000'000;
  std::uint64_t seed = 0;
};

EvalReport evaluate_dataset(const std::vector<TrainItem>& items, const SpectrumEncoder& enc,
                            const ManyBodyDecoder& dec, const TransitionMatrices& tm,
                            const EvalConfig& cfg);

EvalSummary summarize(const std::vector<ItemEval>& items);

}  // namespace mbgen
