#include "mbgen/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>

#include "mbgen/canonical.hpp"
#include "mbgen/mces.hpp"

namespace mbgen {

int topk_accuracy(const CandidateSet& candidates, const MolecularGraph& truth, std::size_t k) {
  if (candidates.ranked.empty()) {
    std::cerr << "warning: empty candidate list for " << candidates.spectrum_id << "\n";
    return 0;
  }
  const std::string truth_canon = canonical_form(truth);
  const std::size_t limit = std::min(k, candidates.ranked.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (candidates.ranked[i].canon == truth_canon) return 1;
  return 0;
}

SimilarityResult topk_similarity(const CandidateSet& candidates, const MolecularGraph& truth,
                                 std::size_t k, int fp_radius, std::size_t fp_bits,
                                 std::size_t mces_budget) {
  SimilarityResult r;
  if (candidates.ranked.empty()) {
    r.best_mces = static_cast<double>(truth.edges.edge_count());
    return r;
  }
  const Fingerprint truth_fp = circular_fingerprint(truth, fp_radius, fp_bits);
  const std::size_t limit = std::min(k, candidates.ranked.size());
  double best_tan = -1.0;
  double best_mces = -1.0;
  bool exact = true;
  for (std::size_t i = 0; i < limit; ++i) {
    const MolecularGraph& cand = candidates.ranked[i].graph;
    const double tan = tanimoto(truth_fp, circular_fingerprint(cand, fp_radius, fp_bits));
    best_tan = std::max(best_tan, tan);
    const McesResult mr = mces_distance(cand, truth, mces_budget);
    if (best_mces < 0.0 || mr.distance < best_mces) {
      best_mces = mr.distance;
      exact = mr.exact;
    }
  }
  r.best_tanimoto = best_tan;
  r.best_mces = best_mces;
  r.mces_exact = exact;
  return r;
}

EvalSummary summarize(const std::vector<ItemEval>& items) {
  EvalSummary s;
  s.items = items.size();
  if (items.empty()) return s;
  for (const ItemEval& it : items) {
    s.top1_acc += it.top1;
    s.top10_acc += it.top10;
    s.mean_tan1 += it.tan1;
    s.mean_tan10 += it.tan10;
    s.mean_mces1 += it.mces1;
    s.mean_mces10 += it.mces10;
  }
  const double n = static_cast<double>(items.size());
  s.top1_acc /= n;
  s.top10_acc /= n;
  s.mean_tan1 /= n;
  s.mean_tan10 /= n;
  s.mean_mces1 /= n;
  s.mean_mces10 /= n;
  return s;
}

EvalReport evaluate_dataset(const std::vector<TrainItem>& items, const SpectrumEncoder& enc,
                            const ManyBodyDecoder& dec, const TransitionMatrices& tm,
                            const EvalConfig& cfg) {
  EvalReport report;
  report.items.resize(items.size());
  for (std::size_t idx = 0; idx < items.size(); ++idx) {
    const TrainItem& item = items[idx];
    const CandidateSet cs =
        generate_candidates(item.spectrum, item.graph.formula(), enc, dec, tm,
                            cfg.n_candidates, Rng(cfg.seed).child(idx ^ 0x9E37u).seed());
    ItemEval ev;
    ev.id = item.id;
    ev.n_atoms = item.graph.nodes.size();
    ev.unique_candidates = cs.ranked.size();
    ev.top1 = topk_accuracy(cs, item.graph, 1);
    ev.top10 = topk_accuracy(cs, item.graph, 10);
    const SimilarityResult s1 =
        topk_similarity(cs, item.graph, 1, cfg.fp_radius, cfg.fp_bits, cfg.mces_budget);
    const SimilarityResult s10 =
        topk_similarity(cs, item.graph, 10, cfg.fp_radius, cfg.fp_bits, cfg.mces_budget);
    ev.tan1 = s1.best_tanimoto;
    ev.tan10 = s10.best_tanimoto;
    ev.mces1 = s1.best_mces;
    ev.mces10 = s10.best_mces;
    ev.mces1_exact = s1.mces_exact;
    ev.mces10_exact = s10.mces_exact;
    report.items[idx] = ev;
  }
  report.summary = summarize(report.items);

  std::map<std::size_t, std::vector<const ItemEval*>> buckets;
  for (const ItemEval& it : report.items) buckets[it.n_atoms].push_back(&it);
  for (const auto& [n_atoms, members] : buckets) {
    AtomBucket b;
    b.n_atoms = n_atoms;
    b.count = members.size();
    for (const ItemEval* it : members) {
      b.top1_acc += it->top1;
      b.top10_acc += it->top10;
      b.mean_tan1 += it->tan1;
      b.mean_mces1 += it->mces1;
    }
    const double n = static_cast<double>(members.size());
    b.top1_acc /= n;
    b.top10_acc /= n;
    b.mean_tan1 /= n;
    b.mean_mces1 /= n;
    report.by_atoms.push_back(b);
  }
  return report;
}

std::string EvalReport::to_tsv() const {
  std::string out;
  char buf[256];
  out += "# per-item\n";
  out +=
      "id\tn_atoms\tunique\ttop1\ttop10\ttanimoto@1\ttanimoto@10\tmces@1\tmces@10\tmces_"
      "exact@1\tmces_exact@10\n";
  for (const ItemEval& it : items) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%zu\t%d\t%d\t%.6f\t%.6f\t%.6f\t%.6f\t%d\t%d\n",
                  it.id.c_str(), it.n_atoms, it.unique_candidates, it.top1, it.top10, it.tan1,
                  it.tan10, it.mces1, it.mces10, it.mces1_exact ? 1 : 0,
                  it.mces10_exact ? 1 : 0);
    out += buf;
  }
  out += "# by heavy-atom count\n";
  out += "n_atoms\tcount\ttop1_acc\ttop10_acc\tmean_tanimoto@1\tmean_mces@1\n";
  for (const AtomBucket& b : by_atoms) {
    std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", b.n_atoms, b.count,
                  b.top1_acc, b.top10_acc, b.mean_tan1, b.mean_mces1);
    out += buf;
  }
  out += "# summary\n";
  out += "items\ttop1_acc\ttop10_acc\tmean_tanimoto@1\tmean_tanimoto@10\tmean_mces@1\tmean_"
         "mces@10\n";
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", summary.items,
                summary.top1_acc, summary.top10_acc, summary.mean_tan1, summary.mean_tan10,
                summary.mean_mces1, summary.mean_mces10);
  out += buf;
  return out;
}

}  // namespace mbgen
