#include "mbgen/train.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <stdexcept>

#include "mbgen/adam.hpp"
#include "mbgen/canonical.hpp"
#include "mbgen/nn_util.hpp"

namespace mbgen {

std::vector<TrainItem> join_dataset(const std::vector<GraphRecord>& graphs,
                                    const std::vector<Spectrum>& spectra, int fp_radius,
                                    std::size_t fp_bits) {
  std::map<std::string, const Spectrum*> by_id;
  for (const Spectrum& s : spectra) {
    if (!by_id.emplace(s.id, &s).second)
      throw std::runtime_error("dataset: duplicate spectrum id " + s.id);
  }
  std::vector<TrainItem> items;
  items.reserve(graphs.size());
  for (const GraphRecord& g : graphs) {
    auto it = by_id.find(g.id);
    if (it == by_id.end())
      throw std::runtime_error("dataset: no spectrum for molecule " + g.id);
    TrainItem item;
    item.id = g.id;
    item.spectrum = *it->second;
    item.graph = g.graph;
    item.fp = circular_fingerprint(g.graph, fp_radius, fp_bits);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<TrainItem> items_from_graphs(const std::vector<GraphRecord>& graphs, int fp_radius,
                                         std::size_t fp_bits) {
  std::vector<TrainItem> items;
  items.reserve(graphs.size());
  for (const GraphRecord& g : graphs) {
    TrainItem item;
    item.id = g.id;
    item.graph = g.graph;
    item.fp = circular_fingerprint(g.graph, fp_radius, fp_bits);
    items.push_back(std::move(item));
  }
  return items;
}

FingerprintConditioner::FingerprintConditioner(std::size_t y_dim, std::size_t fp_bits,
                                               ParamStore& store, Rng& init_rng)
    : fp_bits_(fp_bits) {
  W_ = &store.create("dec.fpcond.W", xavier_uniform(init_rng, y_dim, fp_bits));
  b_ = &store.create("dec.fpcond.b", Tensor::zeros({y_dim}));
}

Tape::Id FingerprintConditioner::project(Tape& t, const Fingerprint& fp) const {
  if (fp.length() != fp_bits_)
    throw std::invalid_argument("fingerprint conditioner: fingerprint length " +
                                std::to_string(fp.length()) + ", expected " +
                                std::to_string(fp_bits_));
  Tensor in(Shape{fp_bits_}, fp.as_doubles());
  return t.linear(t.param(*W_), t.param(*b_), t.input(std::move(in)));
}

Tensor FingerprintConditioner::condition(const Fingerprint& fp) const {
  Tape t(false);
  return t.val(project(t, fp));
}

namespace {

std::vector<TrainItem> filter_by_size(const std::vector<TrainItem>& items, std::size_t n_max) {
  std::vector<TrainItem> kept;
  for (const TrainItem& it : items) {
    if (it.graph.nodes.size() > n_max) {
      std::cerr << "warning: skipping molecule " << it.id << " with "
                << it.graph.nodes.size() << " atoms (n_max=" << n_max << ")\n";
      continue;
    }
    kept.push_back(it);
  }
  if (kept.empty()) throw std::runtime_error("training: no molecules within n_max");
  return kept;
}

using ConditionFn = std::function<Tape::Id(Tape&, const TrainItem&)>;

StageResult run_denoise_training(ManyBodyDecoder& dec, const std::vector<TrainItem>& items_in,
                                 const TransitionMatrices& tm, const StageConfig& cfg,
                                 std::vector<Parameter*> opt_params,
                                 const ConditionFn& condition) {
  const std::vector<TrainItem> items = filter_by_size(items_in, cfg.n_max);
  Rng rng(cfg.seed);
  Adam adam(std::move(opt_params), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  StageResult res;
  res.losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const TrainItem& item = items[rng.uniform_int(items.size())];
      const std::size_t t_step = 1 + rng.uniform_int(tm.T);
      const BondMatrix Et = forward_noise(item.graph.edges, t_step, tm, rng);
      Tape tape(true);
      Tape::Id y = condition(tape, item);
      Tape::Id logits = dec.decode_logits(tape, item.graph.nodes, Et, t_step, y);
      Tape::Id loss = training_loss(tape, logits, item.graph.edges);
      batch_loss += tape.val(loss).data[0];
      tape.backward(tape.scale(loss, 1.0 / static_cast<double>(cfg.batch)));
    }
    adam.step();
    res.losses.push_back(batch_loss / static_cast<double>(cfg.batch));
    if (cfg.log_every && (step + 1) % cfg.log_every == 0)
      std::cerr << "step " << (step + 1) << "/" << cfg.steps << " loss " << res.losses.back()
                << "\n";
  }
  return res;
}

}  // namespace

StageResult pretrain_encoder(SpectrumEncoder& enc, ParamStore& enc_store,
                             const std::vector<TrainItem>& items, const StageConfig& cfg) {
  if (items.empty()) throw std::invalid_argument("pretrain_encoder: empty dataset");
  for (const TrainItem& it : items)
    if (it.spectrum.peaks.empty())
      throw std::invalid_argument("pretrain_encoder: item " + it.id + " has no spectrum");
  Rng rng(cfg.seed);
  Adam adam(enc_store.all(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  StageResult res;
  res.losses.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const TrainItem& item = items[rng.uniform_int(items.size())];
      Tape tape(true);
      Tape::Id y = enc.encode(tape, item.spectrum);
      Tape::Id logits = enc.predict_fp_logits(tape, y);
      Tape::Id loss = tape.bce_with_logits(logits, item.fp.as_doubles());
      batch_loss += tape.val(loss).data[0];
      tape.backward(tape.scale(loss, 1.0 / static_cast<double>(cfg.batch)));
    }
    adam.step();
    res.losses.push_back(batch_loss / static_cast<double>(cfg.batch));
    if (cfg.log_every && (step + 1) % cfg.log_every == 0)
      std::cerr << "step " << (step + 1) << "/" << cfg.steps << " loss " << res.losses.back()
                << "\n";
  }
  return res;
}

StageResult pretrain_decoder(ManyBodyDecoder& dec, const FingerprintConditioner& cond,
                             ParamStore& dec_store, const std::vector<TrainItem>& items,
                             const TransitionMatrices& tm, const StageConfig& cfg) {
  if (items.empty()) throw std::invalid_argument("pretrain_decoder: empty dataset");
  ConditionFn fn = [&cond](Tape& t, const TrainItem& item) {
    return cond.project(t, item.fp);
  };
  return run_denoise_training(dec, items, tm, cfg, dec_store.all(), fn);
}

StageResult finetune(SpectrumEncoder& enc, ParamStore& enc_store, ManyBodyDecoder& dec,
                     ParamStore& dec_store, const std::vector<TrainItem>& items,
                     const TransitionMatrices& tm, const StageConfig& cfg) {
  if (items.empty()) throw std::invalid_argument("finetune: empty dataset");
  for (const TrainItem& it : items)
    if (it.spectrum.peaks.empty())
      throw std::invalid_argument("finetune: item " + it.id + " has no spectrum");
  std::vector<Parameter*> opt_params = dec_store.all();
  if (!cfg.freeze_encoder) {
    for (Parameter* p : enc_store.all()) opt_params.push_back(p);
  }
  ConditionFn fn = [&enc](Tape& t, const TrainItem& item) {
    return enc.encode(t, item.spectrum);
  };
  StageResult res = run_denoise_training(dec, items, tm, cfg, std::move(opt_params), fn);
  if (cfg.freeze_encoder) enc_store.zero_grads();  // gradients were computed but unused
  return res;
}

namespace {
CandidateSet rank_candidates(const std::string& id, std::vector<MolecularGraph> graphs) {
  CandidateSet cs;
  cs.spectrum_id = id;
  cs.n_samples = graphs.size();
  std::map<std::string, Candidate> tally;
  for (MolecularGraph& g : graphs) {
    std::string canon = canonical_form(g);
    auto it = tally.find(canon);
    if (it == tally.end()) {
      Candidate c;
      c.graph = std::move(g);
      c.canon = canon;
      c.count = 1;
      tally.emplace(std::move(canon), std::move(c));
    } else {
      it->second.count += 1;
    }
  }
  for (auto& [k, c] : tally) {
    (void)k;
    cs.ranked.push_back(std::move(c));
  }
  std::sort(cs.ranked.begin(), cs.ranked.end(), [](const Candidate& a, const Candidate& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.canon < b.canon;
  });
  return cs;
}
}  // namespace

CandidateSet generate_candidates_y(const std::string& id, const Tensor& y,
                                   const MolecularFormula& formula, const ManyBodyDecoder& dec,
                                   const TransitionMatrices& tm, std::size_t n_samples,
                                   std::uint64_t seed) {
  std::vector<MolecularGraph> graphs(n_samples);
  const Rng base(seed);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(n_samples); ++s) {
    Rng chain_rng = base.child(static_cast<std::uint64_t>(s));
    graphs[s] = sample_molecule(formula, y, dec, tm, chain_rng);
  }
  return rank_candidates(id, std::move(graphs));
}

CandidateSet generate_candidates(const Spectrum& spectrum, const MolecularFormula& formula,
                                 const SpectrumEncoder& enc, const ManyBodyDecoder& dec,
                                 const TransitionMatrices& tm, std::size_t n_samples,
                                 std::uint64_t seed) {
  Tensor y;
  {
    Tape t(false);
    y = t.val(enc.encode(t, spectrum));
  }
  return generate_candidates_y(spectrum.id, y, formula, dec, tm, n_samples, seed);
}

}  // namespace mbgen
