#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbgen/decoder.hpp"
#include "mbgen/diffusion.hpp"
#include "mbgen/encoder.hpp"
#include "mbgen/fingerprint.hpp"
#include "mbgen/graph_io.hpp"
#include "mbgen/spectrum.hpp"

namespace mbgen {

struct TrainItem {
  std::string id;
  Spectrum spectrum;  // may be empty for decoder-only training
  MolecularGraph graph;
  Fingerprint fp;
};

// Pairs graph records with spectra by id; every graph must have a spectrum.
std::vector<TrainItem> join_dataset(const std::vector<GraphRecord>& graphs,
                                    const std::vector<Spectrum>& spectra, int fp_radius,
                                    std::size_t fp_bits);
// Graphs only (fingerprint targets computed, spectra left empty).
std::vector<TrainItem> items_from_graphs(const std::vector<GraphRecord>& graphs, int fp_radius,
                                         std::size_t fp_bits);

struct StageConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t n_max = 40;
  bool freeze_encoder = false;
  std::size_t log_every = 0;  // 0 silences progress output
};

struct StageResult {
  std::vector<double> losses;  // mean batch loss per step
};

// Learned map from a fingerprint into the decoder's y slot, used when the
// decoder is trained without the spectrum encoder.
class FingerprintConditioner {
 public:
  FingerprintConditioner(std::size_t y_dim, std::size_t fp_bits, ParamStore& store,
                         Rng& init_rng);
  Tape::Id project(Tape& t, const Fingerprint& fp) const;
  Tensor condition(const Fingerprint& fp) const;  // host-side forward

 private:
  std::size_t fp_bits_;
  Parameter *W_, *b_;
};

StageResult pretrain_encoder(SpectrumEncoder& enc, ParamStore& enc_store,
                             const std::vector<TrainItem>& items, const StageConfig& cfg);

StageResult pretrain_decoder(ManyBodyDecoder& dec, const FingerprintConditioner& cond,
                             ParamStore& dec_store, const std::vector<TrainItem>& items,
                             const TransitionMatrices& tm, const StageConfig& cfg);

StageResult finetune(SpectrumEncoder& enc, ParamStore& enc_store, ManyBodyDecoder& dec,
                     ParamStore& dec_store, const std::vector<TrainItem>& items,
                     const TransitionMatrices& tm, const StageConfig& cfg);

struct Candidate {
  MolecularGraph graph;
  std::string canon;
  std::size_t count = 0;
};

struct CandidateSet {
  std::string spectrum_id;
  std::size_t n_samples = 0;
  std::vector<Candidate> ranked;  // by count desc, canonical string asc
};

// Encodes the spectrum once, then runs n_samples independent reverse chains
// (parallelizable; chain i uses the substream child(i) of `seed`).
CandidateSet generate_candidates(const Spectrum& spectrum, const MolecularFormula& formula,
                                 const SpectrumEncoder& enc, const ManyBodyDecoder& dec,
                                 const TransitionMatrices& tm, std::size_t n_samples,
                                 std::uint64_t seed);

// Same chains, conditioned on a precomputed y vector.
CandidateSet generate_candidates_y(const std::string& id, const Tensor& y,
                                   const MolecularFormula& formula, const ManyBodyDecoder& dec,
                                   const TransitionMatrices& tm, std::size_t n_samples,
                                   std::uint64_t seed);

}  // namespace mbgen
