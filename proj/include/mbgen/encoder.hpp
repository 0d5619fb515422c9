#pragma once

#include <cstddef>
#include <vector>

#include "mbgen/rng.hpp"
#include "mbgen/spectrum.hpp"
#include "mbgen/tape.hpp"

namespace mbgen {

struct EncoderConfig {
  std::size_t dim = 256;  // peak embedding and output width
  std::size_t heads = 4;
  std::size_t layers = 3;
  std::size_t fp_bits = 2048;
};

// Set-style spectrum encoder: annotated peaks attend pairwise with a
// formula-difference term, mean pooling yields the global condition y.
class SpectrumEncoder {
 public:
  SpectrumEncoder(EncoderConfig cfg, ParamStore& store, Rng& init_rng);

  // y node of shape [dim]; permutation-invariant over peaks
  Tape::Id encode(Tape& t, const Spectrum& s) const;
  // per-peak states [N, dim] after all attention layers (encode() takes
  // their mean)
  Tape::Id peak_states(Tape& t, const Spectrum& s) const;
  // single-peak embedding, shape [1, dim]
  Tape::Id embed_peak(Tape& t, const Peak& p) const;
  // fingerprint bit logits, shape [fp_bits]
  Tape::Id predict_fp_logits(Tape& t, Tape::Id y) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Head {
    Parameter *Wq, *Wk, *Wv, *b1, *b2;
  };
  struct Layer {
    std::vector<Head> heads;
    Parameter* Wo;
  };

  Tape::Id embed_rows(Tape& t, const std::vector<const Peak*>& peaks) const;

  EncoderConfig cfg_;
  Parameter* femb_;
  Parameter *proj_W_, *proj_b_;
  std::vector<Layer> layers_;
  Parameter *fp_W_, *fp_b_;
};

}  // namespace mbgen
