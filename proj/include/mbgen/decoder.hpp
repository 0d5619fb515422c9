#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mbgen/chem.hpp"
#include "mbgen/rng.hpp"
#include "mbgen/tape.hpp"

namespace mbgen {

struct DecoderConfig {
  std::size_t node_dim = 128;
  std::size_t edge_dim = 64;
  std::size_t layers = 6;
  std::size_t node_heads = 4;
  std::size_t mb_heads = 2;
  std::size_t ffn_hidden = 128;
  std::size_t cond_dim = 64;
  std::size_t time_dim = 32;
  std::size_t y_dim = 256;  // width of the incoming condition vector
  std::size_t bond_classes = kBondClasses;
  bool many_body = true;
  std::size_t n_max = 40;
};

// Denoising network over bond categories: edge-centric layers with node-edge
// attention, triplet (many-body) attention with sigmoid gating, FiLM
// conditioning on [y; t], and a per-pair class head.
class ManyBodyDecoder {
 public:
  ManyBodyDecoder(DecoderConfig cfg, ParamStore& store, Rng& init_rng);

  // fused condition c from the global feature and the timestep
  Tape::Id condition(Tape& t, Tape::Id y, std::size_t step) const;

  std::pair<Tape::Id, Tape::Id> init_embeddings(Tape& t, const std::vector<Element>& nodes,
                                                const BondMatrix& Et) const;
  std::pair<Tape::Id, Tape::Id> node_edge_layer(Tape& t, Tape::Id h, Tape::Id e, Tape::Id c,
                                                std::size_t layer) const;
  Tape::Id many_body_attention(Tape& t, Tape::Id e, Tape::Id c, std::size_t layer) const;

  // full forward pass: symmetric [n,n,k] logits with the diagonal pinned to
  // the no-bond class
  Tape::Id decode_logits(Tape& t, const std::vector<Element>& nodes, const BondMatrix& Et,
                         std::size_t step, Tape::Id y) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  struct NodeHead {
    Parameter *Wq, *Wk, *Wv, *wE;
  };
  struct MbHead {
    Parameter *Wq, *Wk, *Wv, *Wg, *bg, *wb;
  };
  struct Layer {
    std::vector<NodeHead> node_heads;
    Parameter *Walpha, *Wo;
    Parameter *film1, *film2;
    Parameter *ffn_W1, *ffn_b1, *ffn_W2, *ffn_b2;
    std::vector<MbHead> mb_heads;
    Parameter *mb_film1, *mb_film2;
  };

  DecoderConfig cfg_;
  Parameter* node_emb_;
  Parameter *edge_W_, *edge_b_;
  Parameter *cond_W_, *cond_b_;
  std::vector<Layer> layers_;
  Parameter *cls_W_, *cls_b_;
};

}  // namespace mbgen
