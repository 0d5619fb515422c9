#include "mbgen/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "mbgen/nn_util.hpp"

namespace mbgen {

ManyBodyDecoder::ManyBodyDecoder(DecoderConfig cfg, ParamStore& store, Rng& init_rng)
    : cfg_(cfg) {
  if (cfg_.node_dim % cfg_.node_heads != 0)
    throw std::invalid_argument("decoder: node_dim must be divisible by node_heads");
  if (cfg_.edge_dim % cfg_.mb_heads != 0)
    throw std::invalid_argument("decoder: edge_dim must be divisible by mb_heads");
  const std::size_t dh = cfg_.node_dim, de = cfg_.edge_dim, k = cfg_.bond_classes;
  const std::size_t dk = dh / cfg_.node_heads, dm = de / cfg_.mb_heads;

  node_emb_ = &store.create("dec.node_emb", xavier_uniform(init_rng, kElementCount, dh));
  edge_W_ = &store.create("dec.edge_init.W", xavier_uniform(init_rng, de, 2 * dh + k));
  edge_b_ = &store.create("dec.edge_init.b", Tensor::zeros({de}));
  cond_W_ = &store.create("dec.cond.W",
                          xavier_uniform(init_rng, cfg_.cond_dim, cfg_.y_dim + cfg_.time_dim));
  cond_b_ = &store.create("dec.cond.b", Tensor::zeros({cfg_.cond_dim}));

  layers_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Layer& L = layers_[l];
    const std::string lp = "dec.l" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < cfg_.node_heads; ++h) {
      const std::string hp = lp + "ne.h" + std::to_string(h) + ".";
      NodeHead nh;
      nh.Wq = &store.create(hp + "Wq", xavier_uniform(init_rng, dk, dh));
      nh.Wk = &store.create(hp + "Wk", xavier_uniform(init_rng, dk, dh));
      nh.Wv = &store.create(hp + "Wv", xavier_uniform(init_rng, dk, dh));
      Tensor we = xavier_uniform(init_rng, 1, de);
      we.shape = {de};
      nh.wE = &store.create(hp + "wE", std::move(we));
      L.node_heads.push_back(nh);
    }
    L.Walpha = &store.create(lp + "ne.Walpha", xavier_uniform(init_rng, de, cfg_.node_heads));
    L.Wo = &store.create(lp + "ne.Wo", xavier_uniform(init_rng, dh, cfg_.node_heads * dk));
    L.film1 = &store.create(lp + "ne.film.W1", xavier_uniform(init_rng, de, cfg_.cond_dim));
    L.film2 = &store.create(lp + "ne.film.W2", xavier_uniform(init_rng, de, cfg_.cond_dim));
    L.ffn_W1 = &store.create(lp + "ne.ffn.W1", xavier_uniform(init_rng, cfg_.ffn_hidden, de));
    L.ffn_b1 = &store.create(lp + "ne.ffn.b1", Tensor::zeros({cfg_.ffn_hidden}));
    L.ffn_W2 = &store.create(lp + "ne.ffn.W2", xavier_uniform(init_rng, de, cfg_.ffn_hidden));
    L.ffn_b2 = &store.create(lp + "ne.ffn.b2", Tensor::zeros({de}));
    if (cfg_.many_body) {
      for (std::size_t h = 0; h < cfg_.mb_heads; ++h) {
        const std::string hp = lp + "mb.h" + std::to_string(h) + ".";
        MbHead mh;
        mh.Wq = &store.create(hp + "Wq", xavier_uniform(init_rng, dm, de));
        mh.Wk = &store.create(hp + "Wk", xavier_uniform(init_rng, dm, de));
        mh.Wv = &store.create(hp + "Wv", xavier_uniform(init_rng, dm, de));
        mh.Wg = &store.create(hp + "Wg", xavier_uniform(init_rng, dm, de));
        mh.bg = &store.create(hp + "bg", Tensor::zeros({dm}));
        Tensor wb = xavier_uniform(init_rng, 1, de);
        wb.shape = {de};
        mh.wb = &store.create(hp + "wb", std::move(wb));
        L.mb_heads.push_back(mh);
      }
      L.mb_film1 = &store.create(lp + "mb.film.W1", xavier_uniform(init_rng, de, cfg_.cond_dim));
      L.mb_film2 = &store.create(lp + "mb.film.W2", xavier_uniform(init_rng, de, cfg_.cond_dim));
    } else {
      L.mb_film1 = L.mb_film2 = nullptr;
    }
  }
  // zero init: untrained logits are uniform over classes
  cls_W_ = &store.create("dec.cls.W", Tensor::zeros({k, de}));
  cls_b_ = &store.create("dec.cls.b", Tensor::zeros({k}));
}

Tape::Id ManyBodyDecoder::condition(Tape& t, Tape::Id y, std::size_t step) const {
  require_shape(t.val(y).rank() == 1 && t.val(y).shape[0] == cfg_.y_dim,
                "decoder condition: y " + shape_str(t.val(y).shape) + " expected width " +
                    std::to_string(cfg_.y_dim));
  Tape::Id temb = t.input(time_embedding(step, cfg_.time_dim));
  // the incoming condition is normalized to unit RMS so the FiLM scale stays
  // comparable between fingerprint and spectrum-encoder conditioning
  const Tape::Id parts[] = {t.rms_normalize(y), temb};
  return t.linear(t.param(*cond_W_), t.param(*cond_b_), t.concat_last(parts));
}

std::pair<Tape::Id, Tape::Id> ManyBodyDecoder::init_embeddings(
    Tape& t, const std::vector<Element>& nodes, const BondMatrix& Et) const {
  const std::size_t n = nodes.size();
  if (n == 0) throw std::invalid_argument("decoder: empty node set");
  if (Et.n != n || !Et.is_symmetric_zero_diag())
    throw std::invalid_argument(
        "decoder: noisy bond matrix must be symmetric with zero diagonal");
  const std::size_t k = cfg_.bond_classes;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::size_t>(nodes[i]);
  Tape::Id h0 = t.gather_rows(t.param(*node_emb_), rows);

  Tensor onehot(Shape{n, n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint8_t c = Et(i, j);
      if (c >= k) throw std::invalid_argument("decoder: bond class out of range");
      onehot.data[(i * n + j) * k + c] = 1.0;
    }
  Tape::Id pc = t.pair_concat(h0, t.input(std::move(onehot)));
  Tape::Id e0 = t.symmetrize_pairs(t.linear(t.param(*edge_W_), t.param(*edge_b_), pc));
  return {h0, e0};
}

std::pair<Tape::Id, Tape::Id> ManyBodyDecoder::node_edge_layer(Tape& t, Tape::Id h, Tape::Id e,
                                                               Tape::Id c,
                                                               std::size_t layer) const {
  const Layer& L = layers_[layer];
  const std::size_t dk = cfg_.node_dim / cfg_.node_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Tape::Id> scores;
  scores.reserve(cfg_.node_heads);
  for (const NodeHead& nh : L.node_heads) {
    Tape::Id Q = t.linear(t.param(*nh.Wq), Tape::kNone, h);
    Tape::Id K = t.linear(t.param(*nh.Wk), Tape::kNone, h);
    Tape::Id s = t.add(t.scale(t.matmul_nt(Q, K), inv_sqrt),
                       t.contract_last(e, t.param(*nh.wE)));
    scores.push_back(s);
  }
  Tape::Id stacked = t.stack_last(scores);
  Tape::Id o = t.linear(t.param(*L.Walpha), Tape::kNone, stacked);
  Tape::Id x = t.add(e, t.film(o, c, t.param(*L.film1), t.param(*L.film2)));
  Tape::Id hidden = t.gelu(t.linear(t.param(*L.ffn_W1), t.param(*L.ffn_b1), x));
  Tape::Id e_out = t.add(x, t.linear(t.param(*L.ffn_W2), t.param(*L.ffn_b2), hidden));
  e_out = t.symmetrize_pairs(e_out);

  std::vector<Tape::Id> node_out;
  node_out.reserve(cfg_.node_heads);
  for (std::size_t hi = 0; hi < cfg_.node_heads; ++hi) {
    Tape::Id A = t.softmax(scores[hi], 1);
    Tape::Id V = t.linear(t.param(*L.node_heads[hi].Wv), Tape::kNone, h);
    node_out.push_back(t.matmul_nn(A, V));
  }
  Tape::Id h_out = t.add(h, t.linear(t.param(*L.Wo), Tape::kNone, t.concat_last(node_out)));
  return {h_out, e_out};
}

Tape::Id ManyBodyDecoder::many_body_attention(Tape& t, Tape::Id e, Tape::Id c,
                                              std::size_t layer) const {
  if (!cfg_.many_body)
    throw std::logic_error("many_body_attention called with the module disabled");
  const Layer& L = layers_[layer];
  const std::size_t dm = cfg_.edge_dim / cfg_.mb_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dm));

  std::vector<Tape::Id> head_out;
  head_out.reserve(cfg_.mb_heads);
  for (const MbHead& mh : L.mb_heads) {
    Tape::Id q = t.linear(t.param(*mh.Wq), Tape::kNone, e);
    Tape::Id k = t.linear(t.param(*mh.Wk), Tape::kNone, e);
    Tape::Id v = t.linear(t.param(*mh.Wv), Tape::kNone, e);
    Tape::Id gate = t.sigmoid(t.linear(t.param(*mh.Wg), t.param(*mh.bg), e));
    Tape::Id b = t.contract_last(e, t.param(*mh.wb));
    Tape::Id s = t.triplet_scores(q, k, b, inv_sqrt);
    Tape::Id A = t.softmax(s, 2);
    head_out.push_back(t.triplet_mix(A, gate, v));
  }
  Tape::Id z = t.concat_last(head_out);
  Tape::Id e_out = t.add(e, t.film(z, c, t.param(*L.mb_film1), t.param(*L.mb_film2)));
  return t.symmetrize_pairs(e_out);
}

Tape::Id ManyBodyDecoder::decode_logits(Tape& t, const std::vector<Element>& nodes,
                                        const BondMatrix& Et, std::size_t step,
                                        Tape::Id y) const {
  Tape::Id c = condition(t, y, step);
  auto [h, e] = init_embeddings(t, nodes, Et);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    auto [h2, e2] = node_edge_layer(t, h, e, c, l);
    h = h2;
    e = e2;
    if (cfg_.many_body) e = many_body_attention(t, e, c, l);
  }
  Tape::Id logits = t.symmetrize_pairs(t.linear(t.param(*cls_W_), t.param(*cls_b_), e));
  std::vector<double> diag(cfg_.bond_classes, -1e4);
  diag[0] = 0.0;  // diagonal pairs are always the no-bond class
  return t.mask_diag(logits, std::move(diag));
}

}  // namespace mbgen
