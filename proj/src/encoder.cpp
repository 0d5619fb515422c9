#include "mbgen/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "mbgen/nn_util.hpp"

namespace mbgen {

SpectrumEncoder::SpectrumEncoder(EncoderConfig cfg, ParamStore& store, Rng& init_rng)
    : cfg_(cfg) {
  if (cfg_.dim % cfg_.heads != 0)
    throw std::invalid_argument("encoder: dim must be divisible by heads");
  const std::size_t d = cfg_.dim, dk = d / cfg_.heads;
  femb_ = &store.create("enc.femb.W", xavier_uniform(init_rng, d, kFormulaVectorLen));
  proj_W_ = &store.create("enc.proj.W", xavier_uniform(init_rng, d, d + 1));
  proj_b_ = &store.create("enc.proj.b", Tensor::zeros({d}));
  layers_.resize(cfg_.layers);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string lp = "enc.l" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hp = lp + "h" + std::to_string(h) + ".";
      Head head;
      head.Wq = &store.create(hp + "Wq", xavier_uniform(init_rng, dk, d));
      head.Wk = &store.create(hp + "Wk", xavier_uniform(init_rng, dk, d));
      head.Wv = &store.create(hp + "Wv", xavier_uniform(init_rng, dk, d));
      head.b1 = &store.create(hp + "b1", Tensor::zeros({dk}));
      head.b2 = &store.create(hp + "b2", Tensor::zeros({dk}));
      layers_[l].heads.push_back(head);
    }
    layers_[l].Wo = &store.create(lp + "Wo", xavier_uniform(init_rng, d, d));
  }
  // zero init keeps the initial bit probabilities at exactly 0.5
  fp_W_ = &store.create("enc.fp.W", Tensor::zeros({cfg_.fp_bits, d}));
  fp_b_ = &store.create("enc.fp.b", Tensor::zeros({cfg_.fp_bits}));
}

Tape::Id SpectrumEncoder::embed_rows(Tape& t, const std::vector<const Peak*>& peaks) const {
  const std::size_t N = peaks.size();
  Tensor F(Shape{N, kFormulaVectorLen});
  Tensor I(Shape{N, 1});
  for (std::size_t i = 0; i < N; ++i) {
    const std::vector<double> cv = peaks[i]->formula.count_vector();
    for (std::size_t c = 0; c < kFormulaVectorLen; ++c) F.data[i * kFormulaVectorLen + c] = cv[c];
    I.data[i] = peaks[i]->intensity;
  }
  Tape::Id femb = t.linear(t.param(*femb_), Tape::kNone, t.input(std::move(F)));
  const Tape::Id parts[] = {femb, t.input(std::move(I))};
  return t.linear(t.param(*proj_W_), t.param(*proj_b_), t.concat_last(parts));
}

Tape::Id SpectrumEncoder::embed_peak(Tape& t, const Peak& p) const {
  return embed_rows(t, {&p});
}

Tape::Id SpectrumEncoder::encode(Tape& t, const Spectrum& s) const {
  return t.mean_rows(peak_states(t, s));
}

Tape::Id SpectrumEncoder::peak_states(Tape& t, const Spectrum& s) const {
  if (s.peaks.empty()) throw std::invalid_argument("encode: empty spectrum " + s.id);
  const std::size_t N = s.peaks.size();
  const std::size_t d = cfg_.dim, H = cfg_.heads, dk = d / H;
  std::vector<const Peak*> pp(N);
  for (std::size_t i = 0; i < N; ++i) pp[i] = &s.peaks[i];
  Tape::Id X = embed_rows(t, pp);

  // |F_i - F_j| embedded with the same formula map, split across heads
  Tensor D(Shape{N, N, kFormulaVectorLen});
  {
    std::vector<std::vector<double>> cv(N);
    for (std::size_t i = 0; i < N; ++i) cv[i] = s.peaks[i].formula.count_vector();
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        for (std::size_t c = 0; c < kFormulaVectorLen; ++c)
          D.data[(i * N + j) * kFormulaVectorLen + c] = std::abs(cv[i][c] - cv[j][c]);
  }
  Tape::Id Demb = t.linear(t.param(*femb_), Tape::kNone, t.input(std::move(D)));

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const Layer& L = layers_[l];
    std::vector<Tape::Id> head_out;
    for (std::size_t h = 0; h < H; ++h) {
      const Head& hd = L.heads[h];
      Tape::Id Q = t.linear(t.param(*hd.Wq), Tape::kNone, X);
      Tape::Id K = t.linear(t.param(*hd.Wk), Tape::kNone, X);
      Tape::Id V = t.linear(t.param(*hd.Wv), Tape::kNone, X);
      Tape::Id s1 = t.matmul_nt(t.bcast_add_vec(Q, t.param(*hd.b1)), K);
      Tape::Id Dh = t.chunk_last(Demb, h, H);
      Tape::Id s2 = t.row_pair_dot(t.bcast_add_vec(Q, t.param(*hd.b2)), Dh);
      Tape::Id score = t.scale(t.add(s1, s2), inv_sqrt);
      Tape::Id A = t.softmax(score, 1);
      head_out.push_back(t.matmul_nn(A, V));
    }
    Tape::Id cat = t.concat_last(head_out);
    X = t.add(X, t.linear(t.param(*L.Wo), Tape::kNone, cat));
  }
  return X;
}

Tape::Id SpectrumEncoder::predict_fp_logits(Tape& t, Tape::Id y) const {
  return t.linear(t.param(*fp_W_), t.param(*fp_b_), y);
}

}  // namespace mbgen
