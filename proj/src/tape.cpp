#include "mbgen/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mbgen/kernels.hpp"

namespace mbgen {

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_bwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}
}  // namespace

Parameter& ParamStore::create(const std::string& name, Tensor init) {
  if (by_name_.count(name)) throw std::invalid_argument("parameter exists: " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  by_name_[name] = params_.size() - 1;
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

Tape::Node& Tape::node(Id id) { return nodes_.at(static_cast<std::size_t>(id)); }
const Tape::Node& Tape::node(Id id) const { return nodes_.at(static_cast<std::size_t>(id)); }

const Tensor& Tape::val(Id id) const { return *node(id).value; }

Tensor& Tape::grad(Id id) {
  ensure_grad(id);
  return node(id).grad;
}

void Tape::ensure_grad(Id id) {
  Node& n = node(id);
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value->shape);
    n.grad_alloc = true;
  }
}

void Tape::accum(Id id, const double* g, std::size_t len) {
  ensure_grad(id);
  Node& n = node(id);
  for (std::size_t i = 0; i < len; ++i) n.grad.data[i] += g[i];
  n.touched = true;
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&)> back) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.owned = std::move(value);
  n.value = &n.owned;
  if (grad_enabled_) n.back = std::move(back);
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Tensor t) {
  require_finite(t, "input");
  return push(std::move(t), nullptr);
}

Tape::Id Tape::input_view(const Tensor* t) {
  nodes_.emplace_back();
  nodes_.back().value = t;
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::param(Parameter& p) {
  nodes_.emplace_back();
  nodes_.back().value = &p.value;
  nodes_.back().bound = &p;
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_shape(ta.same_shape(tb),
                "add: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    t.accum(a, g.data.data(), g.size());
    t.accum(b, g.data.data(), g.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_shape(ta.same_shape(tb),
                "mul: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  require_finite(out, "mul");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    std::vector<double> tmp(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g.data[i] * vb.data[i];
    t.accum(a, tmp.data(), tmp.size());
    for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g.data[i] * va.data[i];
    t.accum(b, tmp.data(), tmp.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::scale(Id a, double s) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = s * ta.data[i];
  require_finite(out, "scale");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, s](Tape& t) {
    const Tensor& g = t.node(id).grad;
    std::vector<double> tmp(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = s * g.data[i];
    t.accum(a, tmp.data(), tmp.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_shape(ta.rank() == 2 && tb.rank() == 2 && ta.shape[1] == tb.shape[1],
                "matmul_nt: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  const std::size_t M = ta.shape[0], K = ta.shape[1], N = tb.shape[0];
  Tensor out(Shape{M, N});
  kern::mm_nt(ta.data.data(), tb.data.data(), out.data.data(), M, K, N);
  require_finite(out, "matmul_nt");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, b, M, K, N](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    std::vector<double> da(M * K);
    kern::mm_nn(g.data.data(), vb.data.data(), da.data(), M, N, K);
    t.accum(a, da.data(), da.size());
    std::vector<double> db(N * K, 0.0);
    kern::mm_tn_acc(g.data.data(), va.data.data(), db.data(), M, N, K);
    t.accum(b, db.data(), db.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::matmul_nn(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_shape(ta.rank() == 2 && tb.rank() == 2 && ta.shape[1] == tb.shape[0],
                "matmul_nn: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  const std::size_t M = ta.shape[0], K = ta.shape[1], N = tb.shape[1];
  Tensor out(Shape{M, N});
  kern::mm_nn(ta.data.data(), tb.data.data(), out.data.data(), M, K, N);
  require_finite(out, "matmul_nn");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, b, M, K, N](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    // da = g * b^T ; db = a^T * g
    std::vector<double> da(M * K);
    kern::mm_nt(g.data.data(), vb.data.data(), da.data(), M, N, K);
    t.accum(a, da.data(), da.size());
    std::vector<double> db(K * N, 0.0);
    kern::mm_tn_acc(va.data.data(), g.data.data(), db.data(), M, K, N);
    t.accum(b, db.data(), db.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::linear(Id W, Id b, Id x) {
  const Tensor& tw = val(W);
  const Tensor& tx = val(x);
  require_shape(tw.rank() == 2, "linear: weight must be rank 2, got " + shape_str(tw.shape));
  require_shape(tx.rank() >= 1 && tx.shape.back() == tw.shape[1],
                "linear: weight " + shape_str(tw.shape) + " vs input " + shape_str(tx.shape));
  const std::size_t in = tw.shape[1], outw = tw.shape[0];
  const std::size_t M = tx.size() / in;
  Shape out_shape = tx.shape;
  out_shape.back() = outw;
  Tensor out(out_shape);
  kern::mm_nt(tx.data.data(), tw.data.data(), out.data.data(), M, in, outw);
  if (b != kNone) {
    const Tensor& tb = val(b);
    require_shape(tb.rank() == 1 && tb.shape[0] == outw,
                  "linear: bias " + shape_str(tb.shape) + " vs width " + std::to_string(outw));
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t o = 0; o < outw; ++o) out.data[m * outw + o] += tb.data[o];
  }
  require_finite(out, "linear");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, W, b, x, M, in, outw](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vw = t.val(W);
    const Tensor& vx = t.val(x);
    std::vector<double> dx(M * in);
    kern::mm_nn(g.data.data(), vw.data.data(), dx.data(), M, outw, in);
    t.accum(x, dx.data(), dx.size());
    std::vector<double> dw(outw * in, 0.0);
    kern::mm_tn_acc(g.data.data(), vx.data.data(), dw.data(), M, outw, in);
    t.accum(W, dw.data(), dw.size());
    if (b != kNone) {
      std::vector<double> db(outw, 0.0);
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t o = 0; o < outw; ++o) db[o] += g.data[m * outw + o];
      t.accum(b, db.data(), db.size());
    }
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::gather_rows(Id table, std::vector<std::size_t> rows) {
  const Tensor& tt = val(table);
  require_shape(tt.rank() == 2, "gather_rows: table must be rank 2");
  const std::size_t d = tt.shape[1];
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= tt.shape[0]) throw std::out_of_range("gather_rows: row index");
    for (std::size_t c = 0; c < d; ++c) out.data[i * d + c] = tt.data[rows[i] * d + c];
  }
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, table, rows = std::move(rows), d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vt = t.val(table);
    std::vector<double> dt(vt.size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) dt[rows[i] * d + c] += g.data[i * d + c];
    t.accum(table, dt.data(), dt.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::concat_last(std::span<const Id> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: no parts");
  Shape lead = val(parts[0]).shape;
  lead.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (Id p : parts) {
    const Tensor& tp = val(p);
    Shape l = tp.shape;
    require_shape(!l.empty(), "concat_last: scalar part");
    std::size_t w = l.back();
    l.pop_back();
    require_shape(l == lead, "concat_last: leading shapes differ");
    widths.push_back(w);
    total += w;
  }
  const std::size_t M = numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& tp = val(parts[pi]);
    const std::size_t w = widths[pi];
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < w; ++c) out.data[m * total + off + c] = tp.data[m * w + c];
    off += w;
  }
  std::vector<Id> part_ids(parts.begin(), parts.end());
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, part_ids, widths, M, total](Tape& t) {
    const Tensor& g = t.node(id).grad;
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < part_ids.size(); ++pi) {
      const std::size_t w = widths[pi];
      std::vector<double> dp(M * w);
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t c = 0; c < w; ++c) dp[m * w + c] = g.data[m * total + off + c];
      t.accum(part_ids[pi], dp.data(), dp.size());
      off += w;
    }
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::chunk_last(Id x, std::size_t index, std::size_t chunks) {
  const Tensor& tx = val(x);
  require_shape(!tx.shape.empty() && tx.shape.back() % chunks == 0 && index < chunks,
                "chunk_last: " + shape_str(tx.shape) + " into " + std::to_string(chunks));
  const std::size_t w = tx.shape.back();
  const std::size_t cw = w / chunks;
  const std::size_t M = tx.size() / w;
  Shape out_shape = tx.shape;
  out_shape.back() = cw;
  Tensor out(out_shape);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < cw; ++c) out.data[m * cw + c] = tx.data[m * w + index * cw + c];
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, index, cw, w, M](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vx = t.val(x);
    std::vector<double> dx(vx.size(), 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < cw; ++c) dx[m * w + index * cw + c] = g.data[m * cw + c];
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::softmax(Id x, std::size_t axis) {
  const Tensor& tx = val(x);
  require_shape(axis < tx.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                                      shape_str(tx.shape));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= tx.shape[i];
  for (std::size_t i = axis + 1; i < tx.rank(); ++i) inner *= tx.shape[i];
  const std::size_t len = tx.shape[axis];
  Tensor out(tx.shape);
  kern::softmax(tx.data.data(), out.data.data(), outer, len, inner);
  require_finite(out, "softmax");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, outer, len, inner](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& y = *t.node(id).value;
    std::vector<double> dx(y.size());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l)
          dot += g.data[base + l * inner] * y.data[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t ix = base + l * inner;
          dx[ix] = y.data[ix] * (g.data[ix] - dot);
        }
      }
    }
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::gelu(Id x) {
  const Tensor& tx = val(x);
  Tensor out(tx.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = gelu_fwd(tx.data[i]);
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vx = t.val(x);
    std::vector<double> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g.data[i] * gelu_bwd(vx.data[i]);
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::sigmoid(Id x) {
  const Tensor& tx = val(x);
  Tensor out(tx.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = stable_sigmoid(tx.data[i]);
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& y = *t.node(id).value;
    std::vector<double> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      dx[i] = g.data[i] * y.data[i] * (1.0 - y.data[i]);
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::sum_all(Id x) {
  const Tensor& tx = val(x);
  double s = 0.0;
  for (double v : tx.data) s += v;
  Tensor out = Tensor::scalar(s);
  require_finite(out, "sum_all");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x](Tape& t) {
    const double g = t.node(id).grad.data[0];
    const Tensor& vx = t.val(x);
    std::vector<double> dx(vx.size(), g);
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::mean_rows(Id x) {
  const Tensor& tx = val(x);
  require_shape(tx.rank() == 2, "mean_rows: need rank 2, got " + shape_str(tx.shape));
  const std::size_t N = tx.shape[0], d = tx.shape[1];
  require_shape(N > 0, "mean_rows: empty input");
  Tensor out(Shape{d});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < d; ++c) out.data[c] += tx.data[i * d + c];
  const double inv = 1.0 / static_cast<double>(N);
  for (double& v : out.data) v *= inv;
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, N, d, inv](Tape& t) {
    const Tensor& g = t.node(id).grad;
    std::vector<double> dx(N * d);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < d; ++c) dx[i * d + c] = g.data[c] * inv;
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::rms_normalize(Id x) {
  const Tensor& tx = val(x);
  require_shape(tx.rank() == 1 && tx.size() > 0,
                "rms_normalize: need a vector, got " + shape_str(tx.shape));
  const std::size_t d = tx.size();
  double msq = 0.0;
  for (double v : tx.data) msq += v * v;
  msq /= static_cast<double>(d);
  const double s = 1.0 / std::sqrt(msq + 1e-8);
  Tensor out(tx.shape);
  for (std::size_t i = 0; i < d; ++i) out.data[i] = s * tx.data[i];
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, d, s](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vx = t.val(x);
    double gx = 0.0;
    for (std::size_t i = 0; i < d; ++i) gx += g.data[i] * vx.data[i];
    const double coef = s * s * s * gx / static_cast<double>(d);
    std::vector<double> dx(d);
    for (std::size_t i = 0; i < d; ++i) dx[i] = s * g.data[i] - coef * vx.data[i];
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::bcast_add_vec(Id x, Id v) {
  const Tensor& tx = val(x);
  const Tensor& tv = val(v);
  require_shape(tv.rank() == 1 && !tx.shape.empty() && tx.shape.back() == tv.shape[0],
                "bcast_add_vec: " + shape_str(tx.shape) + " vs " + shape_str(tv.shape));
  const std::size_t d = tv.shape[0];
  const std::size_t M = tx.size() / d;
  Tensor out(tx.shape);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < d; ++c) out.data[m * d + c] = tx.data[m * d + c] + tv.data[c];
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, v, M, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    t.accum(x, g.data.data(), g.size());
    std::vector<double> dv(d, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < d; ++c) dv[c] += g.data[m * d + c];
    t.accum(v, dv.data(), dv.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::bcast_mul_vec(Id x, Id v) {
  const Tensor& tx = val(x);
  const Tensor& tv = val(v);
  require_shape(tv.rank() == 1 && !tx.shape.empty() && tx.shape.back() == tv.shape[0],
                "bcast_mul_vec: " + shape_str(tx.shape) + " vs " + shape_str(tv.shape));
  const std::size_t d = tv.shape[0];
  const std::size_t M = tx.size() / d;
  Tensor out(tx.shape);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < d; ++c) out.data[m * d + c] = tx.data[m * d + c] * tv.data[c];
  require_finite(out, "bcast_mul_vec");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, v, M, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vx = t.val(x);
    const Tensor& vv = t.val(v);
    std::vector<double> dx(vx.size());
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < d; ++c) dx[m * d + c] = g.data[m * d + c] * vv.data[c];
    t.accum(x, dx.data(), dx.size());
    std::vector<double> dv(d, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < d; ++c) dv[c] += g.data[m * d + c] * vx.data[m * d + c];
    t.accum(v, dv.data(), dv.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::contract_last(Id x, Id w) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  require_shape(tw.rank() == 1 && !tx.shape.empty() && tx.shape.back() == tw.shape[0],
                "contract_last: " + shape_str(tx.shape) + " vs " + shape_str(tw.shape));
  const std::size_t d = tw.shape[0];
  const std::size_t M = tx.size() / d;
  Shape out_shape(tx.shape.begin(), tx.shape.end() - 1);
  Tensor out(out_shape);
  for (std::size_t m = 0; m < M; ++m) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += tx.data[m * d + c] * tw.data[c];
    out.data[m] = acc;
  }
  require_finite(out, "contract_last");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, w, M, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vx = t.val(x);
    const Tensor& vw = t.val(w);
    std::vector<double> dx(vx.size());
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < d; ++c) dx[m * d + c] = g.data[m] * vw.data[c];
    t.accum(x, dx.data(), dx.size());
    std::vector<double> dw(d, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < d; ++c) dw[c] += g.data[m] * vx.data[m * d + c];
    t.accum(w, dw.data(), dw.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::row_pair_dot(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_shape(ta.rank() == 2 && tb.rank() == 3 && tb.shape[0] == ta.shape[0] &&
                    tb.shape[1] == ta.shape[0] && tb.shape[2] == ta.shape[1],
                "row_pair_dot: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  const std::size_t n = ta.shape[0], d = ta.shape[1];
  Tensor out(Shape{n, n});
  kern::row_pair_dot(ta.data.data(), tb.data.data(), out.data.data(), n, d);
  require_finite(out, "row_pair_dot");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, a, b, n, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    std::vector<double> da(n * d, 0.0);
    kern::row_pair_dot_bwd_a(g.data.data(), vb.data.data(), da.data(), n, d);
    t.accum(a, da.data(), da.size());
    std::vector<double> db(n * n * d, 0.0);
    kern::row_pair_dot_bwd_b(g.data.data(), va.data.data(), db.data(), n, d);
    t.accum(b, db.data(), db.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::stack_last(std::span<const Id> parts) {
  if (parts.empty()) throw std::invalid_argument("stack_last: no parts");
  const Shape base = val(parts[0]).shape;
  for (Id p : parts)
    require_shape(val(p).shape == base, "stack_last: mismatched part shapes");
  const std::size_t H = parts.size();
  const std::size_t M = numel(base);
  Shape out_shape = base;
  out_shape.push_back(H);
  Tensor out(out_shape);
  for (std::size_t h = 0; h < H; ++h) {
    const Tensor& tp = val(parts[h]);
    for (std::size_t m = 0; m < M; ++m) out.data[m * H + h] = tp.data[m];
  }
  std::vector<Id> part_ids(parts.begin(), parts.end());
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, part_ids, M](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const std::size_t H = part_ids.size();
    std::vector<double> dp(M);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t m = 0; m < M; ++m) dp[m] = g.data[m * H + h];
      t.accum(part_ids[h], dp.data(), dp.size());
    }
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::symmetrize_pairs(Id e) {
  const Tensor& te = val(e);
  require_shape(te.rank() >= 2 && te.shape[0] == te.shape[1],
                "symmetrize_pairs: " + shape_str(te.shape));
  const std::size_t n = te.shape[0];
  const std::size_t d = te.size() / (n * n);
  Tensor out(te.shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c)
        out.data[(i * n + j) * d + c] =
            0.5 * (te.data[(i * n + j) * d + c] + te.data[(j * n + i) * d + c]);
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, e, n, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    std::vector<double> de(g.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c)
          de[(i * n + j) * d + c] =
              0.5 * (g.data[(i * n + j) * d + c] + g.data[(j * n + i) * d + c]);
    t.accum(e, de.data(), de.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::pair_concat(Id h, Id rel) {
  const Tensor& th = val(h);
  const Tensor& tr = val(rel);
  require_shape(th.rank() == 2 && tr.rank() == 3 && tr.shape[0] == th.shape[0] &&
                    tr.shape[1] == th.shape[0],
                "pair_concat: " + shape_str(th.shape) + " vs " + shape_str(tr.shape));
  const std::size_t n = th.shape[0], dh = th.shape[1], dr = tr.shape[2];
  const std::size_t dout = 2 * dh + dr;
  Tensor out(Shape{n, n, dout});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* o = out.data.data() + (i * n + j) * dout;
      for (std::size_t c = 0; c < dh; ++c) o[c] = th.data[i * dh + c];
      for (std::size_t c = 0; c < dh; ++c) o[dh + c] = th.data[j * dh + c];
      for (std::size_t c = 0; c < dr; ++c) o[2 * dh + c] = tr.data[(i * n + j) * dr + c];
    }
  }
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, h, rel, n, dh, dr](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const std::size_t dout = 2 * dh + dr;
    std::vector<double> dhv(n * dh, 0.0);
    std::vector<double> drv(n * n * dr, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* go = g.data.data() + (i * n + j) * dout;
        for (std::size_t c = 0; c < dh; ++c) dhv[i * dh + c] += go[c];
        for (std::size_t c = 0; c < dh; ++c) dhv[j * dh + c] += go[dh + c];
        for (std::size_t c = 0; c < dr; ++c) drv[(i * n + j) * dr + c] += go[2 * dh + c];
      }
    }
    t.accum(h, dhv.data(), dhv.size());
    t.accum(rel, drv.data(), drv.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::mask_diag(Id x, std::vector<double> diag_value) {
  const Tensor& tx = val(x);
  require_shape(tx.rank() == 3 && tx.shape[0] == tx.shape[1] &&
                    tx.shape[2] == diag_value.size(),
                "mask_diag: " + shape_str(tx.shape));
  const std::size_t n = tx.shape[0], k = tx.shape[2];
  Tensor out = tx;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) out.data[(i * n + i) * k + c] = diag_value[c];
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, x, n, k](Tape& t) {
    const Tensor& g = t.node(id).grad;
    std::vector<double> dx(g.data);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) dx[(i * n + i) * k + c] = 0.0;
    t.accum(x, dx.data(), dx.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::triplet_scores(Id q, Id k, Id b, double scale) {
  const Tensor& tq = val(q);
  const Tensor& tk = val(k);
  const Tensor& tb = val(b);
  require_shape(tq.rank() == 3 && tq.shape == tk.shape && tq.shape[0] == tq.shape[1] &&
                    tb.rank() == 2 && tb.shape[0] == tq.shape[0] && tb.shape[1] == tq.shape[0],
                "triplet_scores: q " + shape_str(tq.shape) + " k " + shape_str(tk.shape) +
                    " b " + shape_str(tb.shape));
  const std::size_t n = tq.shape[0], d = tq.shape[2];
  Tensor out(Shape{n, n, n});
  kern::triplet_scores(tq.data.data(), tk.data.data(), tb.data.data(), out.data.data(), n, d,
                       scale);
  require_finite(out, "triplet_scores");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, q, k, b, n, d, scale](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& vq = t.val(q);
    const Tensor& vk = t.val(k);
    std::vector<double> dq(n * n * d, 0.0);
    kern::triplet_scores_bwd_q(g.data.data(), vk.data.data(), dq.data(), n, d, scale);
    t.accum(q, dq.data(), dq.size());
    std::vector<double> dk(n * n * d, 0.0);
    kern::triplet_scores_bwd_k(g.data.data(), vq.data.data(), dk.data(), n, d, scale);
    t.accum(k, dk.data(), dk.size());
    std::vector<double> db(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t kk = 0; kk < n; ++kk) db[i * n + kk] += g.data[(i * n + j) * n + kk];
    t.accum(b, db.data(), db.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::triplet_mix(Id alpha, Id gate, Id v) {
  const Tensor& ta = val(alpha);
  const Tensor& tg = val(gate);
  const Tensor& tv = val(v);
  require_shape(ta.rank() == 3 && ta.shape[0] == ta.shape[1] && ta.shape[1] == ta.shape[2] &&
                    tg.rank() == 3 && tg.shape == tv.shape && tg.shape[0] == ta.shape[0] &&
                    tg.shape[1] == ta.shape[0],
                "triplet_mix: alpha " + shape_str(ta.shape) + " gate " + shape_str(tg.shape) +
                    " v " + shape_str(tv.shape));
  const std::size_t n = ta.shape[0], d = tg.shape[2];
  Tensor out(Shape{n, n, d});
  kern::triplet_mix(ta.data.data(), tg.data.data(), tv.data.data(), out.data.data(), n, d);
  require_finite(out, "triplet_mix");
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, alpha, gate, v, n, d](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& va = t.val(alpha);
    const Tensor& vg = t.val(gate);
    const Tensor& vv = t.val(v);
    std::vector<double> da(n * n * n, 0.0);
    kern::triplet_mix_bwd_a(g.data.data(), vg.data.data(), vv.data.data(), da.data(), n, d);
    t.accum(alpha, da.data(), da.size());
    std::vector<double> dg(n * n * d, 0.0);
    kern::triplet_mix_bwd_g(g.data.data(), va.data.data(), vv.data.data(), dg.data(), n, d);
    t.accum(gate, dg.data(), dg.size());
    std::vector<double> dv(n * n * d, 0.0);
    kern::triplet_mix_bwd_v(g.data.data(), va.data.data(), vg.data.data(), dv.data(), n, d);
    t.accum(v, dv.data(), dv.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::cross_entropy_pairs(Id logits, std::span<const std::uint8_t> target_classes) {
  const Tensor& tl = val(logits);
  require_shape(tl.rank() == 3 && tl.shape[0] == tl.shape[1],
                "cross_entropy_pairs: " + shape_str(tl.shape));
  const std::size_t n = tl.shape[0], k = tl.shape[2];
  require_shape(target_classes.size() == n * n, "cross_entropy_pairs: target size");
  const std::size_t pairs = n * (n - 1) / 2;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* l = tl.data.data() + (i * n + j) * k;
      double m = l[0];
      for (std::size_t c = 1; c < k; ++c) m = std::max(m, l[c]);
      double lse = 0.0;
      for (std::size_t c = 0; c < k; ++c) lse += std::exp(l[c] - m);
      lse = m + std::log(lse);
      loss += lse - l[target_classes[i * n + j]];
    }
  }
  if (pairs > 0) loss /= static_cast<double>(pairs);
  Tensor out = Tensor::scalar(loss);
  require_finite(out, "cross_entropy_pairs");
  std::vector<std::uint8_t> targets(target_classes.begin(), target_classes.end());
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, logits, targets = std::move(targets), n, k, pairs](Tape& t) {
    if (pairs == 0) return;
    const double g = t.node(id).grad.data[0] / static_cast<double>(pairs);
    const Tensor& vl = t.val(logits);
    std::vector<double> dl(vl.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double* l = vl.data.data() + (i * n + j) * k;
        double m = l[0];
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, l[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(l[c] - m);
        double* d = dl.data() + (i * n + j) * k;
        for (std::size_t c = 0; c < k; ++c) d[c] = g * std::exp(l[c] - m) / sum;
        d[targets[i * n + j]] -= g;
      }
    }
    t.accum(logits, dl.data(), dl.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::bce_with_logits(Id logits, std::span<const double> targets) {
  const Tensor& tl = val(logits);
  require_shape(tl.size() == targets.size(), "bce_with_logits: target size");
  const std::size_t L = tl.size();
  require_shape(L > 0, "bce_with_logits: empty");
  double loss = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double l = tl.data[i];
    loss += std::max(l, 0.0) - targets[i] * l + std::log1p(std::exp(-std::abs(l)));
  }
  loss /= static_cast<double>(L);
  Tensor out = Tensor::scalar(loss);
  require_finite(out, "bce_with_logits");
  std::vector<double> tgt(targets.begin(), targets.end());
  Id id = push(std::move(out), nullptr);
  node(id).back = [id, logits, tgt = std::move(tgt), L](Tape& t) {
    const double g = t.node(id).grad.data[0] / static_cast<double>(L);
    const Tensor& vl = t.val(logits);
    std::vector<double> dl(L);
    for (std::size_t i = 0; i < L; ++i) dl[i] = g * (stable_sigmoid(vl.data[i]) - tgt[i]);
    t.accum(logits, dl.data(), dl.size());
  };
  if (!grad_enabled_) node(id).back = nullptr;
  return id;
}

Tape::Id Tape::film(Id o, Id y, Id W1, Id W2) {
  Id a = linear(W1, kNone, y);
  Id b = linear(W2, kNone, y);
  const Tensor& to = val(o);
  const Tensor& ta = val(a);
  require_shape(!to.shape.empty() && to.shape.back() == ta.shape.back(),
                "film: modulation " + shape_str(ta.shape) + " does not broadcast to " +
                    shape_str(to.shape));
  return bcast_add_vec(add(bcast_mul_vec(o, a), o), b);
}

void Tape::backward(Id loss) {
  if (!grad_enabled_) throw std::logic_error("backward: gradients disabled on this tape");
  if (backward_done_)
    throw std::logic_error("backward: stale tape, call reset() before a second pass");
  const Tensor& tl = val(loss);
  require_shape(tl.size() == 1, "backward: loss must be scalar, got " + shape_str(tl.shape));
  backward_done_ = true;
  ensure_grad(loss);
  node(loss).grad.data[0] = 1.0;
  node(loss).touched = true;
  for (Id id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.touched && n.back) n.back(*this);
  }
  for (Node& n : nodes_) {
    if (n.bound && n.touched) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad.data[i] += n.grad.data[i];
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace mbgen
