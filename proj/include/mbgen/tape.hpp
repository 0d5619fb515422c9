#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mbgen/tensor.hpp"

namespace mbgen {

// Learnable tensor plus its gradient accumulator. Gradients persist across
// tapes until zero_grad(), so batches can accumulate item by item.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Owning registry of parameters. Iteration order is creation order, which
// fixes checkpoint layout and optimizer update order.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Tensor init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> by_name_;
};

// Reverse-mode differentiation tape. Ops append nodes; backward() runs the
// recorded closures in reverse and accumulates into bound Parameter.grad.
// One tape per training context; not thread-safe.
class Tape {
 public:
  using Id = std::int32_t;
  static constexpr Id kNone = -1;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Id input(Tensor t);
  Id input_view(const Tensor* t);  // borrowed; caller keeps it alive
  Id param(Parameter& p);

  const Tensor& val(Id id) const;
  Tensor& grad(Id id);

  Id add(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id matmul_nt(Id a, Id b);  // a[M,K] * b[N,K]^T -> [M,N]
  Id matmul_nn(Id a, Id b);  // a[M,K] * b[K,N] -> [M,N]
  // y = x W^T (+ b) applied over the last axis of x; W is [out,in].
  Id linear(Id W, Id b, Id x);
  Id gather_rows(Id table, std::vector<std::size_t> rows);
  Id concat_last(std::span<const Id> parts);
  Id chunk_last(Id x, std::size_t index, std::size_t chunks);
  Id softmax(Id x, std::size_t axis);
  Id gelu(Id x);
  Id sigmoid(Id x);
  Id sum_all(Id x);
  Id mean_rows(Id x);  // [N,d] -> [d]
  Id rms_normalize(Id x);  // x / sqrt(mean(x^2) + 1e-8), rank-1
  Id bcast_add_vec(Id x, Id v);
  Id bcast_mul_vec(Id x, Id v);
  Id contract_last(Id x, Id w);              // drop last axis by dot with w
  Id row_pair_dot(Id a, Id b);               // a[N,d], b[N,N,d] -> [N,N]
  Id stack_last(std::span<const Id> parts);  // H tensors of shape S -> S+[H]
  Id symmetrize_pairs(Id e);                 // (e_ij + e_ji)/2 over first two axes
  Id pair_concat(Id h, Id rel);              // h[n,dh], rel[n,n,dr] -> [n,n,2dh+dr]
  Id mask_diag(Id x, std::vector<double> diag_value);
  Id triplet_scores(Id q, Id k, Id b, double scale);
  Id triplet_mix(Id alpha, Id gate, Id v);
  // mean cross-entropy over unordered off-diagonal pairs i<j
  Id cross_entropy_pairs(Id logits, std::span<const std::uint8_t> target_classes);
  // mean binary cross-entropy per bit, targets in {0,1}
  Id bce_with_logits(Id logits, std::span<const double> targets);
  // yW2 + o*(yW1) + o, the projected condition broadcast over all positions
  Id film(Id o, Id y, Id W1, Id W2);

  void backward(Id loss);
  void reset();

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* value = nullptr;  // &owned, or external storage
    Tensor grad;
    bool grad_alloc = false;
    bool touched = false;  // some upstream gradient reached this node
    Parameter* bound = nullptr;
    std::function<void(Tape&)> back;
  };

  Id push(Tensor value, std::function<void(Tape&)> back);
  Node& node(Id id);
  const Node& node(Id id) const;
  void ensure_grad(Id id);
  void accum(Id id, const double* g, std::size_t len);

  // deque: node addresses stay valid while the tape grows (owned tensors are
  // pointed to by Node::value)
  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;

  friend struct TapeAccess;
};

}  // namespace mbgen
