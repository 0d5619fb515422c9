#pragma once

#include <cstddef>

namespace mbgen::kern {

enum class Backend { serial, openmp };

void set_backend(Backend b);
Backend backend();
int max_threads();

// The serial namespace is the reference implementation; the dispatching
// functions below run the same per-element reductions, optionally spread over
// OpenMP threads. Parallelisation is always over independent output elements,
// so serial and parallel results are bitwise identical.
namespace serial {

// c[M,N] = a[M,K] * b[N,K]^T
void mm_nt(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N);
// c[M,N] = a[M,K] * b[K,N]
void mm_nn(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N);
// c[K,N] += a[M,K]^T * b[M,N]
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N);
// s[i,j,k] = scale * sum_d q[i,j,d]*kk[j,k,d] + b[i,k]
void triplet_scores(const double* q, const double* kk, const double* b, double* s,
                    std::size_t n, std::size_t d, double scale);
void triplet_scores_bwd_q(const double* ds, const double* kk, double* dq, std::size_t n,
                          std::size_t d, double scale);
void triplet_scores_bwd_k(const double* ds, const double* q, double* dk, std::size_t n,
                          std::size_t d, double scale);
// z[i,j,c] = sum_k a[i,j,k]*g[i,k,c]*v[j,k,c]
void triplet_mix(const double* a, const double* g, const double* v, double* z, std::size_t n,
                 std::size_t d);
void triplet_mix_bwd_a(const double* dz, const double* g, const double* v, double* da,
                       std::size_t n, std::size_t d);
void triplet_mix_bwd_g(const double* dz, const double* a, const double* v, double* dg,
                       std::size_t n, std::size_t d);
void triplet_mix_bwd_v(const double* dz, const double* a, const double* g, double* dv,
                       std::size_t n, std::size_t d);
// s[i,j] = sum_d a[i,d]*b[i,j,d]
void row_pair_dot(const double* a, const double* b, double* s, std::size_t n, std::size_t d);
void row_pair_dot_bwd_a(const double* ds, const double* b, double* da, std::size_t n,
                        std::size_t d);
void row_pair_dot_bwd_b(const double* ds, const double* a, double* db, std::size_t n,
                        std::size_t d);
// softmax over the middle axis of x viewed as [outer, len, inner];
// an all -inf slice yields the uniform distribution.
void softmax(const double* x, double* y, std::size_t outer, std::size_t len,
             std::size_t inner);

}  // namespace serial

void mm_nt(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N);
void mm_nn(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N);
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N);
void triplet_scores(const double* q, const double* kk, const double* b, double* s,
                    std::size_t n, std::size_t d, double scale);
void triplet_scores_bwd_q(const double* ds, const double* kk, double* dq, std::size_t n,
                          std::size_t d, double scale);
void triplet_scores_bwd_k(const double* ds, const double* q, double* dk, std::size_t n,
                          std::size_t d, double scale);
void triplet_mix(const double* a, const double* g, const double* v, double* z, std::size_t n,
                 std::size_t d);
void triplet_mix_bwd_a(const double* dz, const double* g, const double* v, double* da,
                       std::size_t n, std::size_t d);
void triplet_mix_bwd_g(const double* dz, const double* a, const double* v, double* dg,
                       std::size_t n, std::size_t d);
void triplet_mix_bwd_v(const double* dz, const double* a, const double* g, double* dv,
                       std::size_t n, std::size_t d);
void row_pair_dot(const double* a, const double* b, double* s, std::size_t n, std::size_t d);
void row_pair_dot_bwd_a(const double* ds, const double* b, double* da, std::size_t n,
                        std::size_t d);
void row_pair_dot_bwd_b(const double* ds, const double* a, double* db, std::size_t n,
                        std::size_t d);
void softmax(const double* x, double* y, std::size_t outer, std::size_t len,
             std::size_t inner);

}  // namespace mbgen::kern
