#include "mbgen/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mbgen::kern {

namespace {
std::atomic<Backend> g_backend{Backend::openmp};

// below this many multiply-adds the fork/join overhead dominates
constexpr std::size_t kGrain = 1u << 15;

bool use_par(std::size_t work) {
#ifdef _OPENMP
  return g_backend.load(std::memory_order_relaxed) == Backend::openmp && work >= kGrain &&
         omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() { return g_backend.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void mm_nt(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      const double* ai = a + i * K;
      const double* bj = b + j * K;
      for (std::size_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
      c[i * N + j] = acc;
    }
  }
}

void mm_nn(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += a[i * K + k] * b[k * N + j];
      c[i * N + j] = acc;
    }
  }
}

void mm_tn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N) {
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < M; ++i) acc += a[i * K + k] * b[i * N + j];
      c[k * N + j] += acc;
    }
  }
}

void triplet_scores(const double* q, const double* kk, const double* b, double* s,
                    std::size_t n, std::size_t d, double scale) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* qij = q + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double* kjk = kk + (j * n + k) * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += qij[c] * kjk[c];
        s[(i * n + j) * n + k] = scale * acc + b[i * n + k];
      }
    }
  }
}

void triplet_scores_bwd_q(const double* ds, const double* kk, double* dq, std::size_t n,
                          std::size_t d, double scale) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* dqij = dq + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double g = scale * ds[(i * n + j) * n + k];
        const double* kjk = kk + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dqij[c] += g * kjk[c];
      }
    }
  }
}

void triplet_scores_bwd_k(const double* ds, const double* q, double* dk, std::size_t n,
                          std::size_t d, double scale) {
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dkjk = dk + (j * n + k) * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = scale * ds[(i * n + j) * n + k];
        const double* qij = q + (i * n + j) * d;
        for (std::size_t c = 0; c < d; ++c) dkjk[c] += g * qij[c];
      }
    }
  }
}

void triplet_mix(const double* a, const double* g, const double* v, double* z, std::size_t n,
                 std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* zij = z + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) zij[c] = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double aijk = a[(i * n + j) * n + k];
        const double* gik = g + (i * n + k) * d;
        const double* vjk = v + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) zij[c] += aijk * gik[c] * vjk[c];
      }
    }
  }
}

void triplet_mix_bwd_a(const double* dz, const double* g, const double* v, double* da,
                       std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* dzij = dz + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double* gik = g + (i * n + k) * d;
        const double* vjk = v + (j * n + k) * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += dzij[c] * gik[c] * vjk[c];
        da[(i * n + j) * n + k] += acc;
      }
    }
  }
}

void triplet_mix_bwd_g(const double* dz, const double* a, const double* v, double* dg,
                       std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dgik = dg + (i * n + k) * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double aijk = a[(i * n + j) * n + k];
        const double* dzij = dz + (i * n + j) * d;
        const double* vjk = v + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dgik[c] += aijk * dzij[c] * vjk[c];
      }
    }
  }
}

void triplet_mix_bwd_v(const double* dz, const double* a, const double* g, double* dv,
                       std::size_t n, std::size_t d) {
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dvjk = dv + (j * n + k) * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double aijk = a[(i * n + j) * n + k];
        const double* dzij = dz + (i * n + j) * d;
        const double* gik = g + (i * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dvjk[c] += aijk * dzij[c] * gik[c];
      }
    }
  }
}

void row_pair_dot(const double* a, const double* b, double* s, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bij = b + (i * n + j) * d;
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += ai[c] * bij[c];
      s[i * n + j] = acc;
    }
  }
}

void row_pair_dot_bwd_a(const double* ds, const double* b, double* da, std::size_t n,
                        std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    double* dai = da + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = ds[i * n + j];
      const double* bij = b + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) dai[c] += g * bij[c];
    }
  }
}

void row_pair_dot_bwd_b(const double* ds, const double* a, double* db, std::size_t n,
                        std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = ds[i * n + j];
      double* dbij = db + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) dbij[c] += g * ai[c];
    }
  }
}

void softmax(const double* x, double* y, std::size_t outer, std::size_t len,
             std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* xs = x + o * len * inner + in;
      double* ys = y + o * len * inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < len; ++l) m = std::max(m, xs[l * inner]);
      if (!std::isfinite(m)) {
        // fully masked slice: fall back to the uniform distribution
        const double u = 1.0 / static_cast<double>(len);
        for (std::size_t l = 0; l < len; ++l) ys[l * inner] = u;
        continue;
      }
      double sum = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(xs[l * inner] - m);
        ys[l * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t l = 0; l < len; ++l) ys[l * inner] *= inv;
    }
  }
}

}  // namespace serial

// Dispatchers: identical arithmetic, optionally split over threads by output
// row. With one thread or small work they call the serial reference directly.

void mm_nt(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N) {
  if (!use_par(M * N * K)) return serial::mm_nt(a, b, c, M, K, N);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(M); ++i) {
    serial::mm_nt(a + i * K, b, c + i * N, 1, K, N);
  }
#endif
}

void mm_nn(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
           std::size_t N) {
  if (!use_par(M * N * K)) return serial::mm_nn(a, b, c, M, K, N);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(M); ++i) {
    serial::mm_nn(a + i * K, b, c + i * N, 1, K, N);
  }
#endif
}

void mm_tn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N) {
  if (!use_par(M * N * K)) return serial::mm_tn_acc(a, b, c, M, K, N);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(K); ++k) {
    for (std::size_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < M; ++i) acc += a[i * K + k] * b[i * N + j];
      c[k * N + j] += acc;
    }
  }
#endif
}

void triplet_scores(const double* q, const double* kk, const double* b, double* s,
                    std::size_t n, std::size_t d, double scale) {
  if (!use_par(n * n * n * d)) return serial::triplet_scores(q, kk, b, s, n, d, scale);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* qij = q + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double* kjk = kk + (j * n + k) * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += qij[c] * kjk[c];
        s[(i * n + j) * n + k] = scale * acc + b[i * n + k];
      }
    }
  }
#endif
}

void triplet_scores_bwd_q(const double* ds, const double* kk, double* dq, std::size_t n,
                          std::size_t d, double scale) {
  if (!use_par(n * n * n * d)) return serial::triplet_scores_bwd_q(ds, kk, dq, n, d, scale);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* dqij = dq + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double g = scale * ds[(i * n + j) * n + k];
        const double* kjk = kk + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dqij[c] += g * kjk[c];
      }
    }
  }
#endif
}

void triplet_scores_bwd_k(const double* ds, const double* q, double* dk, std::size_t n,
                          std::size_t d, double scale) {
  if (!use_par(n * n * n * d)) return serial::triplet_scores_bwd_k(ds, q, dk, n, d, scale);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dkjk = dk + (j * n + k) * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = scale * ds[(i * n + j) * n + k];
        const double* qij = q + (i * n + j) * d;
        for (std::size_t c = 0; c < d; ++c) dkjk[c] += g * qij[c];
      }
    }
  }
#endif
}

void triplet_mix(const double* a, const double* g, const double* v, double* z, std::size_t n,
                 std::size_t d) {
  if (!use_par(n * n * n * d)) return serial::triplet_mix(a, g, v, z, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double* zij = z + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) zij[c] = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double aijk = a[(i * n + j) * n + k];
        const double* gik = g + (i * n + k) * d;
        const double* vjk = v + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) zij[c] += aijk * gik[c] * vjk[c];
      }
    }
  }
#endif
}

void triplet_mix_bwd_a(const double* dz, const double* g, const double* v, double* da,
                       std::size_t n, std::size_t d) {
  if (!use_par(n * n * n * d)) return serial::triplet_mix_bwd_a(dz, g, v, da, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* dzij = dz + (i * n + j) * d;
      for (std::size_t k = 0; k < n; ++k) {
        const double* gik = g + (i * n + k) * d;
        const double* vjk = v + (j * n + k) * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += dzij[c] * gik[c] * vjk[c];
        da[(i * n + j) * n + k] += acc;
      }
    }
  }
#endif
}

void triplet_mix_bwd_g(const double* dz, const double* a, const double* v, double* dg,
                       std::size_t n, std::size_t d) {
  if (!use_par(n * n * n * d)) return serial::triplet_mix_bwd_g(dz, a, v, dg, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dgik = dg + (i * n + k) * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double aijk = a[(i * n + j) * n + k];
        const double* dzij = dz + (i * n + j) * d;
        const double* vjk = v + (j * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dgik[c] += aijk * dzij[c] * vjk[c];
      }
    }
  }
#endif
}

void triplet_mix_bwd_v(const double* dz, const double* a, const double* g, double* dv,
                       std::size_t n, std::size_t d) {
  if (!use_par(n * n * n * d)) return serial::triplet_mix_bwd_v(dz, a, g, dv, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      double* dvjk = dv + (j * n + k) * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double aijk = a[(i * n + j) * n + k];
        const double* dzij = dz + (i * n + j) * d;
        const double* gik = g + (i * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) dvjk[c] += aijk * dzij[c] * gik[c];
      }
    }
  }
#endif
}

void row_pair_dot(const double* a, const double* b, double* s, std::size_t n, std::size_t d) {
  if (!use_par(n * n * d)) return serial::row_pair_dot(a, b, s, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const double* ai = a + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bij = b + (i * n + j) * d;
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += ai[c] * bij[c];
      s[i * n + j] = acc;
    }
  }
#endif
}

void row_pair_dot_bwd_a(const double* ds, const double* b, double* da, std::size_t n,
                        std::size_t d) {
  if (!use_par(n * n * d)) return serial::row_pair_dot_bwd_a(ds, b, da, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double* dai = da + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = ds[i * n + j];
      const double* bij = b + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) dai[c] += g * bij[c];
    }
  }
#endif
}

void row_pair_dot_bwd_b(const double* ds, const double* a, double* db, std::size_t n,
                        std::size_t d) {
  if (!use_par(n * n * d)) return serial::row_pair_dot_bwd_b(ds, a, db, n, d);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const double* ai = a + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = ds[i * n + j];
      double* dbij = db + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) dbij[c] += g * ai[c];
    }
  }
#endif
}

void softmax(const double* x, double* y, std::size_t outer, std::size_t len,
             std::size_t inner) {
  if (!use_par(outer * len * inner)) return serial::softmax(x, y, outer, len, inner);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < static_cast<std::int64_t>(outer); ++o) {
    serial::softmax(x + o * len * inner, y + o * len * inner, 1, len, inner);
  }
#endif
}

}  // namespace mbgen::kern
