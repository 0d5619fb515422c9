// Times the serial reference kernels against the OpenMP dispatch path and
// checks that both produce bitwise-identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mbgen/kernels.hpp"
#include "mbgen/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

std::vector<double> random_vec(mbgen::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

struct Row {
  std::string name;
  double serial_ms;
  double par_ms;
  bool identical;
};

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);
  mbgen::Rng rng(1234);
  std::vector<Row> rows;

  {
    const std::size_t M = 256, K = 256, N = 256;
    auto a = random_vec(rng, M * K), b = random_vec(rng, N * K);
    std::vector<double> c1(M * N), c2(M * N);
    const double ts = time_ms([&] { mbgen::kern::serial::mm_nt(a.data(), b.data(), c1.data(), M, K, N); }, reps);
    mbgen::kern::set_backend(mbgen::kern::Backend::openmp);
    const double tp = time_ms([&] { mbgen::kern::mm_nt(a.data(), b.data(), c2.data(), M, K, N); }, reps);
    rows.push_back({"mm_nt 256^3", ts, tp, c1 == c2});
  }
  {
    const std::size_t n = 48, d = 32;
    auto q = random_vec(rng, n * n * d), k = random_vec(rng, n * n * d);
    auto b = random_vec(rng, n * n);
    std::vector<double> s1(n * n * n), s2(n * n * n);
    const double ts = time_ms(
        [&] { mbgen::kern::serial::triplet_scores(q.data(), k.data(), b.data(), s1.data(), n, d, 0.5); },
        reps);
    const double tp = time_ms(
        [&] { mbgen::kern::triplet_scores(q.data(), k.data(), b.data(), s2.data(), n, d, 0.5); },
        reps);
    rows.push_back({"triplet_scores n=48 d=32", ts, tp, s1 == s2});
  }
  {
    const std::size_t n = 48, d = 32;
    auto a = random_vec(rng, n * n * n), g = random_vec(rng, n * n * d),
         v = random_vec(rng, n * n * d);
    std::vector<double> z1(n * n * d), z2(n * n * d);
    const double ts = time_ms(
        [&] { mbgen::kern::serial::triplet_mix(a.data(), g.data(), v.data(), z1.data(), n, d); },
        reps);
    const double tp = time_ms(
        [&] { mbgen::kern::triplet_mix(a.data(), g.data(), v.data(), z2.data(), n, d); }, reps);
    rows.push_back({"triplet_mix n=48 d=32", ts, tp, z1 == z2});
  }
  {
    const std::size_t outer = 4096, len = 64;
    auto x = random_vec(rng, outer * len);
    std::vector<double> y1(outer * len), y2(outer * len);
    const double ts =
        time_ms([&] { mbgen::kern::serial::softmax(x.data(), y1.data(), outer, len, 1); }, reps);
    const double tp =
        time_ms([&] { mbgen::kern::softmax(x.data(), y2.data(), outer, len, 1); }, reps);
    rows.push_back({"softmax 4096x64", ts, tp, y1 == y2});
  }

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("threads: %d, reps: %d\n", threads, reps);
  std::printf("%-28s %12s %12s %9s %10s\n", "kernel", "serial ms", "openmp ms", "speedup",
              "bitwise");
  bool all_ok = true;
  for (const Row& r : rows) {
    std::printf("%-28s %12.3f %12.3f %8.2fx %10s\n", r.name.c_str(), r.serial_ms, r.par_ms,
                r.serial_ms / r.par_ms, r.identical ? "equal" : "DIFFER");
    all_ok = all_ok && r.identical;
  }
  return all_ok ? 0 : 1;
}
