#include "svb/kernels.hpp"

#include <atomic>

#ifdef SVB_HAVE_OPENMP
#include <omp.h>
#endif

namespace svb {

namespace {

std::atomic<int> g_threads{1};

void require_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix, got " + shape_string(t.shape()));
}

[[noreturn]] void inner_mismatch(const char* who, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(who) + ": inner dimensions disagree, " +
                   shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

void set_threads(int n) {
  g_threads.store(n < 1 ? 1 : n);
#ifdef SVB_HAVE_OPENMP
  omp_set_num_threads(g_threads.load());
#endif
}

int threads() { return g_threads.load(); }

bool parallel_enabled() {
#ifdef SVB_HAVE_OPENMP
  return g_threads.load() > 1;
#else
  return false;
#endif
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) inner_mismatch("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    const double* arow = pa + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) inner_mismatch("matmul_nt", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.dim(0) != b.dim(0)) inner_mismatch("matmul_tn", a, b);
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aki = pa[kk * m + i];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_matrix(a, "matvec");
  if (x.rank() != 1 || a.dim(1) != x.dim(0)) inner_mismatch("matvec", a, x);
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor y({m});
  const double* pa = a.data();
  const double* px = x.data();
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(static) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += arow[j] * px[j];
    y[i] = acc;
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor scale_rows(const Tensor& a, const std::vector<double>& d) {
  require_matrix(a, "scale_rows");
  if (d.size() != a.dim(0)) {
    throw ShapeError("scale_rows: " + std::to_string(d.size()) + " factors for " + shape_string(a.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(i, j) *= d[i];
  return out;
}

Tensor scale_cols(const Tensor& a, const std::vector<double>& d) {
  require_matrix(a, "scale_cols");
  if (d.size() != a.dim(1)) {
    throw ShapeError("scale_cols: " + std::to_string(d.size()) + " factors for " + shape_string(a.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(i, j) *= d[j];
  return out;
}

}  // namespace svb
