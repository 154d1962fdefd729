#include "msinet/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msinet::kernels {

void matmul_nn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      const double* arow = a + i * k;
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) {
        s += arow[kk] * brow[kk];
      }
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::fill(crow, crow + n, 0.0);
    for (int64_t kk = 0; kk < k; ++kk) {
      const double aki = a[kk * m + i];
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) {
        crow[j] += aki * brow[j];
      }
    }
  }
}

void matmul_serial(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) {
        s += a[i * k + kk] * b[kk * n + j];
      }
      c[i * n + j] = s;
    }
  }
}

void im2col(const double* x, int64_t n, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
            int64_t pw, double* cols) {
  const int64_t oh = (h + 2 * ph - kh) / sh + 1;
  const int64_t ow = (w + 2 * pw - kw) / sw + 1;
  const int64_t l = n * oh * ow;
  const int64_t rows = c * kh * kw;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t kj = r % kw;
    const int64_t ki = (r / kw) % kh;
    const int64_t ch = r / (kw * kh);
    double* out = cols + r * l;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* plane = x + (ni * c + ch) * h * w;
      for (int64_t oi = 0; oi < oh; ++oi) {
        const int64_t ih = oi * sh + ki - ph;
        const bool row_ok = ih >= 0 && ih < h;
        for (int64_t oj = 0; oj < ow; ++oj) {
          const int64_t iw = oj * sw + kj - pw;
          *out++ = (row_ok && iw >= 0 && iw < w) ? plane[ih * w + iw] : 0.0;
        }
      }
    }
  }
}

void col2im(const double* cols, int64_t n, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
            int64_t pw, double* dx) {
  const int64_t oh = (h + 2 * ph - kh) / sh + 1;
  const int64_t ow = (w + 2 * pw - kw) / sw + 1;
  const int64_t l = n * oh * ow;
  const int64_t rows = c * kh * kw;
  // Samples are disjoint in dx, so parallelising over n keeps every
  // accumulation order fixed.
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t kj = r % kw;
      const int64_t ki = (r / kw) % kh;
      const int64_t ch = r / (kw * kh);
      const double* src = cols + r * l + ni * oh * ow;
      double* plane = dx + (ni * c + ch) * h * w;
      for (int64_t oi = 0; oi < oh; ++oi) {
        const int64_t ih = oi * sh + ki - ph;
        if (ih < 0 || ih >= h) continue;
        for (int64_t oj = 0; oj < ow; ++oj) {
          const int64_t iw = oj * sw + kj - pw;
          if (iw < 0 || iw >= w) continue;
          plane[ih * w + iw] += src[oi * ow + oj];
        }
      }
    }
  }
}

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace msinet::kernels
