#include "anomap/nn/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace anomap::nn {

namespace {

constexpr int kRows = 4;
constexpr int kCols = 16;

// Register tile: 4 rows of C by 16 columns, accumulated over all of K.
template <typename T>
inline void tile(int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                 bool accumulate) {
  T acc[kRows][kCols];
  for (int r = 0; r < kRows; ++r) {
    for (int j = 0; j < kCols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T(0);
  }
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<long>(p) * ldb;
    const T a0 = a[p];
    const T a1 = a[lda + p];
    const T a2 = a[2 * lda + p];
    const T a3 = a[3 * lda + p];
    for (int j = 0; j < kCols; ++j) {
      const T bv = brow[j];
      acc[0][j] += a0 * bv;
      acc[1][j] += a1 * bv;
      acc[2][j] += a2 * bv;
      acc[3][j] += a3 * bv;
    }
  }
  for (int r = 0; r < kRows; ++r) {
    for (int j = 0; j < kCols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

// Leftover columns (fewer than kCols), one column at a time against R rows
// of A. Fixed R keeps the accumulators in registers.
template <int R, typename T>
inline void edge_rows(int cols, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
                      bool accumulate) {
  for (int j = 0; j < cols; ++j) {
    T acc[R];
    for (int r = 0; r < R; ++r) acc[r] = accumulate ? c[static_cast<long>(r) * ldc + j] : T(0);
    for (int p = 0; p < k; ++p) {
      const T bv = b[static_cast<long>(p) * ldb + j];
      for (int r = 0; r < R; ++r) acc[r] += a[static_cast<long>(r) * lda + p] * bv;
    }
    for (int r = 0; r < R; ++r) c[static_cast<long>(r) * ldc + j] = acc[r];
  }
}

template <typename T>
inline void edge(int rows, int cols, int k, const T* a, int lda, const T* b, int ldb, T* c,
                 int ldc, bool accumulate) {
  int r = 0;
  for (; r + 8 <= rows; r += 8) {
    edge_rows<8>(cols, k, a + static_cast<long>(r) * lda, lda, b, ldb,
                 c + static_cast<long>(r) * ldc, ldc, accumulate);
  }
  for (; r < rows; ++r) {
    edge_rows<1>(cols, k, a + static_cast<long>(r) * lda, lda, b, ldb,
                 c + static_cast<long>(r) * ldc, ldc, accumulate);
  }
}

// Leftover rows (fewer than kRows) across a wide C: row-wise axpy.
template <typename T>
inline void bottom(int rows, int cols, int k, const T* a, int lda, const T* b, int ldb, T* c,
                   int ldc, bool accumulate) {
  for (int r = 0; r < rows; ++r) {
    T* crow = c + static_cast<long>(r) * ldc;
    if (!accumulate) std::fill(crow, crow + cols, T(0));
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<long>(r) * lda + p];
      const T* brow = b + static_cast<long>(p) * ldb;
      for (int j = 0; j < cols; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<std::size_t>(m) * n);
    return;
  }
  const int m_full = m - m % kRows;
  const int n_full = n - n % kCols;
  if (n_full > 0) {
    for (int i = 0; i < m_full; i += kRows) {
      const T* arow = a + static_cast<long>(i) * k;
      T* crow = c + static_cast<long>(i) * n;
      for (int j = 0; j < n_full; j += kCols) {
        tile(k, arow, k, b + j, n, crow + j, n, accumulate);
      }
    }
    if (m_full < m) {
      bottom(m - m_full, n_full, k, a + static_cast<long>(m_full) * k, k, b, n,
             c + static_cast<long>(m_full) * n, n, accumulate);
    }
  }
  if (n_full < n) edge(m, n - n_full, k, a, k, b + n_full, n, c + n_full, n, accumulate);
}

template <typename T>
void transpose(int rows, int cols, const T* src, T* dst) {
  constexpr int kBlock = 32;
  for (int i0 = 0; i0 < rows; i0 += kBlock) {
    const int i1 = std::min(rows, i0 + kBlock);
    for (int j0 = 0; j0 < cols; j0 += kBlock) {
      const int j1 = std::min(cols, j0 + kBlock);
      for (int i = i0; i < i1; ++i) {
        for (int j = j0; j < j1; ++j) {
          dst[static_cast<long>(j) * rows + i] = src[static_cast<long>(i) * cols + j];
        }
      }
    }
  }
}

template void gemm<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm<double>(int, int, int, const double*, const double*, double*, bool);
template void transpose<float>(int, int, const float*, float*);
template void transpose<double>(int, int, const double*, double*);

}  // namespace anomap::nn
