#pragma once

namespace anomap::nn {

/// C (M x N) = A (M x K) * B (K x N), all row-major and densely packed.
/// With `accumulate` the product is added to C. The reduction over K always
/// runs in ascending order, so results do not depend on blocking.
template <typename T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

/// dst (cols x rows) = transpose of src (rows x cols).
template <typename T>
void transpose(int rows, int cols, const T* src, T* dst);

}  // namespace anomap::nn
