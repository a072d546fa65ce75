#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ape/error.hpp"

namespace ape {

// Dense row-major tensor of rank 1 or 2. A rank-1 tensor behaves as a single
// row wherever a matrix is expected.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> v;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<T> vals) : shape(std::move(s)), v(std::move(vals)) {
    std::size_t want = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeMismatch("zero dimension");
      want *= d;
    }
    if (shape.empty()) want = 0;
    if (want != v.size()) throw ShapeMismatch("shape/value count mismatch");
    if (shape.size() > 2) throw ShapeMismatch("rank > 2 unsupported");
  }

  static Tensor zeros(std::size_t r, std::size_t c) {
    return Tensor({r, c}, std::vector<T>(r * c, T(0)));
  }
  static Tensor zeros_like(const Tensor& o) {
    Tensor t;
    t.shape = o.shape;
    t.v.assign(o.v.size(), T(0));
    return t;
  }
  static Tensor vec(std::vector<T> vals) {
    std::size_t n = vals.size();
    return Tensor({n}, std::move(vals));
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return rank() <= 1 ? 1 : shape[0]; }
  std::size_t cols() const { return rank() == 0 ? 0 : shape[rank() - 1]; }
  std::size_t size() const { return v.size(); }

  T& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }
  T* row_ptr(std::size_t r) { return v.data() + r * cols(); }
  const T* row_ptr(std::size_t r) const { return v.data() + r * cols(); }

  bool same_dims(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  std::string dims() const {
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
  }
};

// C += op(A) * op(B); at most one side transposed.
template <typename T>
void gemm_acc(const Tensor<T>& A, bool tA, const Tensor<T>& B, bool tB, Tensor<T>& C) {
  const std::size_t M = tA ? A.cols() : A.rows();
  const std::size_t K = tA ? A.rows() : A.cols();
  const std::size_t K2 = tB ? B.cols() : B.rows();
  const std::size_t N = tB ? B.rows() : B.cols();
  if (K != K2 || C.rows() != M || C.cols() != N)
    throw ShapeMismatch("gemm " + A.dims() + (tA ? "^T" : "") + " * " + B.dims() +
                        (tB ? "^T" : "") + " -> " + C.dims());
  if (!tA && !tB) {
    for (std::size_t i = 0; i < M; ++i) {
      T* crow = C.row_ptr(i);
      for (std::size_t k = 0; k < K; ++k) {
        T a = A.at(i, k);
        if (a == T(0)) continue;
        const T* brow = B.row_ptr(k);
        for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else if (!tA && tB) {
    for (std::size_t i = 0; i < M; ++i) {
      const T* arow = A.row_ptr(i);
      T* crow = C.row_ptr(i);
      for (std::size_t j = 0; j < N; ++j) {
        const T* brow = B.row_ptr(j);
        T acc = T(0);
        for (std::size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
        crow[j] += acc;
      }
    }
  } else if (tA && !tB) {
    for (std::size_t k = 0; k < A.rows(); ++k) {
      const T* arow = A.row_ptr(k);
      const T* brow = B.row_ptr(k);
      for (std::size_t i = 0; i < M; ++i) {
        T a = arow[i];
        if (a == T(0)) continue;
        T* crow = C.row_ptr(i);
        for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else {
    throw ShapeMismatch("gemm with both sides transposed is unused");
  }
}

}  // namespace ape
