#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ape/error.hpp"
#include "ape/rng.hpp"
#include "ape/tensor.hpp"

namespace ape {

// A trainable tensor. grad always mirrors value's shape; it is mutable so a
// frozen model can be shared by concurrent readers while backward still
// accumulates through const references.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  mutable Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> val) : name(std::move(n)), value(std::move(val)) {
    grad = Tensor<T>::zeros_like(value);
  }
  void zero_grad() { grad.fill(T(0)); }
};

struct Var {
  int id = -1;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. Every op records its output value (checked finite) and a
// closure that scatters the output gradient back to its inputs. backward()
// re-zeroes node gradients each call, so calling it twice without clearing
// parameter grads doubles them.
template <typename T>
class Tape {
 public:
  Var constant(Tensor<T> t) { return {push(std::move(t), nullptr, "constant")}; }

  Var zeros(std::size_t r, std::size_t c) {
    return {push(Tensor<T>::zeros(r, c), nullptr, "zeros")};
  }

  // Leases a parameter onto the tape; repeated use returns the same node so
  // gradients from every use accumulate together.
  Var use(const Parameter<T>& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return {it->second};
    Node node;
    node.param = &p;
    ensure_finite(p.value, "parameter");
    nodes_.push_back(std::move(node));
    int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return {id};
  }

  const Tensor<T>& val(Var x) const { return node_val(check(x)); }

  // ---- ops -----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor<T>&A = node_val(check(a)), &B = node_val(check(b));
    if (A.cols() != B.rows()) throw ShapeMismatch("matmul " + A.dims() + " * " + B.dims());
    Tensor<T> out = Tensor<T>::zeros(A.rows(), B.cols());
    gemm_acc(A, false, B, false, out);
    int ia = a.id, ib = b.id;
    return {push(std::move(out), [ia, ib](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              gemm_acc(g, false, t.node_val(ib), true, t.nodes_[ia].grad);
              gemm_acc(t.node_val(ia), true, g, false, t.nodes_[ib].grad);
            }, "matmul")};
  }

  // Same-dims elementwise add, or broadcast of a single row b over a's rows.
  Var add(Var a, Var b) {
    const Tensor<T>&A = node_val(check(a)), &B = node_val(check(b));
    int ia = a.id, ib = b.id;
    if (A.same_dims(B)) {
      Tensor<T> out = A;
      for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
      return {push(std::move(out), [ia, ib](Tape& t, int self) {
                const Tensor<T>& g = t.nodes_[self].grad;
                t.accumulate(ia, g);
                t.accumulate(ib, g);
              }, "add")};
    }
    if (B.rows() == 1 && B.cols() == A.cols()) {
      Tensor<T> out = A;
      for (std::size_t r = 0; r < out.rows(); ++r) {
        T* row = out.row_ptr(r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] += B.v[c];
      }
      return {push(std::move(out), [ia, ib](Tape& t, int self) {
                const Tensor<T>& g = t.nodes_[self].grad;
                t.accumulate(ia, g);
                Tensor<T>& gb = t.nodes_[ib].grad;
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  const T* row = g.row_ptr(r);
                  for (std::size_t c = 0; c < g.cols(); ++c) gb.v[c] += row[c];
                }
              }, "add")};
    }
    throw ShapeMismatch("add " + A.dims() + " + " + B.dims());
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&A = node_val(check(a)), &B = node_val(check(b));
    if (!A.same_dims(B)) throw ShapeMismatch("mul " + A.dims() + " * " + B.dims());
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
    int ia = a.id, ib = b.id;
    return {push(std::move(out), [ia, ib](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              const Tensor<T>&A2 = t.node_val(ia), &B2 = t.node_val(ib);
              Tensor<T>&ga = t.nodes_[ia].grad, &gb = t.nodes_[ib].grad;
              for (std::size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i] * B2.v[i];
                gb.v[i] += g.v[i] * A2.v[i];
              }
            }, "mul")};
  }

  Var scale(Var a, T s) {
    Tensor<T> out = node_val(check(a));
    for (auto& x : out.v) x *= s;
    int ia = a.id;
    return {push(std::move(out), [ia, s](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += s * g.v[i];
            }, "scale")};
  }

  Var tanh_op(Var a) {
    Tensor<T> out = node_val(check(a));
    for (auto& x : out.v) x = std::tanh(x);
    int ia = a.id;
    return {push(std::move(out), [ia](Tape& t, int self) {
              const Tensor<T>&g = t.nodes_[self].grad, &y = t.node_val(self);
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t i = 0; i < g.size(); ++i)
                ga.v[i] += g.v[i] * (T(1) - y.v[i] * y.v[i]);
            }, "tanh")};
  }

  Var sigmoid(Var a) {
    Tensor<T> out = node_val(check(a));
    for (auto& x : out.v) {
      if (x >= T(0)) {
        x = T(1) / (T(1) + std::exp(-x));
      } else {
        T e = std::exp(x);
        x = e / (T(1) + e);
      }
    }
    int ia = a.id;
    return {push(std::move(out), [ia](Tape& t, int self) {
              const Tensor<T>&g = t.nodes_[self].grad, &y = t.node_val(self);
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t i = 0; i < g.size(); ++i)
                ga.v[i] += g.v[i] * y.v[i] * (T(1) - y.v[i]);
            }, "sigmoid")};
  }

  Var concat_cols(Var a, Var b) {
    const Tensor<T>&A = node_val(check(a)), &B = node_val(check(b));
    if (A.rows() != B.rows()) throw ShapeMismatch("concat " + A.dims() + " ++ " + B.dims());
    Tensor<T> out = Tensor<T>::zeros(A.rows(), A.cols() + B.cols());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      T* dst = out.row_ptr(r);
      std::copy(A.row_ptr(r), A.row_ptr(r) + A.cols(), dst);
      std::copy(B.row_ptr(r), B.row_ptr(r) + B.cols(), dst + A.cols());
    }
    int ia = a.id, ib = b.id;
    std::size_t ac = A.cols(), bc = B.cols();
    return {push(std::move(out), [ia, ib, ac, bc](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>&ga = t.nodes_[ia].grad, &gb = t.nodes_[ib].grad;
              for (std::size_t r = 0; r < g.rows(); ++r) {
                const T* src = g.row_ptr(r);
                T* da = ga.row_ptr(r);
                T* db = gb.row_ptr(r);
                for (std::size_t c = 0; c < ac; ++c) da[c] += src[c];
                for (std::size_t c = 0; c < bc; ++c) db[c] += src[ac + c];
              }
            }, "concat")};
  }

  // Stack single-row vars into a matrix.
  Var stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw ShapeMismatch("stack of nothing");
    std::size_t cols = node_val(check(rows[0])).cols();
    Tensor<T> out = Tensor<T>::zeros(rows.size(), cols);
    std::vector<int> ids;
    ids.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor<T>& R = node_val(check(rows[r]));
      if (R.rows() != 1 || R.cols() != cols) throw ShapeMismatch("stack row " + R.dims());
      std::copy(R.v.begin(), R.v.end(), out.row_ptr(r));
      ids.push_back(rows[r].id);
    }
    return {push(std::move(out), [ids](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              for (std::size_t r = 0; r < ids.size(); ++r) {
                Tensor<T>& gr = t.nodes_[ids[r]].grad;
                const T* src = g.row_ptr(r);
                for (std::size_t c = 0; c < g.cols(); ++c) gr.v[c] += src[c];
              }
            }, "stack")};
  }

  Var slice_cols(Var a, std::size_t c0, std::size_t len) {
    const Tensor<T>& A = node_val(check(a));
    if (c0 + len > A.cols()) throw ShapeMismatch("slice past " + A.dims());
    Tensor<T> out = Tensor<T>::zeros(A.rows(), len);
    for (std::size_t r = 0; r < A.rows(); ++r)
      std::copy(A.row_ptr(r) + c0, A.row_ptr(r) + c0 + len, out.row_ptr(r));
    int ia = a.id;
    return {push(std::move(out), [ia, c0](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t r = 0; r < g.rows(); ++r) {
                const T* src = g.row_ptr(r);
                T* dst = ga.row_ptr(r) + c0;
                for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
              }
            }, "slice")};
  }

  Var row(Var a, std::size_t r) {
    const Tensor<T>& A = node_val(check(a));
    if (r >= A.rows()) throw ShapeMismatch("row " + std::to_string(r) + " of " + A.dims());
    Tensor<T> out({std::size_t(1), A.cols()},
                  std::vector<T>(A.row_ptr(r), A.row_ptr(r) + A.cols()));
    int ia = a.id;
    return {push(std::move(out), [ia, r](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              T* dst = t.nodes_[ia].grad.row_ptr(r);
              for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += g.v[c];
            }, "row")};
  }

  Var reshape(Var a, std::size_t r, std::size_t c) {
    const Tensor<T>& A = node_val(check(a));
    if (r * c != A.size()) throw ShapeMismatch("reshape " + A.dims());
    Tensor<T> out({r, c}, A.v);
    int ia = a.id;
    return {push(std::move(out), [ia](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
            }, "reshape")};
  }

  // Gather rows of an embedding table; backward scatters into the table.
  Var embedding(Var table, const std::vector<int>& ids) {
    const Tensor<T>& E = node_val(check(table));
    if (ids.empty()) throw EmptyInput("embedding of no ids");
    Tensor<T> out = Tensor<T>::zeros(ids.size(), E.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= E.rows())
        throw ShapeMismatch("embedding id " + std::to_string(ids[r]) + " outside table " +
                            E.dims());
      std::copy(E.row_ptr(static_cast<std::size_t>(ids[r])),
                E.row_ptr(static_cast<std::size_t>(ids[r])) + E.cols(), out.row_ptr(r));
    }
    int it = table.id;
    return {push(std::move(out), [it, ids](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& gt = t.nodes_[it].grad;
              for (std::size_t r = 0; r < ids.size(); ++r) {
                const T* src = g.row_ptr(r);
                T* dst = gt.row_ptr(static_cast<std::size_t>(ids[r]));
                for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
              }
            }, "embedding")};
  }

  // Inverted dropout: kept entries are scaled by 1/(1-p) at train time.
  Var dropout(Var a, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) throw Error("dropout probability must be in [0,1)");
    if (!train || p == 0.0) return a;
    const Tensor<T>& A = node_val(check(a));
    std::vector<T> mask(A.size());
    T keep = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask) m = rng.next_double() >= p ? keep : T(0);
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= mask[i];
    int ia = a.id;
    return {push(std::move(out), [ia, mask](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * mask[i];
            }, "dropout")};
  }

  // Max over k consecutive entries per output element.
  Var maxout(Var a, std::size_t k) {
    const Tensor<T>& A = node_val(check(a));
    if (k == 0 || A.cols() % k != 0)
      throw ShapeMismatch("maxout width " + std::to_string(A.cols()) + " not divisible by " +
                          std::to_string(k));
    std::size_t oc = A.cols() / k;
    Tensor<T> out = Tensor<T>::zeros(A.rows(), oc);
    std::vector<std::uint32_t> arg(A.rows() * oc);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const T* src = A.row_ptr(r);
      for (std::size_t c = 0; c < oc; ++c) {
        std::size_t base = c * k, best = 0;
        for (std::size_t x = 1; x < k; ++x)
          if (src[base + x] > src[base + best]) best = x;
        out.at(r, c) = src[base + best];
        arg[r * oc + c] = static_cast<std::uint32_t>(base + best);
      }
    }
    int ia = a.id;
    return {push(std::move(out), [ia, arg](Tape& t, int self) {
              const Tensor<T>& g = t.nodes_[self].grad;
              Tensor<T>& ga = t.nodes_[ia].grad;
              std::size_t oc = g.cols();
              for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < oc; ++c)
                  ga.at(r, arg[r * oc + c]) += g.at(r, c);
            }, "maxout")};
  }

  Var softmax(Var a) {
    Tensor<T> out = node_val(check(a));
    softmax_rows(out, false);
    int ia = a.id;
    return {push(std::move(out), [ia](Tape& t, int self) {
              const Tensor<T>&g = t.nodes_[self].grad, &y = t.node_val(self);
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t r = 0; r < g.rows(); ++r) {
                const T *gr = g.row_ptr(r), *yr = y.row_ptr(r);
                T dot = T(0);
                for (std::size_t c = 0; c < g.cols(); ++c) dot += gr[c] * yr[c];
                T* dst = ga.row_ptr(r);
                for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += yr[c] * (gr[c] - dot);
              }
            }, "softmax")};
  }

  Var log_softmax(Var a) {
    Tensor<T> out = node_val(check(a));
    softmax_rows(out, true);
    int ia = a.id;
    return {push(std::move(out), [ia](Tape& t, int self) {
              const Tensor<T>&g = t.nodes_[self].grad, &y = t.node_val(self);
              Tensor<T>& ga = t.nodes_[ia].grad;
              for (std::size_t r = 0; r < g.rows(); ++r) {
                const T *gr = g.row_ptr(r), *yr = y.row_ptr(r);
                T sum = T(0);
                for (std::size_t c = 0; c < g.cols(); ++c) sum += gr[c];
                T* dst = ga.row_ptr(r);
                for (std::size_t c = 0; c < g.cols(); ++c)
                  dst[c] += gr[c] - std::exp(yr[c]) * sum;
              }
            }, "log_softmax")};
  }

  // Mean negative log-likelihood over rows whose target is not ignore_index.
  // Fully ignored batches yield loss 0 and no gradient.
  Var cross_entropy(Var logp, const std::vector<int>& targets, int ignore_index) {
    const Tensor<T>& L = node_val(check(logp));
    if (targets.size() != L.rows())
      throw ShapeMismatch("cross_entropy targets " + std::to_string(targets.size()) + " vs " +
                          L.dims());
    std::size_t valid = 0;
    T sum = T(0);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (targets[r] == ignore_index) continue;
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= L.cols())
        throw ShapeMismatch("target id " + std::to_string(targets[r]) + " outside " + L.dims());
      sum -= L.at(r, static_cast<std::size_t>(targets[r]));
      ++valid;
    }
    Tensor<T> out({std::size_t(1), std::size_t(1)},
                  {valid ? sum / static_cast<T>(valid) : T(0)});
    int il = logp.id;
    return {push(std::move(out), [il, targets, ignore_index, valid](Tape& t, int self) {
              if (valid == 0) return;
              T g = t.nodes_[self].grad.v[0] / static_cast<T>(valid);
              Tensor<T>& gl = t.nodes_[il].grad;
              for (std::size_t r = 0; r < targets.size(); ++r)
                if (targets[r] != ignore_index)
                  gl.at(r, static_cast<std::size_t>(targets[r])) -= g;
            }, "cross_entropy")};
  }

  // ---- reverse pass ----------------------------------------------------------

  void backward(Var loss) {
    int lid = check(loss);
    if (node_val(lid).size() != 1) throw NotScalar("backward from " + node_val(lid).dims());
    for (int i = 0; i <= lid; ++i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      n.grad = Tensor<T>::zeros_like(node_val(i));
    }
    nodes_[static_cast<std::size_t>(lid)].grad.v[0] = T(1);
    for (int i = lid; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) n.back(*this, i);
    }
    for (const auto& [p, id] : param_ids_) {
      if (id > lid) continue;
      const Tensor<T>& g = nodes_[static_cast<std::size_t>(id)].grad;
      for (std::size_t i = 0; i < g.size(); ++i) p->grad.v[i] += g.v[i];
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;  // unused when param is set
    Tensor<T> grad;
    const Parameter<T>* param = nullptr;
    std::function<void(Tape&, int)> back;
  };

  int check(Var x) const {
    if (!x.ok() || static_cast<std::size_t>(x.id) >= nodes_.size())
      throw Error("var not on this tape");
    return x.id;
  }

  const Tensor<T>& node_val(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param ? n.param->value : n.value;
  }

  void accumulate(int id, const Tensor<T>& g) {
    Tensor<T>& dst = nodes_[static_cast<std::size_t>(id)].grad;
    for (std::size_t i = 0; i < g.size(); ++i) dst.v[i] += g.v[i];
  }

  static void softmax_rows(Tensor<T>& t, bool log_space) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      T* row = t.row_ptr(r);
      T mx = row[0];
      for (std::size_t c = 1; c < t.cols(); ++c) mx = std::max(mx, row[c]);
      T z = T(0);
      for (std::size_t c = 0; c < t.cols(); ++c) z += std::exp(row[c] - mx);
      if (log_space) {
        T lse = mx + std::log(z);
        for (std::size_t c = 0; c < t.cols(); ++c) row[c] -= lse;
      } else {
        for (std::size_t c = 0; c < t.cols(); ++c) row[c] = std::exp(row[c] - mx) / z;
      }
    }
  }

  static void ensure_finite(const Tensor<T>& t, const char* what) {
    for (T x : t.v)
      if (!std::isfinite(static_cast<double>(x)))
        throw NumericalError(std::string("non-finite value out of ") + what);
  }

  int push(Tensor<T> value, std::function<void(Tape&, int)> back, const char* what) {
    ensure_finite(value, what);
    Node node;
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_ids_;
};

}  // namespace ape
