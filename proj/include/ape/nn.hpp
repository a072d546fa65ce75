#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ape/rng.hpp"
#include "ape/tape.hpp"

namespace ape {

template <typename T>
void init_uniform(Tensor<T>& t, Rng& rng, double lo = -0.1, double hi = 0.1) {
  for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
Parameter<T> make_param(const std::string& name, std::size_t r, std::size_t c, Rng& rng) {
  Parameter<T> p(name, Tensor<T>::zeros(r, c));
  init_uniform(p.value, rng);
  return p;
}

template <typename T>
Parameter<T> make_bias(const std::string& name, std::size_t c) {
  return Parameter<T>(name, Tensor<T>::zeros(1, c));
}

// Gate layout in the fused projections: input, forget, candidate, output.
// Forget bias starts at 1 so memory is initially persistent.
template <typename T>
struct LstmParams {
  Parameter<T> Wx, Wh, b;

  void init(const std::string& prefix, std::size_t input_size, std::size_t hidden, Rng& rng) {
    Wx = make_param<T>(prefix + ".Wx", input_size, 4 * hidden, rng);
    Wh = make_param<T>(prefix + ".Wh", hidden, 4 * hidden, rng);
    b = make_bias<T>(prefix + ".b", 4 * hidden);
    for (std::size_t c = hidden; c < 2 * hidden; ++c) b.value.v[c] = T(1);
  }

  std::size_t hidden() const { return Wh.value.rows(); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&Wx);
    out.push_back(&Wh);
    out.push_back(&b);
  }
};

template <typename T>
struct LstmState {
  Var h, c;
};

template <typename T>
LstmState<T> lstm_initial(Tape<T>& tape, std::size_t batch, std::size_t hidden) {
  return {tape.zeros(batch, hidden), tape.zeros(batch, hidden)};
}

// One step over a [batch, input] row block. Rows are independent.
template <typename T>
LstmState<T> lstm_step(Tape<T>& tape, const LstmParams<T>& p, Var x, const LstmState<T>& prev) {
  std::size_t H = p.Wh.value.rows();
  Var pre = tape.add(tape.add(tape.matmul(x, tape.use(p.Wx)), tape.matmul(prev.h, tape.use(p.Wh))),
                     tape.use(p.b));
  Var i = tape.sigmoid(tape.slice_cols(pre, 0, H));
  Var f = tape.sigmoid(tape.slice_cols(pre, H, H));
  Var g = tape.tanh_op(tape.slice_cols(pre, 2 * H, H));
  Var o = tape.sigmoid(tape.slice_cols(pre, 3 * H, H));
  Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh_op(c));
  return {h, c};
}

// Plain SGD: p <- p - lr * grad, then grads reset.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, T lr) {
  for (Parameter<T>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value.v[i] -= lr * p->grad.v[i];
    p->zero_grad();
  }
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t entries_checked = 0;
  std::string worst;  // "param[idx]"
};

// Central finite differences against the tape's analytic gradients.
// `run(true)` must execute forward + backward (accumulating into param grads)
// and return the loss; `run(false)` must be a pure forward re-evaluation.
// Runs must be deterministic given parameter values. Large parameters are
// subsampled; small ones are checked entry by entry.
template <typename T>
GradCheckResult grad_check(const std::function<double(bool)>& run,
                           std::span<Parameter<T>* const> params, double step = 1e-5,
                           std::size_t sample_cap = 200, std::uint64_t seed = 0x5eed) {
  for (Parameter<T>* p : params) p->zero_grad();
  run(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<T>* p : params) {
    std::vector<double> g(p->grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(p->grad.v[i]);
    analytic.push_back(std::move(g));
  }
  GradCheckResult res;
  Rng rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>* p = params[pi];
    std::vector<std::size_t> entries(p->value.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (entries.size() > sample_cap) {
      rng.shuffle(entries);
      entries.resize(sample_cap);
    }
    for (std::size_t e : entries) {
      T orig = p->value.v[e];
      p->value.v[e] = orig + static_cast<T>(step);
      double up = run(false);
      p->value.v[e] = orig - static_cast<T>(step);
      double down = run(false);
      p->value.v[e] = orig;
      double numeric = (up - down) / (2.0 * step);
      double a = analytic[pi][e];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = p->name + "[" + std::to_string(e) + "]";
      }
      ++res.entries_checked;
    }
  }
  return res;
}

}  // namespace ape
