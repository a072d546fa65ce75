#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "ape/checkpoint.hpp"
#include "ape/infer.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"

namespace ape {

struct TrainExample {
  std::vector<int> src_ids;     // chained models only; stays empty otherwise
  std::vector<int> input_ids;   // encoder input (the mt hypothesis for editing)
  std::vector<int> target_ids;  // supervision, ending with the eos id
};

struct DevExample {
  Sentence mt;
  Sentence pe;
  std::vector<int> src_ids;
  std::vector<int> input_ids;
};

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<std::vector<int>> src, input, target;
  std::vector<std::vector<int>> src_mask, input_mask, target_mask;
};

namespace detail {

inline void pad_field(const std::vector<std::vector<int>>& rows, std::vector<std::vector<int>>& out,
                      std::vector<std::vector<int>>& mask) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  out.clear();
  mask.clear();
  for (const auto& r : rows) {
    std::vector<int> padded(width, kPadId), m(width, 0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      padded[i] = r[i];
      m[i] = 1;
    }
    out.push_back(std::move(padded));
    mask.push_back(std::move(m));
  }
}

}  // namespace detail

// Shuffle the corpus and cut it into batches of at most batch_size examples.
// Each field is padded to the batch-local maximum with the pad id; masks are
// 1 on real positions. The final short batch is kept.
inline std::vector<Batch> make_batches(const std::vector<TrainExample>& corpus,
                                       std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw Error("batch size must be positive");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    std::size_t end = std::min(start + batch_size, order.size());
    std::vector<std::vector<int>> src, input, target;
    for (std::size_t k = start; k < end; ++k) {
      b.indices.push_back(order[k]);
      src.push_back(corpus[order[k]].src_ids);
      input.push_back(corpus[order[k]].input_ids);
      target.push_back(corpus[order[k]].target_ids);
    }
    detail::pad_field(src, b.src, b.src_mask);
    detail::pad_field(input, b.input, b.input_mask);
    detail::pad_field(target, b.target, b.target_mask);
    batches.push_back(std::move(b));
  }
  return batches;
}

enum class DecayInterval { per_epoch, per_half_epoch };

// Learning-rate decay keyed to how many examples have been consumed: each
// time the running total crosses an interval boundary the rate is multiplied
// by the decay factor once.
class LrSchedule {
 public:
  LrSchedule(double initial, double factor, DecayInterval kind, std::size_t corpus_size)
      : lr_(initial), factor_(factor) {
    if (corpus_size == 0) throw EmptyCorpus("schedule needs a nonempty corpus");
    interval_ = kind == DecayInterval::per_epoch ? corpus_size
                                                 : std::max<std::size_t>(1, corpus_size / 2);
    next_boundary_ = interval_;
  }

  void advance(std::size_t examples) {
    seen_ += examples;
    while (seen_ >= next_boundary_) {
      lr_ *= factor_;
      next_boundary_ += interval_;
    }
  }

  double lr() const { return lr_; }
  std::size_t examples_seen() const { return seen_; }
  std::size_t interval() const { return interval_; }

 private:
  double lr_;
  double factor_;
  std::size_t interval_ = 1;
  std::size_t next_boundary_ = 1;
  std::size_t seen_ = 0;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double initial_lr = 1.0;
  double decay_factor = 0.8;
  DecayInterval decay_interval = DecayInterval::per_epoch;
  std::size_t eval_every_steps = 200;
  std::size_t max_steps = 1000;
  std::size_t patience = 20;  // evals without a new best before stopping
  std::uint64_t seed = 1;
  bool use_shifts = true;
  std::string checkpoint_path;

  // settings used for human-corrected data
  static TrainConfig real_preset() {
    TrainConfig c;
    c.decay_factor = 0.8;
    c.decay_interval = DecayInterval::per_epoch;
    return c;
  }

  // settings used for generated data
  static TrainConfig synthetic_preset() {
    TrainConfig c;
    c.decay_factor = 0.5;
    c.decay_interval = DecayInterval::per_half_epoch;
    return c;
  }
};

struct LossRecord {
  std::size_t step;
  double lr;
  double loss;
};

struct ChainedLossRecord {
  std::size_t step;
  double total, translate, ape_ops;
};

struct EvalRecord {
  std::size_t step;
  double dev_ter;
  bool checkpointed;
};

struct TrainState {
  std::size_t step = 0;
  double lr = 0.0;
  double best_dev_ter = std::numeric_limits<double>::infinity();
  std::string best_checkpoint;
  std::vector<LossRecord> loss_history;
  std::vector<ChainedLossRecord> chained_losses;
  std::vector<EvalRecord> evals;
  bool stopped_early = false;
};

namespace detail {

template <typename T>
void check_ids(const std::vector<int>& ids, const Vocab& v, const char* field, std::size_t n) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v.size())
      throw VocabMismatch(std::string(field) + " id " + std::to_string(id) + " in example " +
                          std::to_string(n + 1) + " outside vocab of " + std::to_string(v.size()));
}

template <typename T>
void check_corpus(const MonoSourceModel<T>& m, const std::vector<TrainExample>& corpus) {
  int eos = m.cfg.target_mode == TargetMode::ops ? kOpEosId : kWordEosId;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const auto& ex = corpus[n];
    if (ex.input_ids.empty()) throw EmptyInput("example " + std::to_string(n + 1) + " has no input");
    if (ex.target_ids.empty() || ex.target_ids.back() != eos)
      throw InvalidTarget("example " + std::to_string(n + 1) + " target must end with eos");
    check_ids<T>(ex.input_ids, m.input_vocab, "input", n);
    check_ids<T>(ex.target_ids, m.target_vocab, "target", n);
  }
}

template <typename T>
void check_corpus(const ChainedModel<T>& m, const std::vector<TrainExample>& corpus) {
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const auto& ex = corpus[n];
    if (ex.src_ids.empty())
      throw MissingSource("example " + std::to_string(n + 1) + " has no source");
    if (ex.input_ids.empty()) throw EmptyInput("example " + std::to_string(n + 1) + " has no mt");
    if (ex.target_ids.empty() || ex.target_ids.back() != kOpEosId)
      throw InvalidTarget("example " + std::to_string(n + 1) + " target must end with EOS");
    check_ids<T>(ex.src_ids, m.src_vocab, "src", n);
    check_ids<T>(ex.input_ids, m.mt_vocab, "mt", n);
    check_ids<T>(ex.target_ids, m.op_vocab, "op", n);
  }
}

}  // namespace detail

// Greedy-decode the dev set and score it against the references. Ops models
// apply their script to the mt tokens; words models emit the hypothesis
// directly.
template <typename T>
double evaluate_dev(const MonoSourceModel<T>& m, const std::vector<DevExample>& dev,
                    bool use_shifts) {
  std::vector<std::pair<Sentence, Sentence>> pairs(dev.size());
  for (std::size_t n = 0; n < dev.size(); ++n) {
    pairs[n].first = m.cfg.target_mode == TargetMode::ops
                         ? apply_ops(dev[n].mt, decode_ops(m, dev[n].input_ids))
                         : decode_words(m, dev[n].input_ids);
    pairs[n].second = dev[n].pe;
  }
  return ter_corpus(pairs, use_shifts);
}

template <typename T>
double evaluate_dev(const ChainedModel<T>& m, const std::vector<DevExample>& dev,
                    bool use_shifts) {
  std::vector<std::pair<Sentence, Sentence>> pairs(dev.size());
  for (std::size_t n = 0; n < dev.size(); ++n) {
    pairs[n].first = apply_ops(dev[n].mt, decode_ops(m, dev[n].src_ids, dev[n].input_ids));
    pairs[n].second = dev[n].pe;
  }
  return ter_corpus(pairs, use_shifts);
}

// SGD over shuffled batches. The batch loss is the mean of the per-example
// losses; gradients accumulate example by example before the single update.
// Every eval_every_steps steps the dev set is decoded and scored, a strictly
// better score snapshots the model, and `patience` scoreless evals in a row
// stop training. Log rows are TSV: "train step lr loss" after each step and
// "eval step dev_ter checkpointed" after each eval.
template <typename Model>
TrainState train(Model& model, const std::vector<TrainExample>& corpus,
                 const std::vector<DevExample>& dev, const TrainConfig& tc,
                 std::ostream* log = nullptr) {
  using T = typename Model::scalar;
  constexpr bool kChained = std::is_same_v<Model, ChainedModel<T>>;
  if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
  detail::check_corpus(model, corpus);
  auto params = model.parameters();
  Rng rng(tc.seed);
  LrSchedule sched(tc.initial_lr, tc.decay_factor, tc.decay_interval, corpus.size());
  TrainState st;
  st.lr = sched.lr();
  std::size_t evals_since_best = 0;
  bool stop = false;
  while (!stop && st.step < tc.max_steps) {
    std::vector<Batch> batches = make_batches(corpus, tc.batch_size, rng);
    for (const Batch& batch : batches) {
      if (st.step >= tc.max_steps) break;
      const double inv_b = 1.0 / static_cast<double>(batch.indices.size());
      double batch_loss = 0.0, batch_translate = 0.0, batch_ape = 0.0;
      try {
        for (std::size_t idx : batch.indices) {
          const TrainExample& ex = corpus[idx];
          Tape<T> tape;
          Var loss;
          if constexpr (kChained) {
            ChainedLoss<T> l =
                forward_chained(tape, model, ex.src_ids, ex.input_ids, ex.target_ids, true, rng);
            loss = l.total;
            batch_translate += static_cast<double>(tape.val(l.translate).v[0]) * inv_b;
            batch_ape += static_cast<double>(tape.val(l.ape_ops).v[0]) * inv_b;
          } else {
            loss = forward_mono(tape, model, ex.input_ids, ex.target_ids, true, rng);
          }
          Var scaled = tape.scale(loss, static_cast<T>(inv_b));
          tape.backward(scaled);
          batch_loss += static_cast<double>(tape.val(scaled).v[0]);
        }
        sgd_step(std::span<Parameter<T>* const>(params.data(), params.size()),
                 static_cast<T>(sched.lr()));
      } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(st.step + 1) + ": " + e.what());
      }
      ++st.step;
      st.loss_history.push_back({st.step, sched.lr(), batch_loss});
      if constexpr (kChained)
        st.chained_losses.push_back({st.step, batch_loss, batch_translate, batch_ape});
      if (log) *log << "train\t" << st.step << "\t" << sched.lr() << "\t" << batch_loss << "\n";
      sched.advance(batch.indices.size());
      st.lr = sched.lr();
      if (tc.eval_every_steps > 0 && st.step % tc.eval_every_steps == 0 && !dev.empty()) {
        double ter;
        try {
          ter = evaluate_dev(model, dev, tc.use_shifts);
        } catch (const NumericalError& e) {
          throw NumericalError("step " + std::to_string(st.step) + ": " + e.what());
        }
        bool improved = ter < st.best_dev_ter;
        if (improved) {
          st.best_dev_ter = ter;
          evals_since_best = 0;
          if (!tc.checkpoint_path.empty()) {
            save_checkpoint(tc.checkpoint_path, model);
            st.best_checkpoint = tc.checkpoint_path;
          }
        } else if (++evals_since_best >= tc.patience) {
          stop = true;
          st.stopped_early = true;
        }
        st.evals.push_back({st.step, ter, improved});
        if (log)
          *log << "eval\t" << st.step << "\t" << ter << "\t" << (improved ? 1 : 0) << "\n";
        if (stop) break;
      }
    }
  }
  return st;
}

// Concatenate a large corpus with `factor` copies of a smaller one so the
// small set carries more weight per epoch.
template <typename E>
std::vector<E> oversample_concat(const std::vector<E>& large, const std::vector<E>& small,
                                 std::size_t factor) {
  std::vector<E> out = large;
  out.reserve(large.size() + factor * small.size());
  for (std::size_t k = 0; k < factor; ++k) out.insert(out.end(), small.begin(), small.end());
  return out;
}

// Target ids for an extracted script: encoded ops followed by the eos id.
inline std::vector<int> encode_target_ops(const EditScript& script, const Vocab& op_vocab) {
  std::vector<int> ids = encode_ops(script, op_vocab);
  ids.push_back(kOpEosId);
  return ids;
}

}  // namespace ape
