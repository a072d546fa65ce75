#pragma once

#include <limits>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ape/model.hpp"

namespace ape {

struct DecodeConfig {
  std::size_t max_extra = 50;  // op budget beyond |mt| before Eos is forced
};

struct DecodeTrace {
  std::vector<std::size_t> pointers;
  std::vector<int> op_ids;
};

namespace detail {

// Greedy pick over raw logits with invalid ids pushed to -inf. First maximal
// entry wins ties.
inline int masked_argmax(std::vector<double>& logits, std::span<const int> banned) {
  for (int id : banned)
    if (id >= 0 && static_cast<std::size_t>(id) < logits.size())
      logits[static_cast<std::size_t>(id)] = -std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

template <typename T>
std::vector<double> logits_values(const Tape<T>& tape, Var logits) {
  const Tensor<T>& t = tape.val(logits);
  std::vector<double> out(t.v.size());
  for (std::size_t i = 0; i < t.v.size(); ++i) out[i] = static_cast<double>(t.v[i]);
  return out;
}

}  // namespace detail

// Greedy op decoding for the single-source editor. Keep and Del become
// invalid once the pointer passes the end of mt; Pad is never valid. After
// |mt| + max_extra ops without Eos the script is closed with a forced Eos.
template <typename T>
EditScript decode_ops(const MonoSourceModel<T>& m, std::span<const int> mt_ids,
                      const DecodeConfig& dc = {}, DecodeTrace* trace = nullptr) {
  if (m.cfg.target_mode != TargetMode::ops)
    throw WrongMode("op decoding needs an ops-mode model");
  Tape<T> tape;
  Rng rng(0);
  EncoderStates enc = encode_bidir(tape, m.input_embed, m.enc_fwd, m.enc_bwd, mt_ids);
  LstmState<T> s = decoder_init(tape, m.dec_init, enc.last_forward, 0.0, false, rng);
  Var table = tape.use(m.target_embed);
  const std::size_t M = mt_ids.size();
  const std::size_t limit = M + dc.max_extra;
  std::size_t pointer = 1;
  int prev = kPadId;
  EditScript script;
  for (std::size_t step = 0; step < limit; ++step) {
    Var ctx = m.cfg.attention == AttentionMode::global
                  ? global_attention(tape, *m.attn, enc, s.h).context
                  : forced_attention(tape, enc, pointer);
    Var prev_emb = tape.embedding(table, {prev});
    Var logits = decode_step(tape, m.dec, m.readout, s, prev_emb, ctx);
    std::vector<double> scores = detail::logits_values(tape, logits);
    std::vector<int> banned = {kPadId};
    if (pointer > M) {
      banned.push_back(kOpKeepId);
      banned.push_back(kOpDelId);
    }
    int id = detail::masked_argmax(scores, banned);
    if (trace) {
      trace->pointers.push_back(pointer);
      trace->op_ids.push_back(id);
    }
    script.push_back(op_from_id(id, m.target_vocab));
    if (id == kOpEosId) return script;
    if (id_consumes_mt(id)) ++pointer;
    prev = id;
  }
  script.push_back(EditOp::eos());
  if (trace) {
    trace->pointers.push_back(pointer);
    trace->op_ids.push_back(kOpEosId);
  }
  return script;
}

// Chained variant: the translation pass runs teacher-forced on the given mt
// so its contexts line up position-for-position with the mt encoder.
template <typename T>
EditScript decode_ops(const ChainedModel<T>& m, std::span<const int> src_ids,
                      std::span<const int> mt_ids, const DecodeConfig& dc = {},
                      DecodeTrace* trace = nullptr) {
  if (src_ids.empty()) throw MissingSource("chained decoding needs a source sentence");
  Tape<T> tape;
  Rng rng(0);
  const std::size_t M = mt_ids.size();

  EncoderStates enc_src = encode_bidir(tape, m.src_embed, m.enc_src_fwd, m.enc_src_bwd, src_ids);
  LstmState<T> s1 = decoder_init(tape, m.init_translate, enc_src.last_forward, 0.0, false, rng);
  Var mt_table = tape.use(m.mt_embed);
  std::vector<Var> contexts(M);
  int prev_word = kWordBosId;
  for (std::size_t t = 0; t < M; ++t) {
    AttentionResult att = global_attention(tape, m.attn_src, enc_src, s1.h);
    contexts[t] = att.context;
    Var prev_emb = tape.embedding(mt_table, {prev_word});
    decode_step(tape, m.dec_translate, m.readout_translate, s1, prev_emb, att.context);
    prev_word = mt_ids[t];
  }

  EncoderStates enc_mt = encode_bidir(tape, m.mt_embed, m.enc_mt_fwd, m.enc_mt_bwd, mt_ids);
  LstmState<T> s2 = decoder_init(tape, m.init_ops, enc_mt.last_forward, 0.0, false, rng);
  Var op_table = tape.use(m.op_embed);
  const std::size_t limit = M + dc.max_extra;
  std::size_t pointer = 1;
  int prev = kPadId;
  EditScript script;
  for (std::size_t step = 0; step < limit; ++step) {
    std::size_t i = std::min(pointer, M);
    Var ctx = chained_context(tape, m.fusion, contexts[i - 1], tape.row(enc_mt.matrix, i - 1));
    Var prev_emb = tape.embedding(op_table, {prev});
    Var logits = decode_step(tape, m.dec_ops, m.readout_ops, s2, prev_emb, ctx);
    std::vector<double> scores = detail::logits_values(tape, logits);
    std::vector<int> banned = {kPadId};
    if (pointer > M) {
      banned.push_back(kOpKeepId);
      banned.push_back(kOpDelId);
    }
    int id = detail::masked_argmax(scores, banned);
    if (trace) {
      trace->pointers.push_back(pointer);
      trace->op_ids.push_back(id);
    }
    script.push_back(op_from_id(id, m.op_vocab));
    if (id == kOpEosId) return script;
    if (id_consumes_mt(id)) ++pointer;
    prev = id;
  }
  script.push_back(EditOp::eos());
  if (trace) {
    trace->pointers.push_back(pointer);
    trace->op_ids.push_back(kOpEosId);
  }
  return script;
}

// Greedy word decoding for a words-mode model. Pad and Bos are never
// emitted; decoding stops at Eos or after max_len words.
template <typename T>
Sentence decode_words(const MonoSourceModel<T>& m, std::span<const int> input_ids,
                      std::size_t max_len = 80) {
  if (m.cfg.target_mode != TargetMode::words)
    throw WrongMode("word decoding needs a words-mode model");
  Tape<T> tape;
  Rng rng(0);
  EncoderStates enc = encode_bidir(tape, m.input_embed, m.enc_fwd, m.enc_bwd, input_ids);
  LstmState<T> s = decoder_init(tape, m.dec_init, enc.last_forward, 0.0, false, rng);
  Var table = tape.use(m.target_embed);
  int prev = kWordBosId;
  Sentence out;
  for (std::size_t step = 0; step < max_len; ++step) {
    // words mode always pairs with global attention (validate() enforces it)
    Var ctx = global_attention(tape, *m.attn, enc, s.h).context;
    Var prev_emb = tape.embedding(table, {prev});
    Var logits = decode_step(tape, m.dec, m.readout, s, prev_emb, ctx);
    std::vector<double> scores = detail::logits_values(tape, logits);
    std::vector<int> banned = {kPadId, kWordBosId};
    int id = detail::masked_argmax(scores, banned);
    if (id == kWordEosId) break;
    out.push_back(id == m.target_vocab.unk_id() ? Token("UNK") : m.target_vocab.token(id));
    prev = id;
  }
  return out;
}

// Chunked index parallelism; threads <= 1 degenerates to a plain loop. The
// body must only touch its own index's slots.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::size_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Post-edit a corpus of mt sentences (with sources for the chained model).
// A sentence that cannot be edited passes through unchanged and the reason
// is recorded; output order matches input order regardless of thread count.
struct PostEditResult {
  std::vector<Sentence> outputs;
  std::vector<std::pair<std::size_t, std::string>> failures;
};

template <typename T>
PostEditResult post_edit_corpus(const AnyModel<T>& model, const std::vector<Sentence>& mt,
                                const std::vector<Sentence>* src = nullptr,
                                const DecodeConfig& dc = {}, std::size_t threads = 1) {
  PostEditResult res;
  res.outputs.resize(mt.size());
  std::vector<std::string> errors(mt.size());
  parallel_for(mt.size(), threads, [&](std::size_t n) {
    try {
      if (std::holds_alternative<MonoSourceModel<T>>(model)) {
        const auto& m = std::get<MonoSourceModel<T>>(model);
        std::vector<int> mt_ids = m.input_vocab.encode(mt[n]);
        EditScript script = decode_ops(m, mt_ids, dc);
        res.outputs[n] = apply_ops(mt[n], script);
      } else {
        const auto& m = std::get<ChainedModel<T>>(model);
        if (src == nullptr || n >= src->size())
          throw MissingSource("no source for sentence " + std::to_string(n + 1));
        std::vector<int> src_ids = m.src_vocab.encode((*src)[n]);
        std::vector<int> mt_ids = m.mt_vocab.encode(mt[n]);
        EditScript script = decode_ops(m, src_ids, mt_ids, dc);
        res.outputs[n] = apply_ops(mt[n], script);
      }
    } catch (const Error& e) {
      res.outputs[n] = mt[n];
      errors[n] = e.what();
    }
  });
  for (std::size_t n = 0; n < errors.size(); ++n)
    if (!errors[n].empty()) res.failures.emplace_back(n, errors[n]);
  return res;
}

}  // namespace ape
