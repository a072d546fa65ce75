#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ape/editops.hpp"
#include "ape/nn.hpp"
#include "ape/vocab.hpp"

namespace ape {

enum class AttentionMode { global, forced };
enum class Architecture { mono_source, chained };
enum class TargetMode { ops, words };

inline std::string to_string(AttentionMode m) { return m == AttentionMode::global ? "global" : "forced"; }
inline std::string to_string(Architecture a) { return a == Architecture::mono_source ? "mono_source" : "chained"; }
inline std::string to_string(TargetMode m) { return m == TargetMode::ops ? "ops" : "words"; }

inline AttentionMode attention_from_string(const std::string& s) {
  if (s == "global") return AttentionMode::global;
  if (s == "forced") return AttentionMode::forced;
  throw ParseError("unknown attention mode '" + s + "'");
}
inline Architecture architecture_from_string(const std::string& s) {
  if (s == "mono_source") return Architecture::mono_source;
  if (s == "chained") return Architecture::chained;
  throw ParseError("unknown architecture '" + s + "'");
}
inline TargetMode target_mode_from_string(const std::string& s) {
  if (s == "ops") return TargetMode::ops;
  if (s == "words") return TargetMode::words;
  throw ParseError("unknown target mode '" + s + "'");
}

struct ModelConfig {
  std::size_t cell_size = 128;
  std::size_t embedding_size = 128;
  std::size_t vocab_limit = 30000;
  AttentionMode attention = AttentionMode::forced;
  Architecture architecture = Architecture::mono_source;
  TargetMode target_mode = TargetMode::ops;
  std::size_t maxout_pieces = 2;
  double dropout_p = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    if (cell_size == 0 || embedding_size == 0 || maxout_pieces == 0)
      throw Error("model sizes must be positive");
    if (vocab_limit < 5) throw Error("vocab limit too small for reserved symbols");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw Error("dropout must be in [0,1)");
    if (attention == AttentionMode::forced && target_mode != TargetMode::ops)
      throw WrongMode("forced attention requires ops targets");
    if (architecture == Architecture::chained &&
        (attention != AttentionMode::forced || target_mode != TargetMode::ops))
      throw WrongMode("chained architecture fixes forced attention over ops");
  }
};

// ---- building blocks ---------------------------------------------------------

template <typename T>
struct AttentionParams {
  Parameter<T> W1, W2, b, v;

  void init(const std::string& prefix, std::size_t enc_width, std::size_t dec_width,
            std::size_t attn_dim, Rng& rng) {
    W1 = make_param<T>(prefix + ".W1", enc_width, attn_dim, rng);
    W2 = make_param<T>(prefix + ".W2", dec_width, attn_dim, rng);
    b = make_bias<T>(prefix + ".b", attn_dim);
    v = make_param<T>(prefix + ".v", attn_dim, 1, rng);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&W1);
    out.push_back(&W2);
    out.push_back(&b);
    out.push_back(&v);
  }
};

template <typename T>
struct FusionParams {
  Parameter<T> H1, H2, b;

  void init(const std::string& prefix, std::size_t width, Rng& rng) {
    H1 = make_param<T>(prefix + ".H1", width, width, rng);
    H2 = make_param<T>(prefix + ".H2", width, width, rng);
    b = make_bias<T>(prefix + ".b", width);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&H1);
    out.push_back(&H2);
    out.push_back(&b);
  }
};

template <typename T>
struct InitParams {
  Parameter<T> W, b;

  void init(const std::string& prefix, std::size_t hidden, Rng& rng) {
    W = make_param<T>(prefix + ".W", hidden, hidden, rng);
    b = make_bias<T>(prefix + ".b", hidden);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

template <typename T>
struct ReadoutParams {
  Parameter<T> Wm, bm, Wo, bo;
  std::size_t pieces = 2;

  void init(const std::string& prefix, std::size_t hidden, std::size_t k, std::size_t vocab,
            Rng& rng) {
    pieces = k;
    Wm = make_param<T>(prefix + ".Wm", hidden, k * hidden, rng);
    bm = make_bias<T>(prefix + ".bm", k * hidden);
    Wo = make_param<T>(prefix + ".Wo", hidden, vocab, rng);
    bo = make_bias<T>(prefix + ".bo", vocab);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&Wm);
    out.push_back(&bm);
    out.push_back(&Wo);
    out.push_back(&bo);
  }
};

// Encoder output: per-position states stacked as [len, 2*cell], forward and
// backward halves concatenated, plus the last forward state.
struct EncoderStates {
  Var matrix;
  Var last_forward;
  std::size_t length = 0;
};

template <typename T>
EncoderStates encode_bidir(Tape<T>& tape, const Parameter<T>& embed, const LstmParams<T>& fwd,
                           const LstmParams<T>& bwd, std::span<const int> ids) {
  if (ids.empty()) throw EmptyInput("encoder got an empty sentence");
  std::size_t A = ids.size(), H = fwd.hidden();
  Var emb = tape.embedding(tape.use(embed), std::vector<int>(ids.begin(), ids.end()));
  std::vector<Var> fh(A), bh(A);
  LstmState<T> s = lstm_initial(tape, 1, H);
  for (std::size_t i = 0; i < A; ++i) {
    s = lstm_step(tape, fwd, tape.row(emb, i), s);
    fh[i] = s.h;
  }
  Var last_forward = s.h;
  s = lstm_initial(tape, 1, H);
  for (std::size_t i = A; i-- > 0;) {
    s = lstm_step(tape, bwd, tape.row(emb, i), s);
    bh[i] = s.h;
  }
  std::vector<Var> rows(A);
  for (std::size_t i = 0; i < A; ++i) rows[i] = tape.concat_cols(fh[i], bh[i]);
  return {tape.stack_rows(rows), last_forward, A};
}

struct AttentionResult {
  Var context;
  Var weights;  // [1, len]
};

// score_i = v . tanh(W1 h_i + W2 s + b); weights = softmax(scores);
// context = weights . states
template <typename T>
AttentionResult global_attention(Tape<T>& tape, const AttentionParams<T>& p,
                                 const EncoderStates& enc, Var dec_state_h) {
  Var proj = tape.add(tape.matmul(enc.matrix, tape.use(p.W1)),
                      tape.add(tape.matmul(dec_state_h, tape.use(p.W2)), tape.use(p.b)));
  Var scores = tape.matmul(tape.tanh_op(proj), tape.use(p.v));  // [len, 1]
  Var weights = tape.softmax(tape.reshape(scores, 1, enc.length));
  return {tape.matmul(weights, enc.matrix), weights};
}

// The hard pointer: one past the number of consumed mt tokens in the prefix.
inline std::size_t forced_pointer(std::span<const EditOp> prefix) {
  std::size_t consumed = 0;
  for (const auto& op : prefix)
    if (op.kind == OpKind::keep || op.kind == OpKind::del) ++consumed;
  return consumed + 1;
}

inline std::size_t forced_pointer_ids(std::span<const int> prefix_ids) {
  std::size_t consumed = 0;
  for (int id : prefix_ids)
    if (id_consumes_mt(id)) ++consumed;
  return consumed + 1;
}

// Deterministic attention: the encoder state under the pointer, clamped to
// the final position once every mt token is consumed.
template <typename T>
Var forced_attention(Tape<T>& tape, const EncoderStates& enc, std::size_t pointer) {
  std::size_t i = std::min(pointer, enc.length);
  return tape.row(enc.matrix, i - 1);
}

// Fused context for the second decoder: tanh(H1 c + H2 h' + b).
template <typename T>
Var chained_context(Tape<T>& tape, const FusionParams<T>& p, Var translation_context,
                    Var mt_state) {
  return tape.tanh_op(tape.add(tape.add(tape.matmul(translation_context, tape.use(p.H1)),
                                        tape.matmul(mt_state, tape.use(p.H2))),
                               tape.use(p.b)));
}

// s0 = dropout(tanh(W last_forward + b)); cell starts at zero.
template <typename T>
LstmState<T> decoder_init(Tape<T>& tape, const InitParams<T>& p, Var last_forward,
                          double dropout_p, bool train, Rng& rng) {
  Var h0 = tape.dropout(tape.tanh_op(tape.add(tape.matmul(last_forward, tape.use(p.W)),
                                              tape.use(p.b))),
                        dropout_p, rng, train);
  return {h0, tape.zeros(1, p.W.value.rows())};
}

// LSTM advance on [prev embedding ++ context], maxout readout, vocab logits.
template <typename T>
Var decode_step(Tape<T>& tape, const LstmParams<T>& dec, const ReadoutParams<T>& ro,
                LstmState<T>& state, Var prev_embed, Var context) {
  state = lstm_step(tape, dec, tape.concat_cols(prev_embed, context), state);
  Var m = tape.maxout(tape.add(tape.matmul(state.h, tape.use(ro.Wm)), tape.use(ro.bm)), ro.pieces);
  return tape.add(tape.matmul(m, tape.use(ro.Wo)), tape.use(ro.bo));
}

// ---- single-source model -----------------------------------------------------

template <typename T>
struct MonoSourceModel {
  using scalar = T;

  ModelConfig cfg;
  Vocab input_vocab;
  Vocab target_vocab;

  Parameter<T> input_embed, target_embed;
  LstmParams<T> enc_fwd, enc_bwd, dec;
  InitParams<T> dec_init;
  std::optional<AttentionParams<T>> attn;
  ReadoutParams<T> readout;

  MonoSourceModel(ModelConfig config, Vocab input_v, Vocab target_v)
      : cfg(config), input_vocab(std::move(input_v)), target_vocab(std::move(target_v)) {
    cfg.architecture = Architecture::mono_source;
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(11);
    std::size_t H = cfg.cell_size, E = cfg.embedding_size;
    input_embed = make_param<T>("input_embed", input_vocab.size(), E, rng);
    target_embed = make_param<T>("target_embed", target_vocab.size(), E, rng);
    enc_fwd.init("enc_fwd", E, H, rng);
    enc_bwd.init("enc_bwd", E, H, rng);
    dec.init("dec", E + 2 * H, H, rng);
    dec_init.init("dec_init", H, rng);
    if (cfg.attention == AttentionMode::global) {
      attn.emplace();
      attn->init("attn", 2 * H, H, H, rng);
    }
    readout.init("readout", H, cfg.maxout_pieces, target_vocab.size(), rng);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.push_back(&input_embed);
    out.push_back(&target_embed);
    enc_fwd.collect(out);
    enc_bwd.collect(out);
    dec.collect(out);
    dec_init.collect(out);
    if (attn) attn->collect(out);
    readout.collect(out);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<MonoSourceModel&>(*this).parameters();
    return {ps.begin(), ps.end()};
  }
};

// Teacher-forced loss: mean cross-entropy over the target symbols. Targets
// must end with the eos id; in forced mode the pointer follows the gold
// prefix.
template <typename T>
Var forward_mono(Tape<T>& tape, const MonoSourceModel<T>& m, std::span<const int> input_ids,
                 std::span<const int> target_ids, bool train, Rng& rng) {
  if (target_ids.empty() || target_ids.back() != (m.cfg.target_mode == TargetMode::ops
                                                      ? kOpEosId
                                                      : kWordEosId))
    throw InvalidTarget("target must end with the end-of-sequence id");
  EncoderStates enc = encode_bidir(tape, m.input_embed, m.enc_fwd, m.enc_bwd, input_ids);
  LstmState<T> s = decoder_init(tape, m.dec_init, enc.last_forward, m.cfg.dropout_p, train, rng);
  Var target_table = tape.use(m.target_embed);
  int prev = m.cfg.target_mode == TargetMode::ops ? kPadId : kWordBosId;
  std::size_t pointer = 1;
  std::vector<Var> logit_rows;
  logit_rows.reserve(target_ids.size());
  for (std::size_t t = 0; t < target_ids.size(); ++t) {
    Var ctx = m.cfg.attention == AttentionMode::global
                  ? global_attention(tape, *m.attn, enc, s.h).context
                  : forced_attention(tape, enc, pointer);
    Var prev_emb = tape.embedding(target_table, {prev});
    logit_rows.push_back(decode_step(tape, m.dec, m.readout, s, prev_emb, ctx));
    int gold = target_ids[t];
    if (m.cfg.attention == AttentionMode::forced && id_consumes_mt(gold)) ++pointer;
    prev = gold;
  }
  Var logp = tape.log_softmax(tape.stack_rows(logit_rows));
  return tape.cross_entropy(logp, std::vector<int>(target_ids.begin(), target_ids.end()), kPadId);
}

// ---- chained dual-source model -------------------------------------------------

template <typename T>
struct ChainedModel {
  using scalar = T;

  ModelConfig cfg;
  Vocab src_vocab, mt_vocab, op_vocab;

  Parameter<T> src_embed;
  Parameter<T> mt_embed;  // shared: translation decoder input and mt encoder
  Parameter<T> op_embed;
  LstmParams<T> enc_src_fwd, enc_src_bwd, enc_mt_fwd, enc_mt_bwd;
  LstmParams<T> dec_translate, dec_ops;
  InitParams<T> init_translate, init_ops;
  AttentionParams<T> attn_src;
  FusionParams<T> fusion;
  ReadoutParams<T> readout_translate, readout_ops;

  ChainedModel(ModelConfig config, Vocab src_v, Vocab mt_v, Vocab op_v)
      : cfg(config),
        src_vocab(std::move(src_v)),
        mt_vocab(std::move(mt_v)),
        op_vocab(std::move(op_v)) {
    cfg.architecture = Architecture::chained;
    cfg.attention = AttentionMode::forced;
    cfg.target_mode = TargetMode::ops;
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(13);
    std::size_t H = cfg.cell_size, E = cfg.embedding_size;
    src_embed = make_param<T>("src_embed", src_vocab.size(), E, rng);
    mt_embed = make_param<T>("mt_embed", mt_vocab.size(), E, rng);
    op_embed = make_param<T>("op_embed", op_vocab.size(), E, rng);
    enc_src_fwd.init("enc_src_fwd", E, H, rng);
    enc_src_bwd.init("enc_src_bwd", E, H, rng);
    enc_mt_fwd.init("enc_mt_fwd", E, H, rng);
    enc_mt_bwd.init("enc_mt_bwd", E, H, rng);
    dec_translate.init("dec_translate", E + 2 * H, H, rng);
    dec_ops.init("dec_ops", E + 2 * H, H, rng);
    init_translate.init("init_translate", H, rng);
    init_ops.init("init_ops", H, rng);
    attn_src.init("attn_src", 2 * H, H, H, rng);
    fusion.init("fusion", 2 * H, rng);
    readout_translate.init("readout_translate", H, cfg.maxout_pieces, mt_vocab.size(), rng);
    readout_ops.init("readout_ops", H, cfg.maxout_pieces, op_vocab.size(), rng);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.push_back(&src_embed);
    out.push_back(&mt_embed);
    out.push_back(&op_embed);
    enc_src_fwd.collect(out);
    enc_src_bwd.collect(out);
    enc_mt_fwd.collect(out);
    enc_mt_bwd.collect(out);
    dec_translate.collect(out);
    dec_ops.collect(out);
    init_translate.collect(out);
    init_ops.collect(out);
    attn_src.collect(out);
    fusion.collect(out);
    readout_translate.collect(out);
    readout_ops.collect(out);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<ChainedModel&>(*this).parameters();
    return {ps.begin(), ps.end()};
  }
};

template <typename T>
struct ChainedLoss {
  Var total, translate, ape_ops;
};

// Pass 1 teacher-forces src -> mt with global attention and records the
// context under each mt position; pass 2 decodes the ops with the forced
// pointer over the mt encoder, fusing each state with its recorded context.
// The mt hypothesis is consumed as the pass-1 target at train and eval time
// alike. total is the plain sum of both losses.
template <typename T>
ChainedLoss<T> forward_chained(Tape<T>& tape, const ChainedModel<T>& m,
                               std::span<const int> src_ids, std::span<const int> mt_ids,
                               std::span<const int> op_ids, bool train, Rng& rng) {
  if (src_ids.empty()) throw MissingSource("chained forward needs a source sentence");
  if (mt_ids.empty()) throw EmptyInput("chained forward got an empty mt");
  if (op_ids.empty() || op_ids.back() != kOpEosId)
    throw InvalidTarget("op target must end with EOS");
  const std::size_t M = mt_ids.size();

  EncoderStates enc_src = encode_bidir(tape, m.src_embed, m.enc_src_fwd, m.enc_src_bwd, src_ids);
  LstmState<T> s1 =
      decoder_init(tape, m.init_translate, enc_src.last_forward, m.cfg.dropout_p, train, rng);
  Var mt_table = tape.use(m.mt_embed);
  std::vector<Var> contexts(M);
  std::vector<Var> logits1;
  logits1.reserve(M + 1);
  std::vector<int> targets1(mt_ids.begin(), mt_ids.end());
  targets1.push_back(kWordEosId);
  int prev_word = kWordBosId;
  for (std::size_t t = 0; t < targets1.size(); ++t) {
    AttentionResult att = global_attention(tape, m.attn_src, enc_src, s1.h);
    if (t < M) contexts[t] = att.context;
    Var prev_emb = tape.embedding(mt_table, {prev_word});
    logits1.push_back(decode_step(tape, m.dec_translate, m.readout_translate, s1, prev_emb,
                                  att.context));
    prev_word = targets1[t];
  }
  Var logp1 = tape.log_softmax(tape.stack_rows(logits1));
  Var loss_translate = tape.cross_entropy(logp1, targets1, kPadId);

  EncoderStates enc_mt = encode_bidir(tape, m.mt_embed, m.enc_mt_fwd, m.enc_mt_bwd, mt_ids);
  LstmState<T> s2 =
      decoder_init(tape, m.init_ops, enc_mt.last_forward, m.cfg.dropout_p, train, rng);
  Var op_table = tape.use(m.op_embed);
  int prev_op = kPadId;
  std::size_t pointer = 1;
  std::vector<Var> logits2;
  logits2.reserve(op_ids.size());
  for (std::size_t t = 0; t < op_ids.size(); ++t) {
    std::size_t i = std::min(pointer, M);
    Var ctx = chained_context(tape, m.fusion, contexts[i - 1], tape.row(enc_mt.matrix, i - 1));
    Var prev_emb = tape.embedding(op_table, {prev_op});
    logits2.push_back(decode_step(tape, m.dec_ops, m.readout_ops, s2, prev_emb, ctx));
    int gold = op_ids[t];
    if (id_consumes_mt(gold)) ++pointer;
    prev_op = gold;
  }
  Var logp2 = tape.log_softmax(tape.stack_rows(logits2));
  Var loss_ops =
      tape.cross_entropy(logp2, std::vector<int>(op_ids.begin(), op_ids.end()), kPadId);

  return {tape.add(loss_translate, loss_ops), loss_translate, loss_ops};
}

template <typename T>
using AnyModel = std::variant<MonoSourceModel<T>, ChainedModel<T>>;

}  // namespace ape
