#include <string>
#include <vector>

#include "ape/infer.hpp"
#include "ape/rng.hpp"
#include "doctest.h"

using namespace ape;

namespace {

Vocab word_vocab() {
  return Vocab::from_ordered({"<pad>", "<unk>", "<bos>", "<eos>", "alpha", "beta", "gamma"},
                             kWordUnkId);
}

Vocab op_vocab() {
  return Vocab::from_ordered({"PAD", "KEEP", "DEL", "EOS", "INS|UNK", "INS|alpha", "INS|beta"},
                             kOpInsUnkId);
}

ModelConfig tiny_cfg(Architecture arch, AttentionMode att, TargetMode tm, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.cell_size = 3;
  cfg.embedding_size = 3;
  cfg.maxout_pieces = 2;
  cfg.dropout_p = 0.0;
  cfg.seed = seed;
  cfg.architecture = arch;
  cfg.attention = att;
  cfg.target_mode = tm;
  return cfg;
}

// every decoded script obeys: pointer trace = 1 + consumed prefix, no Pad,
// no Keep/Del past the end of mt, terminal Eos, and it applies cleanly
void check_decode_laws(const Sentence& mt, const EditScript& script, const DecodeTrace& trace,
                       std::size_t max_extra) {
  REQUIRE(trace.pointers.size() == trace.op_ids.size());
  REQUIRE(script.size() == trace.op_ids.size());
  CHECK(script.size() <= mt.size() + max_extra + 1);
  std::size_t consumed = 0;
  for (std::size_t t = 0; t < trace.op_ids.size(); ++t) {
    CHECK(trace.pointers[t] == consumed + 1);
    int id = trace.op_ids[t];
    CHECK(id != kPadId);
    if (trace.pointers[t] > mt.size()) {
      CHECK(id != kOpKeepId);
      CHECK(id != kOpDelId);
    }
    if (id_consumes_mt(id)) ++consumed;
  }
  CHECK(consumed <= mt.size());
  CHECK(script.back().kind == OpKind::eos);
  CHECK_NOTHROW(apply_ops(mt, script));
}

}  // namespace

TEST_CASE("greedy op decoding keeps its pointer lawful across random models") {
  Vocab wv = word_vocab(), ov = op_vocab();
  Rng fuzz(314);
  for (int iter = 0; iter < 60; ++iter) {
    bool global = fuzz.below(2) == 0;
    MonoSourceModel<double> m(
        tiny_cfg(Architecture::mono_source,
                 global ? AttentionMode::global : AttentionMode::forced, TargetMode::ops,
                 fuzz.next_u64()),
        wv, ov);
    std::size_t len = 1 + fuzz.below(6);
    Sentence mt;
    std::vector<int> mt_ids;
    for (std::size_t i = 0; i < len; ++i) {
      int id = 4 + static_cast<int>(fuzz.below(3));
      mt_ids.push_back(id);
      mt.push_back(wv.token(id));
    }
    DecodeConfig dc;
    dc.max_extra = 5;
    DecodeTrace trace;
    EditScript script = decode_ops(m, mt_ids, dc, &trace);
    check_decode_laws(mt, script, trace, dc.max_extra);

    // decoding is deterministic
    EditScript again = decode_ops(m, mt_ids, dc);
    CHECK(format_script(script) == format_script(again));
  }
}

TEST_CASE("chained decoding obeys the same laws") {
  Vocab wv = word_vocab(), ov = op_vocab();
  Rng fuzz(2718);
  for (int iter = 0; iter < 40; ++iter) {
    ChainedModel<double> m(
        tiny_cfg(Architecture::chained, AttentionMode::forced, TargetMode::ops, fuzz.next_u64()),
        wv, wv, ov);
    std::size_t slen = 1 + fuzz.below(5), mlen = 1 + fuzz.below(6);
    std::vector<int> src_ids, mt_ids;
    Sentence mt;
    for (std::size_t i = 0; i < slen; ++i) src_ids.push_back(4 + static_cast<int>(fuzz.below(3)));
    for (std::size_t i = 0; i < mlen; ++i) {
      int id = 4 + static_cast<int>(fuzz.below(3));
      mt_ids.push_back(id);
      mt.push_back(wv.token(id));
    }
    DecodeConfig dc;
    dc.max_extra = 5;
    DecodeTrace trace;
    EditScript script = decode_ops(m, src_ids, mt_ids, dc, &trace);
    check_decode_laws(mt, script, trace, dc.max_extra);
  }

  ChainedModel<double> m(
      tiny_cfg(Architecture::chained, AttentionMode::forced, TargetMode::ops, 1), wv, wv, ov);
  CHECK_THROWS_AS(decode_ops(m, std::vector<int>{}, std::vector<int>{4}), MissingSource);
}

TEST_CASE("the op budget forces a terminal Eos") {
  Vocab wv = word_vocab(), ov = op_vocab();
  MonoSourceModel<double> m(
      tiny_cfg(Architecture::mono_source, AttentionMode::forced, TargetMode::ops, 3), wv, ov);
  // rig the readout: Eos unreachable, unknown-word insertion irresistible
  m.readout.bo.value.v[kOpEosId] = -1e9;
  m.readout.bo.value.v[kOpInsUnkId] = 100.0;

  std::vector<int> mt_ids = {4, 5};
  Sentence mt = {"alpha", "beta"};
  DecodeConfig dc;
  dc.max_extra = 3;
  DecodeTrace trace;
  EditScript script = decode_ops(m, mt_ids, dc, &trace);
  CHECK(script.size() == mt_ids.size() + dc.max_extra + 1);
  CHECK(script.back().kind == OpKind::eos);
  for (std::size_t i = 0; i + 1 < script.size(); ++i) CHECK(script[i].kind == OpKind::ins);
  check_decode_laws(mt, script, trace, dc.max_extra);
  // unconsumed mt tokens survive through the implicit keep tail
  Sentence out = apply_ops(mt, script);
  CHECK(out.size() == mt.size() + dc.max_extra + mt_ids.size());
}

TEST_CASE("mode guards reject the wrong decoder") {
  Vocab wv = word_vocab(), ov = op_vocab();
  MonoSourceModel<double> ops_m(
      tiny_cfg(Architecture::mono_source, AttentionMode::forced, TargetMode::ops, 1), wv, ov);
  MonoSourceModel<double> words_m(
      tiny_cfg(Architecture::mono_source, AttentionMode::global, TargetMode::words, 1), wv, wv);
  std::vector<int> ids = {4, 5};
  CHECK_THROWS_AS(decode_ops(words_m, ids), WrongMode);
  CHECK_THROWS_AS(decode_words(ops_m, ids), WrongMode);
}

TEST_CASE("word decoding stops at Eos and never emits reserved surfaces") {
  Vocab wv = word_vocab();
  MonoSourceModel<double> m(
      tiny_cfg(Architecture::mono_source, AttentionMode::global, TargetMode::words, 9), wv, wv);

  // immediate Eos gives an empty sentence
  m.readout.bo.value.v[kWordEosId] = 100.0;
  CHECK(decode_words(m, std::vector<int>{4, 5}).empty());

  // unknown-word wins every step: the surface is the UNK placeholder and
  // the length cap is the only stop
  m.readout.bo.value.v[kWordEosId] = -1e9;
  m.readout.bo.value.v[kWordUnkId] = 100.0;
  Sentence out = decode_words(m, std::vector<int>{4, 5}, 7);
  CHECK(out.size() == 7);
  for (const auto& tok : out) CHECK(tok == "UNK");

  // random models never surface pad or bos markers
  Rng fuzz(99);
  for (int iter = 0; iter < 20; ++iter) {
    MonoSourceModel<double> r(
        tiny_cfg(Architecture::mono_source, AttentionMode::global, TargetMode::words,
                 fuzz.next_u64()),
        wv, wv);
    for (const auto& tok : decode_words(r, std::vector<int>{4, 5, 6}, 12)) {
      CHECK(tok != "<pad>");
      CHECK(tok != "<bos>");
      CHECK(tok != "<eos>");
    }
  }
}

TEST_CASE("corpus post-editing preserves order and passes failures through") {
  Vocab wv = word_vocab(), ov = op_vocab();
  AnyModel<double> model(MonoSourceModel<double>(
      tiny_cfg(Architecture::mono_source, AttentionMode::forced, TargetMode::ops, 4), wv, ov));

  std::vector<Sentence> mt = {{"alpha", "beta"}, {}, {"gamma"}, {"beta", "beta", "alpha"}};
  PostEditResult res = post_edit_corpus(model, mt);
  REQUIRE(res.outputs.size() == mt.size());
  // the empty line cannot be encoded; it passes through and is reported
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].first == 1);
  CHECK(res.outputs[1].empty());

  PostEditResult threaded = post_edit_corpus(model, mt, nullptr, {}, 2);
  REQUIRE(threaded.outputs.size() == res.outputs.size());
  for (std::size_t i = 0; i < res.outputs.size(); ++i)
    CHECK(join_tokens(threaded.outputs[i]) == join_tokens(res.outputs[i]));
  CHECK(threaded.failures.size() == res.failures.size());
}

TEST_CASE("chained corpus post-editing needs a source per line") {
  Vocab wv = word_vocab(), ov = op_vocab();
  AnyModel<double> model(ChainedModel<double>(
      tiny_cfg(Architecture::chained, AttentionMode::forced, TargetMode::ops, 4), wv, wv, ov));

  std::vector<Sentence> mt = {{"alpha"}, {"beta", "gamma"}};
  PostEditResult no_src = post_edit_corpus(model, mt);
  CHECK(no_src.failures.size() == mt.size());
  for (std::size_t i = 0; i < mt.size(); ++i)
    CHECK(join_tokens(no_src.outputs[i]) == join_tokens(mt[i]));

  std::vector<Sentence> src = {{"gamma", "alpha"}};  // one line short
  PostEditResult partial = post_edit_corpus(model, mt, &src);
  REQUIRE(partial.failures.size() == 1);
  CHECK(partial.failures[0].first == 1);
}
