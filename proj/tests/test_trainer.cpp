#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ape/trainer.hpp"
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

ModelConfig tiny_cfg(Architecture arch, std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.cell_size = 3;
  cfg.embedding_size = 3;
  cfg.maxout_pieces = 2;
  cfg.dropout_p = 0.0;
  cfg.seed = seed;
  cfg.architecture = arch;
  cfg.attention = AttentionMode::forced;
  cfg.target_mode = TargetMode::ops;
  return cfg;
}

// identity editing task: every mt token is kept
TrainExample keep_example(std::vector<int> ids) {
  TrainExample ex;
  ex.input_ids = std::move(ids);
  ex.target_ids.assign(ex.input_ids.size(), kOpKeepId);
  ex.target_ids.push_back(kOpEosId);
  return ex;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("batching covers every example once with batch-local padding") {
  std::vector<TrainExample> corpus;
  corpus.push_back(keep_example({4}));
  corpus.push_back(keep_example({4, 5}));
  corpus.push_back(keep_example({4, 5, 6}));
  corpus.push_back(keep_example({5}));
  corpus.push_back(keep_example({6, 6}));

  Rng rng(17);
  std::vector<Batch> batches = make_batches(corpus, 2, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].indices.size() == 2);
  CHECK(batches[1].indices.size() == 2);
  CHECK(batches[2].indices.size() == 1);

  std::vector<int> seen(corpus.size(), 0);
  for (const auto& b : batches) {
    std::size_t width = 0;
    for (std::size_t k = 0; k < b.indices.size(); ++k)
      width = std::max(width, corpus[b.indices[k]].input_ids.size());
    for (std::size_t k = 0; k < b.indices.size(); ++k) {
      ++seen[b.indices[k]];
      const auto& ex = corpus[b.indices[k]];
      REQUIRE(b.input[k].size() == width);
      REQUIRE(b.input_mask[k].size() == width);
      for (std::size_t i = 0; i < width; ++i) {
        if (i < ex.input_ids.size()) {
          CHECK(b.input[k][i] == ex.input_ids[i]);
          CHECK(b.input_mask[k][i] == 1);
        } else {
          CHECK(b.input[k][i] == kPadId);
          CHECK(b.input_mask[k][i] == 0);
        }
      }
    }
  }
  for (int s : seen) CHECK(s == 1);

  // the shuffle is seed-deterministic
  Rng r2(17);
  std::vector<Batch> again = make_batches(corpus, 2, r2);
  for (std::size_t b = 0; b < batches.size(); ++b) CHECK(again[b].indices == batches[b].indices);

  Rng r3(1);
  CHECK_THROWS_AS(make_batches(corpus, 0, r3), Error);
}

TEST_CASE("per-epoch decay multiplies once per full pass") {
  LrSchedule s(1.0, 0.8, DecayInterval::per_epoch, 10);
  CHECK(s.interval() == 10);
  CHECK(s.lr() == 1.0);
  s.advance(9);
  CHECK(s.lr() == 1.0);
  s.advance(1);  // crosses the first boundary
  CHECK(s.lr() == 0.8);

  // n epochs later the rate is the n-fold product, bit for bit
  double expect = 0.8;
  for (int epoch = 2; epoch <= 5; ++epoch) {
    s.advance(10);
    expect *= 0.8;
    CHECK(s.lr() == expect);
  }
  CHECK(s.examples_seen() == 50);
}

TEST_CASE("per-half-epoch decay halves twice per pass") {
  LrSchedule s(0.25, 0.5, DecayInterval::per_half_epoch, 10);
  CHECK(s.interval() == 5);
  s.advance(10);  // one epoch = two boundaries
  CHECK(s.lr() == 0.25 * 0.5 * 0.5);

  // one advance may cross several boundaries at once
  LrSchedule jump(1.0, 0.5, DecayInterval::per_half_epoch, 10);
  jump.advance(25);  // boundaries at 5,10,15,20,25
  double expect = 1.0;
  for (int k = 0; k < 5; ++k) expect *= 0.5;
  CHECK(jump.lr() == expect);

  // a one-example corpus still has a positive interval
  LrSchedule tiny(1.0, 0.5, DecayInterval::per_half_epoch, 1);
  CHECK(tiny.interval() == 1);

  CHECK_THROWS_AS(LrSchedule(1.0, 0.5, DecayInterval::per_epoch, 0), EmptyCorpus);
}

TEST_CASE("preset configs carry the decay conventions") {
  TrainConfig real = TrainConfig::real_preset();
  CHECK(real.decay_factor == 0.8);
  CHECK(real.decay_interval == DecayInterval::per_epoch);
  TrainConfig synth = TrainConfig::synthetic_preset();
  CHECK(synth.decay_factor == 0.5);
  CHECK(synth.decay_interval == DecayInterval::per_half_epoch);
}

TEST_CASE("corpus validation happens before any update") {
  MonoSourceModel<double> m(tiny_cfg(Architecture::mono_source), word_vocab(), op_vocab());
  TrainConfig tc;
  tc.max_steps = 1;

  CHECK_THROWS_AS(train(m, {}, {}, tc), EmptyCorpus);

  std::vector<TrainExample> corpus = {keep_example({4}), keep_example({4, 99})};
  try {
    train(m, corpus, {}, tc);
    FAIL("expected a vocab mismatch");
  } catch (const VocabMismatch& e) {
    CHECK(std::string(e.what()).find("example 2") != std::string::npos);
  }

  std::vector<TrainExample> no_input = {TrainExample{{}, {}, {kOpEosId}}};
  CHECK_THROWS_AS(train(m, no_input, {}, tc), EmptyInput);

  std::vector<TrainExample> bad_target = {TrainExample{{}, {4}, {kOpKeepId}}};
  CHECK_THROWS_AS(train(m, bad_target, {}, tc), InvalidTarget);

  ChainedModel<double> cm(tiny_cfg(Architecture::chained), word_vocab(), word_vocab(), op_vocab());
  std::vector<TrainExample> no_src = {TrainExample{{}, {4}, {kOpKeepId, kOpEosId}}};
  CHECK_THROWS_AS(train(cm, no_src, {}, tc), MissingSource);
}

TEST_CASE("sgd drives the identity-editing loss down and logs tsv rows") {
  MonoSourceModel<double> m(tiny_cfg(Architecture::mono_source), word_vocab(), op_vocab());
  std::vector<TrainExample> corpus = {keep_example({4, 5}), keep_example({5, 6}),
                                      keep_example({6}), keep_example({4, 6, 5})};
  TrainConfig tc;
  tc.batch_size = 2;
  tc.initial_lr = 0.5;
  tc.decay_factor = 1.0;
  tc.eval_every_steps = 0;
  tc.max_steps = 60;

  std::ostringstream log;
  TrainState st = train(m, corpus, {}, tc, &log);
  CHECK(st.step == 60);
  REQUIRE(st.loss_history.size() == 60);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += st.loss_history[i].loss;
    tail += st.loss_history[st.loss_history.size() - 1 - i].loss;
  }
  CHECK(tail < head);

  std::istringstream lines(log.str());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    auto f = split_tabs(line);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == "train");
    CHECK(std::stoull(f[1]) == rows + 1);
    CHECK(std::stod(f[2]) == 0.5);
    CHECK(std::isfinite(std::stod(f[3])));
    ++rows;
  }
  CHECK(rows == 60);
}

TEST_CASE("evals snapshot strict improvements and respect patience") {
  Vocab wv = word_vocab(), ov = op_vocab();
  MonoSourceModel<double> m(tiny_cfg(Architecture::mono_source), wv, ov);
  std::vector<TrainExample> corpus = {keep_example({4, 5}), keep_example({5, 6})};
  std::vector<DevExample> dev;
  for (auto ids : {std::vector<int>{4, 5}, std::vector<int>{6}}) {
    DevExample d;
    d.input_ids = ids;
    for (int id : ids) d.mt.push_back(wv.token(id));
    d.pe = d.mt;
    dev.push_back(d);
  }

  std::string ckpt =
      (std::filesystem::temp_directory_path() / "ape_test_trainer_best.bin").string();
  std::filesystem::remove(ckpt);

  TrainConfig tc;
  tc.batch_size = 2;
  tc.initial_lr = 0.0;  // frozen model: the dev score can never improve twice
  tc.decay_factor = 1.0;
  tc.eval_every_steps = 1;
  tc.patience = 2;
  tc.max_steps = 50;
  tc.checkpoint_path = ckpt;

  TrainState st = train(m, corpus, dev, tc);
  // first eval sets the best and checkpoints; the next two exhaust patience
  REQUIRE(st.evals.size() == 3);
  CHECK(st.evals[0].checkpointed);
  CHECK(!st.evals[1].checkpointed);
  CHECK(!st.evals[2].checkpointed);
  CHECK(st.evals[0].dev_ter == st.evals[1].dev_ter);
  CHECK(st.stopped_early);
  CHECK(st.step == 3);
  CHECK(st.best_dev_ter == st.evals[0].dev_ter);
  CHECK(st.best_checkpoint == ckpt);
  CHECK(std::filesystem::exists(ckpt));
  std::filesystem::remove(ckpt);

  // the running best never rises across checkpointed evals
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ev : st.evals) {
    if (ev.checkpointed) {
      CHECK(ev.dev_ter < best);
      best = ev.dev_ter;
    } else {
      CHECK(ev.dev_ter >= best);
    }
  }
}

TEST_CASE("chained training records an exactly decomposed loss") {
  Vocab wv = word_vocab(), ov = op_vocab();
  ChainedModel<double> m(tiny_cfg(Architecture::chained), wv, wv, ov);
  std::vector<TrainExample> corpus;
  for (auto ids : {std::vector<int>{4, 5}, std::vector<int>{6, 4}}) {
    TrainExample ex = keep_example(ids);
    ex.src_ids = {5, 6};
    corpus.push_back(ex);
  }
  TrainConfig tc;
  tc.batch_size = 2;
  tc.initial_lr = 0.1;
  tc.eval_every_steps = 0;
  tc.max_steps = 8;

  TrainState st = train(m, corpus, {}, tc);
  REQUIRE(st.chained_losses.size() == 8);
  for (const auto& r : st.chained_losses) {
    CHECK(std::fabs(r.total - (r.translate + r.ape_ops)) <= 1e-9);
    CHECK(r.translate > 0.0);
    CHECK(r.ape_ops > 0.0);
  }
}

TEST_CASE("oversampling appends whole copies of the small corpus") {
  auto tag = [](int k) {
    TrainExample ex;
    ex.input_ids = {k};
    return ex;
  };
  std::vector<TrainExample> large = {tag(1), tag(2), tag(3)};
  std::vector<TrainExample> small = {tag(10), tag(11)};
  std::vector<TrainExample> out = oversample_concat(large, small, 2);
  REQUIRE(out.size() == 7);
  std::vector<int> order;
  for (const auto& ex : out) order.push_back(ex.input_ids[0]);
  CHECK(order == std::vector<int>{1, 2, 3, 10, 11, 10, 11});

  CHECK(oversample_concat(large, small, 0).size() == large.size());
}

TEST_CASE("op targets encode to ids ending in eos") {
  Vocab ov = op_vocab();
  EditScript script = {EditOp::keep(), EditOp::del(), EditOp::ins("alpha"), EditOp::ins("zzz")};
  std::vector<int> ids = encode_target_ops(script, ov);
  CHECK(ids == std::vector<int>{kOpKeepId, kOpDelId, 5, kOpInsUnkId, kOpEosId});
}
