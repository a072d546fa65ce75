#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ape/checkpoint.hpp"
#include "ape/config.hpp"
#include "ape/datapipe.hpp"
#include "ape/editops.hpp"
#include "ape/infer.hpp"
#include "ape/metrics.hpp"
#include "ape/trainer.hpp"

namespace {

using Scalar = double;

// Flag combinations the parser cannot reject on its own.
struct UsageFailure : std::runtime_error {
  explicit UsageFailure(const std::string& m) : std::runtime_error(m) {}
};

void print_effective(const ape::Config& cfg, std::uint64_t seed) {
  for (const auto& [k, v] : cfg.entries()) std::cerr << "config " << k << "=" << v << "\n";
  std::cerr << "seed " << seed << "\n";
}

std::vector<ape::Sentence> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<ape::Sentence> out(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) out[i] = ape::split_tokens(lines[i]);
  return out;
}

void write_lines_or_stdout(const std::string& path, const std::vector<std::string>& lines) {
  if (path.empty()) {
    for (const auto& l : lines) std::cout << l << "\n";
  } else {
    ape::save_lines(path, lines);
  }
}

std::vector<std::string> join_sentences(const std::vector<ape::Sentence>& sents) {
  std::vector<std::string> lines(sents.size());
  for (std::size_t i = 0; i < sents.size(); ++i) lines[i] = ape::join_tokens(sents[i]);
  return lines;
}

// ---- extract-ops ---------------------------------------------------------------

struct ExtractArgs {
  std::string mt, pe, out;
};

int cmd_extract(const ExtractArgs& a) {
  ape::Config eff;
  eff.set("extract.mt", a.mt);
  eff.set("extract.pe", a.pe);
  eff.set("extract.out", a.out.empty() ? "<stdout>" : a.out);
  print_effective(eff, 0);
  auto files = ape::load_parallel({a.mt, a.pe});
  std::vector<std::string> out;
  out.reserve(files[0].size());
  for (std::size_t i = 0; i < files[0].size(); ++i)
    out.push_back(ape::format_script(
        ape::extract_ops(ape::split_tokens(files[0][i]), ape::split_tokens(files[1][i]))));
  write_lines_or_stdout(a.out, out);
  return 0;
}

// ---- apply-ops -----------------------------------------------------------------

struct ApplyArgs {
  std::string mt, ops, out;
};

int cmd_apply(const ApplyArgs& a) {
  ape::Config eff;
  eff.set("apply.mt", a.mt);
  eff.set("apply.ops", a.ops);
  eff.set("apply.out", a.out.empty() ? "<stdout>" : a.out);
  print_effective(eff, 0);
  auto files = ape::load_parallel({a.mt, a.ops});
  std::vector<std::string> out;
  out.reserve(files[0].size());
  for (std::size_t i = 0; i < files[0].size(); ++i) {
    ape::EditScript script = ape::parse_script(files[1][i], i + 1);
    out.push_back(ape::join_tokens(ape::apply_ops(ape::split_tokens(files[0][i]), script)));
  }
  write_lines_or_stdout(a.out, out);
  return 0;
}

// ---- stats ---------------------------------------------------------------------

struct StatsArgs {
  std::string ops;
};

int cmd_stats(const StatsArgs& a) {
  ape::Config eff;
  eff.set("stats.ops", a.ops);
  print_effective(eff, 0);
  auto lines = ape::load_lines(a.ops);
  std::vector<ape::EditScript> scripts;
  scripts.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i)
    scripts.push_back(ape::parse_script(lines[i], i + 1));
  ape::OpStats st = ape::script_stats(scripts);
  std::cout << "total " << st.total << "\n";
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& [sym, count] : st.ranked())
    std::cout << sym << " " << count << " " << st.percent(sym) << "\n";
  return 0;
}

// ---- build-vocab ---------------------------------------------------------------

struct VocabArgs {
  std::string in, out, kind = "words";
  std::size_t limit = 30000;
};

int cmd_build_vocab(const VocabArgs& a) {
  ape::Config eff;
  eff.set("vocab.in", a.in);
  eff.set("vocab.out", a.out);
  eff.set("vocab.kind", a.kind);
  eff.set("vocab.limit", std::to_string(a.limit));
  print_effective(eff, 0);
  auto lines = ape::load_lines(a.in);
  ape::Vocab v;
  if (a.kind == "words") {
    v = ape::build_word_vocab(tokenize_lines(lines), a.limit);
  } else if (a.kind == "ops") {
    std::vector<ape::EditScript> scripts;
    scripts.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i)
      scripts.push_back(ape::parse_script(lines[i], i + 1));
    v = ape::build_op_vocab(scripts, a.limit);
  } else {
    throw UsageFailure("--kind must be 'words' or 'ops'");
  }
  ape::save_lines(a.out, v.tokens());
  std::cerr << "vocab size " << v.size() << "\n";
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string hyp, ref, mt;
  bool no_shifts = false;
};

int cmd_eval(const EvalArgs& a) {
  ape::Config eff;
  eff.set("eval.hyp", a.hyp);
  eff.set("eval.ref", a.ref);
  if (!a.mt.empty()) eff.set("eval.mt", a.mt);
  eff.set("eval.use_shifts", a.no_shifts ? "false" : "true");
  print_effective(eff, 0);
  std::vector<std::string> paths = {a.hyp, a.ref};
  if (!a.mt.empty()) paths.push_back(a.mt);
  auto files = ape::load_parallel(paths);
  auto hyps = tokenize_lines(files[0]);
  auto refs = tokenize_lines(files[1]);
  std::vector<std::pair<ape::Sentence, ape::Sentence>> pairs(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs[i] = {hyps[i], refs[i]};
  double ter = ape::ter_corpus(pairs, !a.no_shifts);
  ape::BleuScore bleu = ape::bleu_corpus(pairs);
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "TER " << ter << " BLEU " << bleu.score << "\n";
  if (!a.mt.empty()) {
    auto mts = tokenize_lines(files[2]);
    std::vector<std::pair<ape::Sentence, ape::Sentence>> base_pairs(mts.size());
    for (std::size_t i = 0; i < mts.size(); ++i) base_pairs[i] = {mts[i], refs[i]};
    std::cout << "BASELINE-TER " << ape::ter_corpus(base_pairs, !a.no_shifts) << "\n";
  }
  return 0;
}

// ---- coarse-filter -------------------------------------------------------------

struct CoarseArgs {
  std::string in, out;
  ape::CoarseRules rules;
  bool no_length = false, no_charset = false, no_control = false, no_uppercase = false;
};

int cmd_coarse(CoarseArgs& a) {
  a.rules.check_length = !a.no_length;
  a.rules.check_charset = !a.no_charset;
  a.rules.check_control = !a.no_control;
  a.rules.check_uppercase = !a.no_uppercase;
  ape::Config eff;
  eff.set("coarse.in", a.in);
  eff.set("coarse.out", a.out.empty() ? "<stdout>" : a.out);
  eff.set("coarse.min_tokens", std::to_string(a.rules.min_tokens));
  eff.set("coarse.max_tokens", std::to_string(a.rules.max_tokens));
  eff.set("coarse.min_ratio", std::to_string(a.rules.min_alpha_punct_ratio));
  eff.set("coarse.length_rule", a.rules.check_length ? "on" : "off");
  eff.set("coarse.charset_rule", a.rules.check_charset ? "on" : "off");
  eff.set("coarse.control_rule", a.rules.check_control ? "on" : "off");
  eff.set("coarse.uppercase_rule", a.rules.check_uppercase ? "on" : "off");
  print_effective(eff, 0);
  auto lines = ape::load_lines(a.in);
  auto kept = ape::coarse_filter(lines, a.rules);
  write_lines_or_stdout(a.out, kept);
  std::cerr << "kept " << kept.size() << " of " << lines.size() << "\n";
  return 0;
}

// ---- lm-train / lm-select --------------------------------------------------------

struct LmTrainArgs {
  std::string pe, out;
  ape::TrigramLmConfig cfg;
};

int cmd_lm_train(const LmTrainArgs& a) {
  ape::Config eff;
  eff.set("lm.pe", a.pe);
  eff.set("lm.out", a.out);
  eff.set("lm.alpha", std::to_string(a.cfg.alpha));
  eff.set("lm.weight_tri", std::to_string(a.cfg.weight_tri));
  eff.set("lm.weight_bi", std::to_string(a.cfg.weight_bi));
  eff.set("lm.weight_uni", std::to_string(a.cfg.weight_uni));
  print_effective(eff, 0);
  ape::TrigramLm lm = ape::lm_train(tokenize_lines(ape::load_lines(a.pe)), a.cfg);
  lm.save(a.out);
  std::cerr << "lm words " << lm.vocab_words() << "\n";
  return 0;
}

struct LmSelectArgs {
  std::string lm, in, out;
  std::size_t top_k = 1;
};

int cmd_lm_select(const LmSelectArgs& a) {
  ape::Config eff;
  eff.set("lmselect.lm", a.lm);
  eff.set("lmselect.in", a.in);
  eff.set("lmselect.out", a.out.empty() ? "<stdout>" : a.out);
  eff.set("lmselect.top_k", std::to_string(a.top_k));
  print_effective(eff, 0);
  ape::TrigramLm lm = ape::TrigramLm::load(a.lm);
  auto kept = ape::lm_select(lm, ape::load_lines(a.in), a.top_k);
  write_lines_or_stdout(a.out, kept);
  return 0;
}

// ---- gen-synthetic -------------------------------------------------------------

struct GenArgs {
  std::string pe, pe2src, pe2mt, out_src, out_mt, out_pe;
  std::size_t max_len = 80;
};

int cmd_gen(const GenArgs& a) {
  ape::Config eff;
  eff.set("gen.pe", a.pe);
  eff.set("gen.pe2src", a.pe2src);
  eff.set("gen.pe2mt", a.pe2mt);
  eff.set("gen.out_src", a.out_src);
  eff.set("gen.out_mt", a.out_mt);
  eff.set("gen.out_pe", a.out_pe);
  eff.set("gen.max_len", std::to_string(a.max_len));
  print_effective(eff, 0);
  ape::AnyModel<Scalar> m_src = ape::load_checkpoint<Scalar>(a.pe2src);
  ape::AnyModel<Scalar> m_mt = ape::load_checkpoint<Scalar>(a.pe2mt);
  auto* pe2src = std::get_if<ape::MonoSourceModel<Scalar>>(&m_src);
  auto* pe2mt = std::get_if<ape::MonoSourceModel<Scalar>>(&m_mt);
  if (!pe2src || !pe2mt)
    throw ape::WrongMode("generation checkpoints must be single-source words models");
  ape::GenResult res =
      ape::gen_synthetic(tokenize_lines(ape::load_lines(a.pe)), *pe2src, *pe2mt, a.max_len);
  std::vector<std::string> src_lines, mt_lines, pe_lines;
  for (const auto& t : res.triples) {
    src_lines.push_back(ape::join_tokens(t.src));
    mt_lines.push_back(ape::join_tokens(t.mt));
    pe_lines.push_back(ape::join_tokens(t.pe));
  }
  ape::save_lines(a.out_src, src_lines);
  ape::save_lines(a.out_mt, mt_lines);
  ape::save_lines(a.out_pe, pe_lines);
  for (const auto& [idx, why] : res.failures)
    std::cerr << "warn: line " << (idx + 1) << " skipped: " << why << "\n";
  std::cerr << "generated " << res.triples.size() << " triples\n";
  return 0;
}

// ---- filter-ter ----------------------------------------------------------------

struct FilterArgs {
  std::string real_src, real_mt, real_pe, synth_src, synth_mt, synth_pe;
  std::string out_src, out_mt, out_pe;
  std::size_t target = 0, subset = 1000;
  std::uint64_t seed = 1;
  bool no_shifts = false;
};

int cmd_filter(const FilterArgs& a) {
  ape::Config eff;
  eff.set("filter.real_src", a.real_src);
  eff.set("filter.real_mt", a.real_mt);
  eff.set("filter.real_pe", a.real_pe);
  eff.set("filter.synth_src", a.synth_src);
  eff.set("filter.synth_mt", a.synth_mt);
  eff.set("filter.synth_pe", a.synth_pe);
  eff.set("filter.target", std::to_string(a.target));
  eff.set("filter.subset", std::to_string(a.subset));
  eff.set("filter.use_shifts", a.no_shifts ? "false" : "true");
  print_effective(eff, a.seed);
  auto real = ape::load_triples(a.real_src, a.real_mt, a.real_pe);
  auto synth = ape::load_triples(a.synth_src, a.synth_mt, a.synth_pe);
  auto picked = ape::ter_filter(real, synth, a.target, a.subset, a.seed, !a.no_shifts);
  std::vector<std::string> src_lines, mt_lines, pe_lines;
  for (const auto& t : picked) {
    src_lines.push_back(ape::join_tokens(t.src));
    mt_lines.push_back(ape::join_tokens(t.mt));
    pe_lines.push_back(ape::join_tokens(t.pe));
  }
  ape::save_lines(a.out_src, src_lines);
  ape::save_lines(a.out_mt, mt_lines);
  ape::save_lines(a.out_pe, pe_lines);
  std::cerr << "selected " << picked.size() << " of " << synth.size() << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string arch = "mono_source", attention = "forced", target_mode = "ops";
  std::size_t cell = 128, embed = 128, vocab_limit = 30000, maxout = 2;
  double dropout = 0.2;
  std::string preset;
  std::size_t batch = 32, eval_every = 200, max_steps = 1000, patience = 20, oversample = 1;
  double lr = 1.0, decay = 0.8;
  std::string decay_interval = "epoch";
  bool no_shifts = false;
  std::uint64_t seed = 1;
  std::string train_mt, train_pe, train_src, dev_mt, dev_pe, dev_src;
  std::string synth_src, synth_mt, synth_pe;
  std::string train_input, train_target, dev_input, dev_target;
  std::string checkpoint, log;
};

struct TrainOptions {
  CLI::Option* arch = nullptr;
  CLI::Option* attention = nullptr;
  CLI::Option* target_mode = nullptr;
  CLI::Option* cell = nullptr;
  CLI::Option* embed = nullptr;
  CLI::Option* vocab_limit = nullptr;
  CLI::Option* maxout = nullptr;
  CLI::Option* dropout = nullptr;
  CLI::Option* preset = nullptr;
  CLI::Option* batch = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* decay = nullptr;
  CLI::Option* decay_interval = nullptr;
  CLI::Option* eval_every = nullptr;
  CLI::Option* max_steps = nullptr;
  CLI::Option* patience = nullptr;
  CLI::Option* oversample = nullptr;
  CLI::Option* no_shifts = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* train_mt = nullptr;
  CLI::Option* train_pe = nullptr;
  CLI::Option* train_src = nullptr;
  CLI::Option* dev_mt = nullptr;
  CLI::Option* dev_pe = nullptr;
  CLI::Option* dev_src = nullptr;
  CLI::Option* synth_src = nullptr;
  CLI::Option* synth_mt = nullptr;
  CLI::Option* synth_pe = nullptr;
  CLI::Option* train_input = nullptr;
  CLI::Option* train_target = nullptr;
  CLI::Option* dev_input = nullptr;
  CLI::Option* dev_target = nullptr;
  CLI::Option* checkpoint = nullptr;
  CLI::Option* log = nullptr;
};

// Config-file values fill in any setting whose flag was not passed; flags
// always win, the preset only fills settings neither source mentions.
void merge_train_config(TrainArgs& a, const TrainOptions& o) {
  if (a.config_path.empty() && a.preset.empty()) return;
  ape::Config f =
      a.config_path.empty() ? ape::Config() : ape::Config::from_file(a.config_path);
  auto str = [&](CLI::Option* opt, const char* key, std::string& v) {
    if (opt->count() == 0 && f.has(key)) v = f.get_str(key);
  };
  auto num = [&](CLI::Option* opt, const char* key, std::size_t& v) {
    if (opt->count() == 0 && f.has(key)) v = static_cast<std::size_t>(f.get_u64(key, v));
  };
  auto dbl = [&](CLI::Option* opt, const char* key, double& v) {
    if (opt->count() == 0 && f.has(key)) v = f.get_double(key, v);
  };
  str(o.arch, "model.architecture", a.arch);
  str(o.attention, "model.attention", a.attention);
  str(o.target_mode, "model.target_mode", a.target_mode);
  num(o.cell, "model.cell_size", a.cell);
  num(o.embed, "model.embedding_size", a.embed);
  num(o.vocab_limit, "model.vocab_limit", a.vocab_limit);
  num(o.maxout, "model.maxout_pieces", a.maxout);
  dbl(o.dropout, "model.dropout_p", a.dropout);
  str(o.preset, "train.preset", a.preset);
  num(o.batch, "train.batch_size", a.batch);
  dbl(o.lr, "train.initial_lr", a.lr);
  dbl(o.decay, "train.decay_factor", a.decay);
  str(o.decay_interval, "train.decay_interval", a.decay_interval);
  num(o.eval_every, "train.eval_every_steps", a.eval_every);
  num(o.max_steps, "train.max_steps", a.max_steps);
  num(o.patience, "train.patience", a.patience);
  num(o.oversample, "data.oversample", a.oversample);
  if (o.no_shifts->count() == 0 && f.has("train.use_shifts"))
    a.no_shifts = !f.get_bool("train.use_shifts", true);
  if (o.seed->count() == 0 && f.has("seed"))
    a.seed = f.get_u64("seed", a.seed);
  str(o.train_mt, "data.train_mt", a.train_mt);
  str(o.train_pe, "data.train_pe", a.train_pe);
  str(o.train_src, "data.train_src", a.train_src);
  str(o.dev_mt, "data.dev_mt", a.dev_mt);
  str(o.dev_pe, "data.dev_pe", a.dev_pe);
  str(o.dev_src, "data.dev_src", a.dev_src);
  str(o.synth_src, "data.synth_src", a.synth_src);
  str(o.synth_mt, "data.synth_mt", a.synth_mt);
  str(o.synth_pe, "data.synth_pe", a.synth_pe);
  str(o.train_input, "data.train_input", a.train_input);
  str(o.train_target, "data.train_target", a.train_target);
  str(o.dev_input, "data.dev_input", a.dev_input);
  str(o.dev_target, "data.dev_target", a.dev_target);
  str(o.checkpoint, "out.checkpoint", a.checkpoint);
  str(o.log, "out.log", a.log);
  // preset fills decay settings neither flag nor file pinned
  if (!a.preset.empty()) {
    ape::TrainConfig p;
    if (a.preset == "real") {
      p = ape::TrainConfig::real_preset();
    } else if (a.preset == "synthetic") {
      p = ape::TrainConfig::synthetic_preset();
    } else {
      throw UsageFailure("--preset must be 'real' or 'synthetic'");
    }
    if (o.decay->count() == 0 && !f.has("train.decay_factor")) a.decay = p.decay_factor;
    if (o.decay_interval->count() == 0 && !f.has("train.decay_interval"))
      a.decay_interval =
          p.decay_interval == ape::DecayInterval::per_epoch ? "epoch" : "half_epoch";
  }
}

ape::DecayInterval parse_interval(const std::string& s) {
  if (s == "epoch") return ape::DecayInterval::per_epoch;
  if (s == "half_epoch") return ape::DecayInterval::per_half_epoch;
  throw UsageFailure("--decay-interval must be 'epoch' or 'half_epoch'");
}

void print_train_effective(const TrainArgs& a) {
  ape::Config eff;
  eff.set("model.architecture", a.arch);
  eff.set("model.attention", a.attention);
  eff.set("model.target_mode", a.target_mode);
  eff.set("model.cell_size", std::to_string(a.cell));
  eff.set("model.embedding_size", std::to_string(a.embed));
  eff.set("model.vocab_limit", std::to_string(a.vocab_limit));
  eff.set("model.maxout_pieces", std::to_string(a.maxout));
  eff.set("model.dropout_p", std::to_string(a.dropout));
  if (!a.preset.empty()) eff.set("train.preset", a.preset);
  eff.set("train.batch_size", std::to_string(a.batch));
  eff.set("train.initial_lr", std::to_string(a.lr));
  eff.set("train.decay_factor", std::to_string(a.decay));
  eff.set("train.decay_interval", a.decay_interval);
  eff.set("train.eval_every_steps", std::to_string(a.eval_every));
  eff.set("train.max_steps", std::to_string(a.max_steps));
  eff.set("train.patience", std::to_string(a.patience));
  eff.set("train.use_shifts", a.no_shifts ? "false" : "true");
  auto set_if = [&](const char* k, const std::string& v) {
    if (!v.empty()) eff.set(k, v);
  };
  set_if("data.train_mt", a.train_mt);
  set_if("data.train_pe", a.train_pe);
  set_if("data.train_src", a.train_src);
  set_if("data.dev_mt", a.dev_mt);
  set_if("data.dev_pe", a.dev_pe);
  set_if("data.dev_src", a.dev_src);
  set_if("data.synth_src", a.synth_src);
  set_if("data.synth_mt", a.synth_mt);
  set_if("data.synth_pe", a.synth_pe);
  if (!a.synth_mt.empty()) eff.set("data.oversample", std::to_string(a.oversample));
  set_if("data.train_input", a.train_input);
  set_if("data.train_target", a.train_target);
  set_if("data.dev_input", a.dev_input);
  set_if("data.dev_target", a.dev_target);
  set_if("out.checkpoint", a.checkpoint);
  set_if("out.log", a.log);
  print_effective(eff, a.seed);
}

struct OpsData {
  std::vector<ape::Triple> train, dev;
  std::vector<ape::EditScript> scripts;  // aligned with train
};

OpsData assemble_ops_data(const TrainArgs& a, bool chained) {
  if (a.train_mt.empty() || a.train_pe.empty())
    throw UsageFailure("ops training needs --train-mt and --train-pe");
  if (chained && a.train_src.empty())
    throw UsageFailure("chained training needs --train-src");
  OpsData d;
  std::vector<ape::Triple> real;
  if (chained) {
    real = ape::load_triples(a.train_src, a.train_mt, a.train_pe);
  } else {
    auto files = ape::load_parallel({a.train_mt, a.train_pe});
    real.resize(files[0].size());
    for (std::size_t i = 0; i < real.size(); ++i) {
      real[i].mt = ape::split_tokens(files[0][i]);
      real[i].pe = ape::split_tokens(files[1][i]);
    }
  }
  if (!a.synth_mt.empty() || !a.synth_pe.empty() || !a.synth_src.empty()) {
    if (a.synth_mt.empty() || a.synth_pe.empty() || (chained && a.synth_src.empty()))
      throw UsageFailure("synthetic data needs --synth-mt and --synth-pe (and --synth-src when chained)");
    std::vector<ape::Triple> synth;
    if (chained) {
      synth = ape::load_triples(a.synth_src, a.synth_mt, a.synth_pe);
    } else {
      auto files = ape::load_parallel({a.synth_mt, a.synth_pe});
      synth.resize(files[0].size());
      for (std::size_t i = 0; i < synth.size(); ++i) {
        synth[i].mt = ape::split_tokens(files[0][i]);
        synth[i].pe = ape::split_tokens(files[1][i]);
      }
    }
    d.train = ape::oversample_concat(synth, real, a.oversample);
  } else {
    d.train = real;
  }
  bool has_dev = !a.dev_mt.empty() || !a.dev_pe.empty() || !a.dev_src.empty();
  if (has_dev) {
    if (a.dev_mt.empty() || a.dev_pe.empty() || (chained && a.dev_src.empty()))
      throw UsageFailure("dev data needs --dev-mt and --dev-pe (and --dev-src when chained)");
    if (chained) {
      d.dev = ape::load_triples(a.dev_src, a.dev_mt, a.dev_pe);
    } else {
      auto files = ape::load_parallel({a.dev_mt, a.dev_pe});
      d.dev.resize(files[0].size());
      for (std::size_t i = 0; i < d.dev.size(); ++i) {
        d.dev[i].mt = ape::split_tokens(files[0][i]);
        d.dev[i].pe = ape::split_tokens(files[1][i]);
      }
    }
  }
  d.scripts.reserve(d.train.size());
  for (const auto& t : d.train) d.scripts.push_back(ape::extract_ops(t.mt, t.pe));
  return d;
}

std::vector<ape::Sentence> side_of(const std::vector<ape::Triple>& ts,
                                   ape::Sentence ape::Triple::* side) {
  std::vector<ape::Sentence> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.*side);
  return out;
}

template <typename Model>
ape::TrainState run_train(Model& model, const std::vector<ape::TrainExample>& corpus,
                          const std::vector<ape::DevExample>& dev, const ape::TrainConfig& tc,
                          const std::string& log_path) {
  std::ofstream log_os;
  std::ostream* log = nullptr;
  if (!log_path.empty()) {
    log_os.open(log_path);
    if (!log_os) throw ape::IoError("cannot write '" + log_path + "'");
    log = &log_os;
  }
  ape::TrainState st = ape::train(model, corpus, dev, tc, log);
  if (!tc.checkpoint_path.empty() && st.best_checkpoint.empty()) {
    ape::save_checkpoint(tc.checkpoint_path, model);
    st.best_checkpoint = tc.checkpoint_path;
  }
  std::cerr << "trained steps=" << st.step;
  if (!st.evals.empty()) std::cerr << " best_dev_ter=" << st.best_dev_ter;
  std::cerr << "\n";
  return st;
}

int cmd_train(TrainArgs& a, const TrainOptions& o) {
  merge_train_config(a, o);
  print_train_effective(a);

  ape::ModelConfig mc;
  mc.cell_size = a.cell;
  mc.embedding_size = a.embed;
  mc.vocab_limit = a.vocab_limit;
  mc.maxout_pieces = a.maxout;
  mc.dropout_p = a.dropout;
  mc.seed = a.seed;
  mc.architecture = ape::architecture_from_string(a.arch);
  mc.attention = ape::attention_from_string(a.attention);
  mc.target_mode = ape::target_mode_from_string(a.target_mode);
  mc.validate();

  ape::TrainConfig tc;
  tc.batch_size = a.batch;
  tc.initial_lr = a.lr;
  tc.decay_factor = a.decay;
  tc.decay_interval = parse_interval(a.decay_interval);
  tc.eval_every_steps = a.eval_every;
  tc.max_steps = a.max_steps;
  tc.patience = a.patience;
  tc.seed = a.seed;
  tc.use_shifts = !a.no_shifts;
  tc.checkpoint_path = a.checkpoint;

  if (mc.target_mode == ape::TargetMode::words) {
    if (a.train_input.empty() || a.train_target.empty())
      throw UsageFailure("words training needs --train-input and --train-target");
    auto inputs = tokenize_lines(ape::load_lines(a.train_input));
    auto targets = tokenize_lines(ape::load_lines(a.train_target));
    if (inputs.size() != targets.size())
      throw ape::LineCountMismatch(a.train_input + " has " + std::to_string(inputs.size()) +
                                   " lines, " + a.train_target + " has " +
                                   std::to_string(targets.size()));
    ape::Vocab in_v = ape::build_word_vocab(inputs, mc.vocab_limit);
    ape::Vocab tgt_v = ape::build_word_vocab(targets, mc.vocab_limit);
    std::vector<ape::TrainExample> corpus(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      corpus[i].input_ids = in_v.encode(inputs[i]);
      corpus[i].target_ids = tgt_v.encode(targets[i]);
      corpus[i].target_ids.push_back(ape::kWordEosId);
    }
    std::vector<ape::DevExample> dev;
    if (!a.dev_input.empty() || !a.dev_target.empty()) {
      if (a.dev_input.empty() || a.dev_target.empty())
        throw UsageFailure("words dev data needs --dev-input and --dev-target");
      auto dev_in = tokenize_lines(ape::load_lines(a.dev_input));
      auto dev_tgt = tokenize_lines(ape::load_lines(a.dev_target));
      if (dev_in.size() != dev_tgt.size())
        throw ape::LineCountMismatch(a.dev_input + " and " + a.dev_target + " differ");
      dev.resize(dev_in.size());
      for (std::size_t i = 0; i < dev.size(); ++i) {
        dev[i].pe = dev_tgt[i];
        dev[i].input_ids = in_v.encode(dev_in[i]);
      }
    }
    ape::MonoSourceModel<Scalar> model(mc, in_v, tgt_v);
    run_train(model, corpus, dev, tc, a.log);
    return 0;
  }

  bool chained = mc.architecture == ape::Architecture::chained;
  OpsData d = assemble_ops_data(a, chained);
  ape::Vocab op_v = ape::build_op_vocab(d.scripts, mc.vocab_limit);
  if (chained) {
    ape::Vocab src_v = ape::build_word_vocab(side_of(d.train, &ape::Triple::src), mc.vocab_limit);
    ape::Vocab mt_v = ape::build_word_vocab(side_of(d.train, &ape::Triple::mt), mc.vocab_limit);
    std::vector<ape::TrainExample> corpus(d.train.size());
    for (std::size_t i = 0; i < d.train.size(); ++i) {
      corpus[i].src_ids = src_v.encode(d.train[i].src);
      corpus[i].input_ids = mt_v.encode(d.train[i].mt);
      corpus[i].target_ids = ape::encode_target_ops(d.scripts[i], op_v);
    }
    std::vector<ape::DevExample> dev(d.dev.size());
    for (std::size_t i = 0; i < d.dev.size(); ++i) {
      dev[i].mt = d.dev[i].mt;
      dev[i].pe = d.dev[i].pe;
      dev[i].src_ids = src_v.encode(d.dev[i].src);
      dev[i].input_ids = mt_v.encode(d.dev[i].mt);
    }
    ape::ChainedModel<Scalar> model(mc, src_v, mt_v, op_v);
    run_train(model, corpus, dev, tc, a.log);
  } else {
    ape::Vocab mt_v = ape::build_word_vocab(side_of(d.train, &ape::Triple::mt), mc.vocab_limit);
    std::vector<ape::TrainExample> corpus(d.train.size());
    for (std::size_t i = 0; i < d.train.size(); ++i) {
      corpus[i].input_ids = mt_v.encode(d.train[i].mt);
      corpus[i].target_ids = ape::encode_target_ops(d.scripts[i], op_v);
    }
    std::vector<ape::DevExample> dev(d.dev.size());
    for (std::size_t i = 0; i < d.dev.size(); ++i) {
      dev[i].mt = d.dev[i].mt;
      dev[i].pe = d.dev[i].pe;
      dev[i].input_ids = mt_v.encode(d.dev[i].mt);
    }
    ape::MonoSourceModel<Scalar> model(mc, mt_v, op_v);
    run_train(model, corpus, dev, tc, a.log);
  }
  return 0;
}

// ---- decode --------------------------------------------------------------------

struct DecodeArgs {
  std::string checkpoint, mt, src, in, out;
  std::size_t max_extra = 50, max_len = 80, threads = 1;
};

int cmd_decode(const DecodeArgs& a) {
  ape::Config eff;
  eff.set("decode.checkpoint", a.checkpoint);
  if (!a.mt.empty()) eff.set("decode.mt", a.mt);
  if (!a.src.empty()) eff.set("decode.src", a.src);
  if (!a.in.empty()) eff.set("decode.in", a.in);
  eff.set("decode.out", a.out.empty() ? "<stdout>" : a.out);
  eff.set("decode.max_extra", std::to_string(a.max_extra));
  eff.set("decode.threads", std::to_string(a.threads));
  print_effective(eff, 0);
  ape::AnyModel<Scalar> model = ape::load_checkpoint<Scalar>(a.checkpoint);
  const bool words_mode =
      std::holds_alternative<ape::MonoSourceModel<Scalar>>(model) &&
      std::get<ape::MonoSourceModel<Scalar>>(model).cfg.target_mode == ape::TargetMode::words;
  if (words_mode) {
    if (a.in.empty()) throw UsageFailure("a words-mode checkpoint needs --in");
    const auto& m = std::get<ape::MonoSourceModel<Scalar>>(model);
    auto inputs = tokenize_lines(ape::load_lines(a.in));
    std::vector<ape::Sentence> outs(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
      outs[i] = ape::decode_words(m, m.input_vocab.encode(inputs[i]), a.max_len);
    write_lines_or_stdout(a.out, join_sentences(outs));
    return 0;
  }
  if (a.mt.empty()) throw UsageFailure("an ops-mode checkpoint needs --mt");
  const bool chained = std::holds_alternative<ape::ChainedModel<Scalar>>(model);
  if (chained && a.src.empty()) throw UsageFailure("a chained checkpoint needs --src");
  std::vector<ape::Sentence> mt_sents, src_sents;
  if (chained) {
    auto files = ape::load_parallel({a.mt, a.src});
    mt_sents = tokenize_lines(files[0]);
    src_sents = tokenize_lines(files[1]);
  } else {
    mt_sents = tokenize_lines(ape::load_lines(a.mt));
  }
  ape::DecodeConfig dc;
  dc.max_extra = a.max_extra;
  ape::PostEditResult res =
      ape::post_edit_corpus(model, mt_sents, chained ? &src_sents : nullptr, dc, a.threads);
  for (const auto& [idx, why] : res.failures)
    std::cerr << "warn: line " << (idx + 1) << " passed through: " << why << "\n";
  write_lines_or_stdout(a.out, join_sentences(res.outputs));
  return 0;
}

// ---- grad-check ----------------------------------------------------------------

struct GradArgs {
  std::string arch = "mono_source", attention = "forced", target_mode = "ops";
  std::size_t cell = 3, embed = 3, pieces = 1, samples = 200;
  std::uint64_t seed = 1;
  double step = 1e-3, threshold = 1e-4;
};

int cmd_grad_check(const GradArgs& a) {
  ape::Config eff;
  eff.set("grad.architecture", a.arch);
  eff.set("grad.attention", a.attention);
  eff.set("grad.target_mode", a.target_mode);
  eff.set("grad.cell_size", std::to_string(a.cell));
  eff.set("grad.embedding_size", std::to_string(a.embed));
  eff.set("grad.maxout_pieces", std::to_string(a.pieces));
  eff.set("grad.samples", std::to_string(a.samples));
  eff.set("grad.step", std::to_string(a.step));
  eff.set("grad.threshold", std::to_string(a.threshold));
  print_effective(eff, a.seed);

  ape::ModelConfig mc;
  mc.cell_size = a.cell;
  mc.embedding_size = a.embed;
  mc.maxout_pieces = a.pieces;
  mc.dropout_p = 0.2;
  mc.seed = a.seed;
  mc.architecture = ape::architecture_from_string(a.arch);
  mc.attention = ape::attention_from_string(a.attention);
  mc.target_mode = ape::target_mode_from_string(a.target_mode);
  mc.validate();

  ape::Vocab word_v = ape::Vocab::from_ordered(
      {"<pad>", "<unk>", "<bos>", "<eos>", "alpha", "beta", "gamma"}, ape::kWordUnkId);
  ape::Vocab op_v = ape::Vocab::from_ordered(
      {"PAD", "KEEP", "DEL", "EOS", "INS|UNK", "INS|alpha", "INS|beta"}, ape::kOpInsUnkId);

  std::vector<int> input = {4, 5, 6, 4};
  std::vector<int> ops_target = {ape::kOpKeepId, 5, ape::kOpDelId, ape::kOpKeepId,
                                 ape::kOpKeepId, ape::kOpEosId};
  std::vector<int> words_target = {5, 6, 4, ape::kWordEosId};

  ape::GradCheckResult res;
  if (mc.architecture == ape::Architecture::chained) {
    ape::ChainedModel<double> model(mc, word_v, word_v, op_v);
    auto params = model.parameters();
    auto run = [&](bool with_grad) {
      ape::Rng r(77);
      ape::Tape<double> tape;
      ape::ChainedLoss<double> l =
          ape::forward_chained(tape, model, std::vector<int>{5, 4, 6}, input, ops_target, true, r);
      if (with_grad) tape.backward(l.total);
      return tape.val(l.total).v[0];
    };
    res = ape::grad_check<double>(run, std::span<ape::Parameter<double>* const>(params.data(),
                                                                                params.size()),
                                  a.step, a.samples, a.seed);
  } else {
    const std::vector<int>& target =
        mc.target_mode == ape::TargetMode::ops ? ops_target : words_target;
    ape::MonoSourceModel<double> model(
        mc, word_v, mc.target_mode == ape::TargetMode::ops ? op_v : word_v);
    auto params = model.parameters();
    auto run = [&](bool with_grad) {
      ape::Rng r(77);
      ape::Tape<double> tape;
      ape::Var loss = ape::forward_mono(tape, model, input, target, true, r);
      if (with_grad) tape.backward(loss);
      return tape.val(loss).v[0];
    };
    res = ape::grad_check<double>(run, std::span<ape::Parameter<double>* const>(params.data(),
                                                                                params.size()),
                                  a.step, a.samples, a.seed);
  }
  std::cout << "max_rel_err " << res.max_rel_err << " entries " << res.entries_checked
            << " worst " << (res.worst.empty() ? "-" : res.worst) << "\n";
  if (res.max_rel_err > a.threshold) {
    std::cerr << "error: gradient mismatch above " << a.threshold << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edit-operation post-editing toolkit"};
  app.require_subcommand(1);

  ExtractArgs xa;
  auto* sx = app.add_subcommand("extract-ops", "derive edit scripts from mt/pe pairs");
  sx->add_option("--mt", xa.mt, "mt hypotheses, one per line")->required();
  sx->add_option("--pe", xa.pe, "post-edited references")->required();
  sx->add_option("--out", xa.out, "output script file (default stdout)");

  ApplyArgs aa;
  auto* sa = app.add_subcommand("apply-ops", "apply edit scripts to mt sentences");
  sa->add_option("--mt", aa.mt, "mt hypotheses")->required();
  sa->add_option("--ops", aa.ops, "edit scripts")->required();
  sa->add_option("--out", aa.out, "output text file (default stdout)");

  StatsArgs ta;
  auto* st = app.add_subcommand("stats", "edit-operation distribution of a script file");
  st->add_option("--ops", ta.ops, "edit scripts")->required();

  VocabArgs va;
  auto* sv = app.add_subcommand("build-vocab", "build a token or op vocabulary");
  sv->add_option("--in", va.in, "input file")->required();
  sv->add_option("--out", va.out, "output vocab file, one token per line")->required();
  sv->add_option("--kind", va.kind, "words|ops (default words)");
  sv->add_option("--limit", va.limit, "max vocab size (default 30000)");

  EvalArgs ea;
  auto* se = app.add_subcommand("eval", "score hypotheses with TER and BLEU");
  se->add_option("--hyp", ea.hyp, "hypotheses")->required();
  se->add_option("--ref", ea.ref, "references")->required();
  se->add_option("--mt", ea.mt, "unedited mt for a do-nothing baseline");
  se->add_flag("--no-shifts", ea.no_shifts, "disable shift moves in TER");

  CoarseArgs ca;
  auto* sc = app.add_subcommand("coarse-filter", "drop ill-formed lines");
  sc->add_option("--in", ca.in, "input lines")->required();
  sc->add_option("--out", ca.out, "output file (default stdout)");
  sc->add_option("--min-tokens", ca.rules.min_tokens, "length rule lower bound (default 3)");
  sc->add_option("--max-tokens", ca.rules.max_tokens, "length rule upper bound (default 80)");
  sc->add_option("--min-ratio", ca.rules.min_alpha_punct_ratio,
                 "alpha-or-punct ratio bound (default 0.7)");
  sc->add_flag("--no-length-rule", ca.no_length, "disable the length rule");
  sc->add_flag("--no-charset-rule", ca.no_charset, "disable the character-ratio rule");
  sc->add_flag("--no-control-rule", ca.no_control, "disable the control-character rule");
  sc->add_flag("--no-uppercase-rule", ca.no_uppercase, "disable the all-uppercase rule");

  LmTrainArgs la;
  auto* sl = app.add_subcommand("lm-train", "estimate a trigram language model");
  sl->add_option("--pe", la.pe, "training sentences")->required();
  sl->add_option("--out", la.out, "model output file")->required();
  sl->add_option("--alpha", la.cfg.alpha, "add-alpha smoothing (default 0.1)");
  sl->add_option("--w-tri", la.cfg.weight_tri, "trigram weight (default 0.5)");
  sl->add_option("--w-bi", la.cfg.weight_bi, "bigram weight (default 0.3)");
  sl->add_option("--w-uni", la.cfg.weight_uni, "unigram weight (default 0.2)");

  LmSelectArgs lsa;
  auto* sls = app.add_subcommand("lm-select", "keep the best-scoring lines");
  sls->add_option("--lm", lsa.lm, "trained language model")->required();
  sls->add_option("--in", lsa.in, "candidate lines")->required();
  sls->add_option("--top-k", lsa.top_k, "lines to keep")->required();
  sls->add_option("--out", lsa.out, "output file (default stdout)");

  GenArgs ga;
  auto* sg = app.add_subcommand("gen-synthetic", "back-generate src/mt for pe lines");
  sg->add_option("--pe", ga.pe, "pe lines")->required();
  sg->add_option("--pe2src", ga.pe2src, "pe-to-src words checkpoint")->required();
  sg->add_option("--pe2mt", ga.pe2mt, "pe-to-mt words checkpoint")->required();
  sg->add_option("--out-src", ga.out_src, "generated src output")->required();
  sg->add_option("--out-mt", ga.out_mt, "generated mt output")->required();
  sg->add_option("--out-pe", ga.out_pe, "kept pe output")->required();
  sg->add_option("--max-len", ga.max_len, "decode length cap (default 80)");

  FilterArgs fa;
  auto* sf = app.add_subcommand("filter-ter", "nearest-neighbor selection on edit statistics");
  sf->add_option("--real-src", fa.real_src, "real src")->required();
  sf->add_option("--real-mt", fa.real_mt, "real mt")->required();
  sf->add_option("--real-pe", fa.real_pe, "real pe")->required();
  sf->add_option("--synth-src", fa.synth_src, "synthetic src")->required();
  sf->add_option("--synth-mt", fa.synth_mt, "synthetic mt")->required();
  sf->add_option("--synth-pe", fa.synth_pe, "synthetic pe")->required();
  sf->add_option("--target", fa.target, "triples to select")->required();
  sf->add_option("--subset", fa.subset, "candidate draw size (default 1000)");
  sf->add_option("--seed", fa.seed, "draw seed (default 1)");
  sf->add_flag("--no-shifts", fa.no_shifts, "disable shift moves in the features");
  sf->add_option("--out-src", fa.out_src, "selected src output")->required();
  sf->add_option("--out-mt", fa.out_mt, "selected mt output")->required();
  sf->add_option("--out-pe", fa.out_pe, "selected pe output")->required();

  TrainArgs tra;
  TrainOptions tro;
  auto* str_ = app.add_subcommand("train", "train a post-editing model");
  str_->add_option("--config", tra.config_path, "flat dotted-key config file");
  tro.arch = str_->add_option("--arch", tra.arch, "mono_source|chained (default mono_source)");
  tro.attention =
      str_->add_option("--attention", tra.attention, "global|forced (default forced)");
  tro.target_mode =
      str_->add_option("--target-mode", tra.target_mode, "ops|words (default ops)");
  tro.cell = str_->add_option("--cell", tra.cell, "lstm cell size (default 128)");
  tro.embed = str_->add_option("--embed", tra.embed, "embedding size (default 128)");
  tro.vocab_limit = str_->add_option("--vocab-limit", tra.vocab_limit, "max vocab (default 30000)");
  tro.maxout = str_->add_option("--maxout", tra.maxout, "maxout pieces (default 2)");
  tro.dropout = str_->add_option("--dropout", tra.dropout, "dropout rate (default 0.2)");
  tro.preset = str_->add_option("--preset", tra.preset, "real|synthetic schedule preset");
  tro.batch = str_->add_option("--batch-size", tra.batch, "batch size (default 32)");
  tro.lr = str_->add_option("--lr", tra.lr, "initial learning rate (default 1.0)");
  tro.decay = str_->add_option("--decay", tra.decay, "lr decay factor (default 0.8)");
  tro.decay_interval = str_->add_option("--decay-interval", tra.decay_interval,
                                        "epoch|half_epoch (default epoch)");
  tro.eval_every =
      str_->add_option("--eval-every", tra.eval_every, "steps between dev evals (default 200)");
  tro.max_steps = str_->add_option("--max-steps", tra.max_steps, "step budget (default 1000)");
  tro.patience =
      str_->add_option("--patience", tra.patience, "evals without a new best (default 20)");
  tro.oversample =
      str_->add_option("--oversample", tra.oversample, "copies of the real data (default 1)");
  tro.no_shifts = str_->add_flag("--no-shifts", tra.no_shifts, "disable shift moves in dev TER");
  tro.seed = str_->add_option("--seed", tra.seed, "model init + shuffle seed (default 1)");
  tro.train_mt = str_->add_option("--train-mt", tra.train_mt, "training mt");
  tro.train_pe = str_->add_option("--train-pe", tra.train_pe, "training pe");
  tro.train_src = str_->add_option("--train-src", tra.train_src, "training src (chained)");
  tro.dev_mt = str_->add_option("--dev-mt", tra.dev_mt, "dev mt");
  tro.dev_pe = str_->add_option("--dev-pe", tra.dev_pe, "dev pe");
  tro.dev_src = str_->add_option("--dev-src", tra.dev_src, "dev src (chained)");
  tro.synth_src = str_->add_option("--synth-src", tra.synth_src, "synthetic src");
  tro.synth_mt = str_->add_option("--synth-mt", tra.synth_mt, "synthetic mt");
  tro.synth_pe = str_->add_option("--synth-pe", tra.synth_pe, "synthetic pe");
  tro.train_input = str_->add_option("--train-input", tra.train_input, "words-mode input");
  tro.train_target = str_->add_option("--train-target", tra.train_target, "words-mode target");
  tro.dev_input = str_->add_option("--dev-input", tra.dev_input, "words-mode dev input");
  tro.dev_target = str_->add_option("--dev-target", tra.dev_target, "words-mode dev target");
  tro.checkpoint = str_->add_option("--checkpoint", tra.checkpoint, "checkpoint output path");
  tro.log = str_->add_option("--log", tra.log, "TSV training log path");

  DecodeArgs da;
  auto* sd = app.add_subcommand("decode", "run a trained checkpoint over a corpus");
  sd->add_option("--checkpoint", da.checkpoint, "trained model")->required();
  sd->add_option("--mt", da.mt, "mt hypotheses (ops-mode checkpoints)");
  sd->add_option("--src", da.src, "source sentences (chained checkpoints)");
  sd->add_option("--in", da.in, "input lines (words-mode checkpoints)");
  sd->add_option("--out", da.out, "output file (default stdout)");
  sd->add_option("--max-extra", da.max_extra, "op budget past |mt| (default 50)");
  sd->add_option("--max-len", da.max_len, "words-mode length cap (default 80)");
  sd->add_option("--threads", da.threads, "decode threads (default 1)");

  GradArgs gca;
  auto* sgc = app.add_subcommand("grad-check", "finite-difference check on a toy model");
  sgc->add_option("--arch", gca.arch, "mono_source|chained (default mono_source)");
  sgc->add_option("--attention", gca.attention, "global|forced (default forced)");
  sgc->add_option("--target-mode", gca.target_mode, "ops|words (default ops)");
  sgc->add_option("--cell", gca.cell, "cell size (default 3)");
  sgc->add_option("--embed", gca.embed, "embedding size (default 3)");
  sgc->add_option("--pieces", gca.pieces,
                  "maxout pieces; 1 keeps the readout smooth for differencing (default 1)");
  sgc->add_option("--samples", gca.samples, "entries sampled per tensor (default 200)");
  sgc->add_option("--seed", gca.seed, "init seed (default 1)");
  sgc->add_option("--step", gca.step, "finite-difference step (default 1e-3)");
  sgc->add_option("--threshold", gca.threshold, "max relative error allowed (default 1e-4)");

  int rc = 0;
  sx->callback([&]() { rc = cmd_extract(xa); });
  sa->callback([&]() { rc = cmd_apply(aa); });
  st->callback([&]() { rc = cmd_stats(ta); });
  sv->callback([&]() { rc = cmd_build_vocab(va); });
  se->callback([&]() { rc = cmd_eval(ea); });
  sc->callback([&]() { rc = cmd_coarse(ca); });
  sl->callback([&]() { rc = cmd_lm_train(la); });
  sls->callback([&]() { rc = cmd_lm_select(lsa); });
  sg->callback([&]() { rc = cmd_gen(ga); });
  sf->callback([&]() { rc = cmd_filter(fa); });
  str_->callback([&]() { rc = cmd_train(tra, tro); });
  sd->callback([&]() { rc = cmd_decode(da); });
  sgc->callback([&]() { rc = cmd_grad_check(gca); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ape::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
