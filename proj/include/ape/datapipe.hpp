#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ape/infer.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"
#include "ape/rng.hpp"
#include "ape/token.hpp"
#include "ape/vocab.hpp"

namespace ape {

struct Triple {
  Sentence src, mt, pe;
};

// ---- corpus io -----------------------------------------------------------------

inline std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void save_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  for (const auto& l : lines) os << l << "\n";
  if (!os) throw IoError("write failed for '" + path + "'");
}

// Loads line-aligned files; any count disagreement is an error naming both
// files and their counts.
inline std::vector<std::vector<std::string>> load_parallel(const std::vector<std::string>& paths) {
  std::vector<std::vector<std::string>> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_lines(p));
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].size() != out[0].size())
      throw LineCountMismatch(paths[0] + " has " + std::to_string(out[0].size()) + " lines, " +
                              paths[i] + " has " + std::to_string(out[i].size()));
  return out;
}

inline std::vector<Triple> load_triples(const std::string& src_path, const std::string& mt_path,
                                        const std::string& pe_path) {
  auto files = load_parallel({src_path, mt_path, pe_path});
  std::vector<Triple> triples(files[0].size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    triples[i].src = split_tokens(files[0][i]);
    triples[i].mt = split_tokens(files[1][i]);
    triples[i].pe = split_tokens(files[2][i]);
  }
  return triples;
}

inline Vocab build_word_vocab(const std::vector<Sentence>& corpus, std::size_t limit) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) ++counts[tok];
  return Vocab::from_counts(word_reserved_tokens(), counts, limit, kWordUnkId);
}

// ---- coarse filtering ------------------------------------------------------------

// Every rule can be switched off; with all off the stream passes unchanged.
struct CoarseRules {
  bool check_length = true;
  std::size_t min_tokens = 3, max_tokens = 80;
  bool check_charset = true;
  double min_alpha_punct_ratio = 0.7;  // over non-space characters
  bool check_control = true;
  bool check_uppercase = true;
};

inline bool coarse_pass(const std::string& line, const CoarseRules& r) {
  if (r.check_length) {
    std::size_t n = split_tokens(line).size();
    if (n < r.min_tokens || n > r.max_tokens) return false;
  }
  if (r.check_control) {
    for (unsigned char c : line)
      if (c < 0x20 || c == 0x7f) return false;
  }
  if (r.check_charset) {
    std::size_t non_space = 0, good = 0;
    for (unsigned char c : line) {
      if (c < 0x80 && is_space_char(static_cast<char>(c))) continue;
      ++non_space;
      // bytes outside ascii are multi-byte letters as far as this filter cares
      if (c >= 0x80 || std::isalpha(c) || std::ispunct(c)) ++good;
    }
    if (non_space == 0) return false;
    if (static_cast<double>(good) / static_cast<double>(non_space) < r.min_alpha_punct_ratio)
      return false;
  }
  if (r.check_uppercase) {
    bool any_alpha = false, any_lower = false;
    for (unsigned char c : line) {
      if (c < 0x80 && std::isalpha(c)) {
        any_alpha = true;
        if (std::islower(c)) any_lower = true;
      }
    }
    if (any_alpha && !any_lower) return false;
  }
  return true;
}

inline std::vector<std::string> coarse_filter(const std::vector<std::string>& lines,
                                              const CoarseRules& r) {
  std::vector<std::string> out;
  for (const auto& l : lines)
    if (coarse_pass(l, r)) out.push_back(l);
  return out;
}

// ---- trigram language model ---------------------------------------------------

struct TrigramLmConfig {
  double alpha = 0.1;  // add-alpha smoothing inside each order
  double weight_tri = 0.5, weight_bi = 0.3, weight_uni = 0.2;
};

// Interpolated add-alpha trigram model. Events are the trained words, UNK,
// and the end marker; two start markers pad every history. Scores are mean
// log-probability per event so lines of different lengths compare fairly.
class TrigramLm {
 public:
  TrigramLm() = default;
  explicit TrigramLm(TrigramLmConfig cfg) : cfg_(cfg) {}

  static constexpr int kIdBits = 21;
  static constexpr std::uint64_t kIdMask = (1ull << kIdBits) - 1;

  void train(const std::vector<Sentence>& corpus) {
    if (corpus.empty()) throw EmptyCorpus("language model needs sentences");
    for (const auto& sent : corpus)
      for (const auto& tok : sent)
        if (!word_ids_.count(tok)) {
          int id = static_cast<int>(words_.size());
          word_ids_.emplace(tok, id);
          words_.push_back(tok);
        }
    if (words_.size() + 3 > (1ull << kIdBits)) throw Error("lm vocabulary too large to pack");
    uni_.clear();
    bi_.clear();
    tri_.clear();
    ctx1_.clear();
    ctx2_.clear();
    events_ = 0;
    for (const auto& sent : corpus) {
      std::vector<int> seq = pad_ids(sent);
      for (std::size_t i = 2; i < seq.size(); ++i) {
        ++events_;
        ++uni_[static_cast<std::uint64_t>(seq[i])];
        ++ctx1_[static_cast<std::uint64_t>(seq[i - 1])];
        ++bi_[pack2(seq[i - 1], seq[i])];
        ++ctx2_[pack2(seq[i - 2], seq[i - 1])];
        ++tri_[pack3(seq[i - 2], seq[i - 1], seq[i])];
      }
    }
  }

  std::size_t vocab_words() const { return words_.size(); }
  // words + UNK + end marker
  std::size_t event_count() const { return words_.size() + 2; }

  int token_id(const Token& tok) const {
    auto it = word_ids_.find(tok);
    return it == word_ids_.end() ? unk_id() : it->second;
  }
  int unk_id() const { return static_cast<int>(words_.size()); }
  int eos_id() const { return static_cast<int>(words_.size()) + 1; }
  int bos_id() const { return static_cast<int>(words_.size()) + 2; }

  // p(event | u, v), interpolated over the three orders.
  double cond_prob(int u, int v, int event) const {
    double V = static_cast<double>(event_count());
    double a = cfg_.alpha;
    double p1 = (count(uni_, static_cast<std::uint64_t>(event)) + a) /
                (static_cast<double>(events_) + a * V);
    double p2 = (count(bi_, pack2(v, event)) + a) /
                (count(ctx1_, static_cast<std::uint64_t>(v)) + a * V);
    double p3 = (count(tri_, pack3(u, v, event)) + a) / (count(ctx2_, pack2(u, v)) + a * V);
    return cfg_.weight_uni * p1 + cfg_.weight_bi * p2 + cfg_.weight_tri * p3;
  }

  // Total log-probability of the sentence events (end marker included)
  // divided by the number of scored events.
  double score(const Sentence& sent) const {
    std::vector<int> seq = pad_ids(sent);
    double total = 0.0;
    for (std::size_t i = 2; i < seq.size(); ++i)
      total += std::log(cond_prob(seq[i - 2], seq[i - 1], seq[i]));
    return total / static_cast<double>(seq.size() - 2);
  }

  double score_line(const std::string& line) const { return score(split_tokens(line)); }

  const TrigramLmConfig& config() const { return cfg_; }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << "ape-trigram-lm 1\n";
    os.precision(17);
    os << "alpha " << cfg_.alpha << "\n";
    os << "weights " << cfg_.weight_tri << " " << cfg_.weight_bi << " " << cfg_.weight_uni
       << "\n";
    os << "vocab " << words_.size() << "\n";
    for (const auto& w : words_) os << w << "\n";
    write_counts(os, "counts1", uni_);
    write_counts(os, "counts2", bi_);
    write_counts(os, "counts3", tri_);
    if (!os) throw IoError("write failed for '" + path + "'");
  }

  static TrigramLm load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "ape-trigram-lm 1")
      throw ParseError(path + ": not a trigram lm file");
    TrigramLm lm;
    auto expect = [&](const char* key) {
      if (!std::getline(is, line)) throw ParseError(path + ": truncated header");
      std::istringstream ls(line);
      std::string k;
      ls >> k;
      if (k != key) throw ParseError(path + ": expected '" + key + "', got '" + line + "'");
      return ls;
    };
    {
      auto ls = expect("alpha");
      if (!(ls >> lm.cfg_.alpha)) throw ParseError(path + ": bad alpha");
    }
    {
      auto ls = expect("weights");
      if (!(ls >> lm.cfg_.weight_tri >> lm.cfg_.weight_bi >> lm.cfg_.weight_uni))
        throw ParseError(path + ": bad weights");
    }
    std::size_t W = 0;
    {
      auto ls = expect("vocab");
      if (!(ls >> W)) throw ParseError(path + ": bad vocab count");
    }
    for (std::size_t i = 0; i < W; ++i) {
      if (!std::getline(is, line)) throw ParseError(path + ": vocab truncated");
      lm.word_ids_.emplace(line, static_cast<int>(lm.words_.size()));
      lm.words_.push_back(line);
    }
    lm.read_counts(is, "counts1", lm.uni_, path);
    lm.read_counts(is, "counts2", lm.bi_, path);
    lm.read_counts(is, "counts3", lm.tri_, path);
    // context totals and the event count fall out of the stored counts
    for (const auto& [k, c] : lm.uni_) {
      (void)k;
      lm.events_ += c;
    }
    for (const auto& [k, c] : lm.bi_) lm.ctx1_[(k >> kIdBits) & kIdMask] += c;
    for (const auto& [k, c] : lm.tri_) lm.ctx2_[k >> kIdBits] += c;
    return lm;
  }

 private:
  static std::uint64_t pack2(int a, int b) {
    return (static_cast<std::uint64_t>(a) << kIdBits) | static_cast<std::uint64_t>(b);
  }
  static std::uint64_t pack3(int a, int b, int c) {
    return (static_cast<std::uint64_t>(a) << (2 * kIdBits)) |
           (static_cast<std::uint64_t>(b) << kIdBits) | static_cast<std::uint64_t>(c);
  }

  std::vector<int> pad_ids(const Sentence& sent) const {
    std::vector<int> seq;
    seq.reserve(sent.size() + 3);
    seq.push_back(bos_id());
    seq.push_back(bos_id());
    for (const auto& tok : sent) seq.push_back(token_id(tok));
    seq.push_back(eos_id());
    return seq;
  }

  static double count(const std::unordered_map<std::uint64_t, std::uint64_t>& m,
                      std::uint64_t key) {
    auto it = m.find(key);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  }

  static void write_counts(std::ostream& os, const char* name,
                           const std::unordered_map<std::uint64_t, std::uint64_t>& m) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> rows(m.begin(), m.end());
    std::sort(rows.begin(), rows.end());
    os << name << " " << rows.size() << "\n";
    for (const auto& [k, c] : rows) os << k << " " << c << "\n";
  }

  void read_counts(std::istream& is, const char* name,
                   std::unordered_map<std::uint64_t, std::uint64_t>& m, const std::string& path) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path + ": missing " + name);
    std::istringstream ls(line);
    std::string k;
    std::size_t n = 0;
    ls >> k >> n;
    if (k != name) throw ParseError(path + ": expected " + std::string(name));
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(is, line)) throw ParseError(path + ": " + name + " truncated");
      std::istringstream row(line);
      std::uint64_t key = 0, c = 0;
      if (!(row >> key >> c)) throw ParseError(path + ": bad count row '" + line + "'");
      m[key] = c;
    }
  }

  TrigramLmConfig cfg_;
  std::vector<Token> words_;
  std::unordered_map<Token, int> word_ids_;
  std::unordered_map<std::uint64_t, std::uint64_t> uni_, bi_, tri_, ctx1_, ctx2_;
  std::uint64_t events_ = 0;
};

inline TrigramLm lm_train(const std::vector<Sentence>& corpus, TrigramLmConfig cfg = {}) {
  TrigramLm lm(cfg);
  lm.train(corpus);
  return lm;
}

// Keep the top_k best-scoring lines, best first; equal scores stay in input
// order.
inline std::vector<std::string> lm_select(const TrigramLm& lm,
                                          const std::vector<std::string>& lines,
                                          std::size_t top_k) {
  if (top_k < 1) throw Error("top_k must be at least 1");
  std::vector<std::pair<double, std::size_t>> scored(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) scored[i] = {lm.score_line(lines[i]), i};
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t n = std::min(top_k, lines.size());
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(lines[scored[i].second]);
  return out;
}

// ---- synthetic triple generation ---------------------------------------------

struct GenResult {
  std::vector<Triple> triples;
  std::vector<std::pair<std::size_t, std::string>> failures;  // (line index, reason)
};

// Back-generate src and mt for each pe line with two word-mode models; pe is
// kept verbatim. Lines that fail to decode are skipped and reported.
template <typename T>
GenResult gen_synthetic(const std::vector<Sentence>& pe_lines, const MonoSourceModel<T>& pe2src,
                        const MonoSourceModel<T>& pe2mt, std::size_t max_len = 80) {
  if (pe2src.cfg.target_mode != TargetMode::words || pe2mt.cfg.target_mode != TargetMode::words)
    throw WrongMode("synthetic generation needs words-mode models");
  GenResult res;
  for (std::size_t i = 0; i < pe_lines.size(); ++i) {
    try {
      Triple t;
      t.pe = pe_lines[i];
      t.src = decode_words(pe2src, pe2src.input_vocab.encode(pe_lines[i]), max_len);
      t.mt = decode_words(pe2mt, pe2mt.input_vocab.encode(pe_lines[i]), max_len);
      res.triples.push_back(std::move(t));
    } catch (const Error& e) {
      res.failures.emplace_back(i, e.what());
    }
  }
  return res;
}

// ---- nearest-neighbor filtering on edit statistics ------------------------------

// How far the mt hypothesis sits from its pe: the four edit rates plus the
// rate total, all relative to reference length.
struct TerFeature {
  double ins_rate = 0, del_rate = 0, sub_rate = 0, shift_rate = 0, ter = 0;

  static TerFeature of(const Triple& t, bool use_shifts = true) {
    TerStats s = ter_sentence(t.mt, t.pe, use_shifts);
    double rl = static_cast<double>(std::max<std::size_t>(s.ref_len, 1));
    TerFeature f;
    f.ins_rate = static_cast<double>(s.insertions) / rl;
    f.del_rate = static_cast<double>(s.deletions) / rl;
    f.sub_rate = static_cast<double>(s.substitutions) / rl;
    f.shift_rate = static_cast<double>(s.shifts) / rl;
    f.ter = s.ter();
    return f;
  }

  double dist2(const TerFeature& o) const {
    double d0 = ins_rate - o.ins_rate, d1 = del_rate - o.del_rate, d2 = sub_rate - o.sub_rate;
    double d3 = shift_rate - o.shift_rate, d4 = ter - o.ter;
    return d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3 + d4 * d4;
  }
};

// Core selection loop on precomputed features; returns indices into the
// synthetic pool, in selection order. Walks the real set cyclically; per
// real item draws subset_size distinct unselected candidates and keeps the
// nearest (ties: lowest index). A candidate is never selected twice.
inline std::vector<std::size_t> ter_filter_indices(const std::vector<TerFeature>& real,
                                                   const std::vector<TerFeature>& synth,
                                                   std::size_t target_size,
                                                   std::size_t subset_size, std::uint64_t seed) {
  if (real.empty()) throw EmptyCorpus("no real triples to match against");
  if (target_size < 1) throw Error("target size must be at least 1");
  if (subset_size < 1) throw Error("subset size must be at least 1");
  if (synth.size() < target_size)
    throw PoolExhausted("synthetic pool of " + std::to_string(synth.size()) +
                        " cannot fill target of " + std::to_string(target_size));
  Rng rng(seed);
  std::vector<std::size_t> avail(synth.size());
  for (std::size_t i = 0; i < avail.size(); ++i) avail[i] = i;
  std::vector<std::size_t> picked;
  picked.reserve(target_size);
  std::size_t r = 0;
  while (picked.size() < target_size) {
    if (avail.empty()) throw PoolExhausted("no unselected synthetic candidates left");
    std::size_t k = std::min(subset_size, avail.size());
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t swap_at = j + rng.below(avail.size() - j);
      std::swap(avail[j], avail[swap_at]);
    }
    std::size_t best_pos = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double d = real[r].dist2(synth[avail[j]]);
      if (d < best_d || (d == best_d && avail[j] < avail[best_pos])) {
        best_d = d;
        best_pos = j;
      }
    }
    picked.push_back(avail[best_pos]);
    avail[best_pos] = avail.back();
    avail.pop_back();
    r = (r + 1) % real.size();
  }
  return picked;
}

inline std::vector<Triple> ter_filter(const std::vector<Triple>& real,
                                      const std::vector<Triple>& synthetic,
                                      std::size_t target_size, std::size_t subset_size = 1000,
                                      std::uint64_t seed = 1, bool use_shifts = true) {
  std::vector<TerFeature> rf(real.size()), sf(synthetic.size());
  for (std::size_t i = 0; i < real.size(); ++i) rf[i] = TerFeature::of(real[i], use_shifts);
  for (std::size_t i = 0; i < synthetic.size(); ++i)
    sf[i] = TerFeature::of(synthetic[i], use_shifts);
  std::vector<std::size_t> idx = ter_filter_indices(rf, sf, target_size, subset_size, seed);
  std::vector<Triple> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(synthetic[i]);
  return out;
}

}  // namespace ape
