#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "ape/error.hpp"
#include "ape/token.hpp"

namespace ape {

// Translation edit rate with optional greedy block shifts, plus corpus BLEU-4.
// Scores are reported on a 0-100 scale with two decimals at the CLI.

struct TerStats {
  std::uint64_t insertions = 0;     // tokens added to hyp
  std::uint64_t deletions = 0;      // tokens removed from hyp
  std::uint64_t substitutions = 0;
  std::uint64_t shifts = 0;
  std::uint64_t ref_len = 0;
  bool empty_reference = false;

  std::uint64_t edits() const { return insertions + deletions + substitutions + shifts; }
  double ter() const {
    return static_cast<double>(edits()) / static_cast<double>(std::max<std::uint64_t>(ref_len, 1));
  }
};

namespace detail {

inline std::vector<int> intern(const Sentence& s, std::unordered_map<std::string, int>& table) {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (const auto& tok : s) {
    auto [it, fresh] = table.emplace(tok, static_cast<int>(table.size()));
    (void)fresh;
    ids.push_back(it->second);
  }
  return ids;
}

inline std::uint32_t lev_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::uint32_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      std::uint32_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0u : 1u);
      cur[j] = std::min({sub, prev[j] + 1u, cur[j - 1] + 1u});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct LevCounts {
  std::uint64_t ins = 0, del = 0, sub = 0;
};

// Full table + backtrace for edit-type counts. Preference on ties:
// match, then substitution, then deletion, then insertion.
inline LevCounts lev_counts(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::uint32_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<std::uint32_t>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      std::uint32_t sub = at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0u : 1u);
      at(i, j) = std::min({sub, at(i - 1, j) + 1u, at(i, j - 1) + 1u});
    }
  LevCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && hyp[i - 1] == ref[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ++c.sub;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.del;
      --i;
    } else {
      ++c.ins;
      --j;
    }
  }
  return c;
}

inline bool span_in(const std::vector<int>& ref, const std::vector<int>& h, std::size_t start,
                    std::size_t len) {
  if (ref.size() < len) return false;
  for (std::size_t r = 0; r + len <= ref.size(); ++r) {
    bool ok = true;
    for (std::size_t k = 0; k < len; ++k)
      if (ref[r + k] != h[start + k]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

inline std::vector<int> move_block(const std::vector<int>& h, std::size_t start, std::size_t len,
                                   std::size_t dest) {
  std::vector<int> rest;
  rest.reserve(h.size());
  for (std::size_t k = 0; k < h.size(); ++k)
    if (k < start || k >= start + len) rest.push_back(h[k]);
  std::vector<int> out;
  out.reserve(h.size());
  out.insert(out.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(dest));
  out.insert(out.end(), h.begin() + static_cast<std::ptrdiff_t>(start),
             h.begin() + static_cast<std::ptrdiff_t>(start + len));
  out.insert(out.end(), rest.begin() + static_cast<std::ptrdiff_t>(dest), rest.end());
  return out;
}

inline constexpr std::size_t kMaxShiftBlock = 10;

}  // namespace detail

// Greedy shifted TER. A block may move only if it occurs verbatim somewhere
// in the reference; a move is taken only while it strictly lowers the
// remaining edit distance. Iteration order (leftmost source span, shortest
// block, leftmost destination) breaks ties.
inline TerStats ter_sentence(const Sentence& hyp, const Sentence& ref, bool use_shifts = true) {
  TerStats out;
  if (ref.empty()) {
    out.insertions = hyp.size();
    out.ref_len = 1;
    out.empty_reference = true;
    return out;
  }
  out.ref_len = ref.size();
  std::unordered_map<std::string, int> table;
  std::vector<int> h = detail::intern(hyp, table);
  std::vector<int> r = detail::intern(ref, table);
  if (use_shifts) {
    while (true) {
      std::uint32_t base = detail::lev_distance(h, r);
      if (base == 0) break;
      std::uint32_t best_red = 0;
      std::vector<int> best_h;
      for (std::size_t start = 0; start < h.size(); ++start) {
        std::size_t max_len = std::min(detail::kMaxShiftBlock, h.size() - start);
        for (std::size_t len = 1; len <= max_len; ++len) {
          if (!detail::span_in(r, h, start, len)) continue;
          for (std::size_t dest = 0; dest + len <= h.size(); ++dest) {
            if (dest == start) continue;
            std::vector<int> cand = detail::move_block(h, start, len, dest);
            std::uint32_t dist = detail::lev_distance(cand, r);
            if (dist < base && base - dist > best_red) {
              best_red = base - dist;
              best_h = std::move(cand);
            }
          }
        }
      }
      if (best_red == 0) break;
      h = std::move(best_h);
      ++out.shifts;
    }
  }
  detail::LevCounts c = detail::lev_counts(h, r);
  out.insertions = c.ins;
  out.deletions = c.del;
  out.substitutions = c.sub;
  return out;
}

// Micro-average: total edits over total reference length, x100.
inline double ter_corpus(const std::vector<std::pair<Sentence, Sentence>>& hyp_ref,
                         bool use_shifts = true) {
  if (hyp_ref.empty()) throw EmptyCorpus("ter over empty corpus");
  std::uint64_t edits = 0, ref_len = 0;
  for (const auto& [hyp, ref] : hyp_ref) {
    TerStats s = ter_sentence(hyp, ref, use_shifts);
    edits += s.edits();
    ref_len += s.ref_len;
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(std::max<std::uint64_t>(ref_len, 1));
}

struct BleuScore {
  double score = 0.0;                     // 0-100
  std::array<double, 4> precisions{};     // smoothed for n >= 2
  double brevity_penalty = 1.0;
};

namespace detail {

inline void count_ngrams(const Sentence& s, std::size_t n,
                         std::unordered_map<std::string, std::uint32_t>& out) {
  if (s.size() < n) return;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      key += s[i + k];
      key += '\x1f';
    }
    ++out[key];
  }
}

}  // namespace detail

// Corpus BLEU-4: clipped counts, brevity penalty, add-one smoothing of the
// n >= 2 numerators and denominators.
inline BleuScore bleu_corpus(const std::vector<std::pair<Sentence, Sentence>>& hyp_ref) {
  if (hyp_ref.empty()) throw EmptyCorpus("bleu over empty corpus");
  std::array<std::uint64_t, 4> matched{}, total{};
  std::uint64_t hyp_len = 0, ref_len = 0;
  for (const auto& [hyp, ref] : hyp_ref) {
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::unordered_map<std::string, std::uint32_t> hc, rc;
      detail::count_ngrams(hyp, n, hc);
      detail::count_ngrams(ref, n, rc);
      for (const auto& [key, c] : hc) {
        auto it = rc.find(key);
        if (it != rc.end()) matched[n - 1] += std::min(c, it->second);
        total[n - 1] += c;
      }
    }
  }
  BleuScore b;
  for (std::size_t n = 0; n < 4; ++n) {
    double num = static_cast<double>(matched[n]), den = static_cast<double>(total[n]);
    if (n >= 1) {
      num += 1.0;
      den += 1.0;
    }
    b.precisions[n] = den > 0.0 ? num / den : 0.0;
  }
  if (hyp_len == 0) {
    b.brevity_penalty = std::numeric_limits<double>::min();
    return b;  // score 0
  }
  b.brevity_penalty =
      hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  if (b.precisions[0] <= 0.0) return b;  // no unigram match: score 0
  double log_sum = 0.0;
  for (double p : b.precisions) log_sum += std::log(p);
  b.score = 100.0 * b.brevity_penalty * std::exp(log_sum / 4.0);
  return b;
}

}  // namespace ape
