#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ape/error.hpp"
#include "ape/token.hpp"
#include "ape/vocab.hpp"

namespace ape {

// Edit scripts rewrite an MT hypothesis into its post-edited version using
// keep / delete / insert(word) plus a terminal end marker. Substitution is
// deliberately absent: a replaced word costs one delete plus one insert.

enum class OpKind : std::uint8_t { keep, del, ins, eos };

struct EditOp {
  OpKind kind = OpKind::keep;
  Token word;  // payload for ins only

  static EditOp keep() { return {OpKind::keep, {}}; }
  static EditOp del() { return {OpKind::del, {}}; }
  static EditOp eos() { return {OpKind::eos, {}}; }
  static EditOp ins(Token w) { return {OpKind::ins, std::move(w)}; }

  bool operator==(const EditOp&) const = default;
};

using EditScript = std::vector<EditOp>;

inline std::string op_symbol(const EditOp& op) {
  switch (op.kind) {
    case OpKind::keep: return "KEEP";
    case OpKind::del: return "DEL";
    case OpKind::eos: return "EOS";
    case OpKind::ins: return "INS|" + op.word;
  }
  throw Error("bad op kind");
}

// Minimal keep/del/ins script turning mt into pe. Canonical form: keep is
// taken whenever it lies on a shortest path; in a divergent region every del
// precedes every ins. Never emits eos.
inline EditScript extract_ops(const Sentence& mt, const Sentence& pe) {
  const std::size_t n = mt.size(), m = pe.size();
  // d[i][j] = cost of rewriting mt[i:] into pe[j:]
  std::vector<std::uint32_t> d((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, m) = static_cast<std::uint32_t>(n - i);
  for (std::size_t j = 0; j <= m; ++j) at(n, j) = static_cast<std::uint32_t>(m - j);
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      std::uint32_t best = 1 + std::min(at(i + 1, j), at(i, j + 1));
      if (mt[i] == pe[j]) best = std::min(best, at(i + 1, j + 1));
      at(i, j) = best;
    }
  }
  EditScript script;
  script.reserve(at(0, 0) + std::min(n, m));
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && mt[i] == pe[j] && at(i, j) == at(i + 1, j + 1)) {
      script.push_back(EditOp::keep());
      ++i, ++j;
    } else if (i < n && at(i, j) == at(i + 1, j) + 1) {
      script.push_back(EditOp::del());
      ++i;
    } else {
      script.push_back(EditOp::ins(pe[j]));
      ++j;
    }
  }
  return script;
}

// Replays a script against mt. Eos (or running out of ops) keeps every
// remaining mt token. unk_token is substituted for inserted "UNK" payloads.
inline Sentence apply_ops(const Sentence& mt, const EditScript& script,
                          const std::string& unk_token = "UNK") {
  std::size_t consume = 0;
  for (const auto& op : script) {
    if (op.kind == OpKind::eos) break;
    if (op.kind == OpKind::keep || op.kind == OpKind::del) ++consume;
  }
  if (consume > mt.size())
    throw OverrunError("script consumes " + std::to_string(consume) + " tokens but mt has " +
                       std::to_string(mt.size()));
  Sentence out;
  out.reserve(mt.size() + script.size());
  std::size_t ptr = 0;
  for (const auto& op : script) {
    if (op.kind == OpKind::eos) break;
    if (op.kind == OpKind::keep)
      out.push_back(mt[ptr++]);
    else if (op.kind == OpKind::del)
      ++ptr;
    else
      out.push_back(op.word == "UNK" ? unk_token : op.word);
  }
  // implicit keep for anything the script never reached
  for (std::size_t k = ptr; k < mt.size(); ++k) out.push_back(mt[k]);
  return out;
}

// --- text format: one script per line, ops space-separated -----------------

inline std::string format_script(const EditScript& script) {
  std::string out;
  for (std::size_t i = 0; i < script.size(); ++i) {
    if (i) out += ' ';
    out += op_symbol(script[i]);
  }
  return out;
}

inline EditOp parse_op(std::string_view tok, std::size_t line_no, std::size_t col) {
  auto fail = [&](const std::string& why) {
    throw ParseError("line " + std::to_string(line_no) + " col " + std::to_string(col) + ": " +
                     why + " '" + std::string(tok) + "'");
  };
  if (tok == "KEEP") return EditOp::keep();
  if (tok == "DEL") return EditOp::del();
  if (tok == "EOS") return EditOp::eos();
  if (tok.size() > 4 && tok.substr(0, 4) == "INS|") {
    std::string_view w = tok.substr(4);
    if (!valid_token(w)) fail("bad insertion payload in");
    return EditOp::ins(Token(w));
  }
  fail("unrecognized op token");
  return {};  // unreachable
}

inline EditScript parse_script(std::string_view line, std::size_t line_no = 1) {
  EditScript script;
  bool saw_eos = false;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space_char(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !is_space_char(line[i])) ++i;
    if (i == start) break;
    std::size_t col = start + 1;
    if (saw_eos)
      throw ParseError("line " + std::to_string(line_no) + " col " + std::to_string(col) +
                       ": op after EOS");
    EditOp op = parse_op(line.substr(start, i - start), line_no, col);
    if (op.kind == OpKind::eos) saw_eos = true;
    script.push_back(std::move(op));
  }
  return script;
}

// --- corpus statistics ------------------------------------------------------

struct OpStats {
  std::unordered_map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;

  double percent(const std::string& symbol) const {
    auto it = counts.find(symbol);
    if (it == counts.end() || total == 0) return 0.0;
    return 100.0 * static_cast<double>(it->second) / static_cast<double>(total);
  }

  // descending count, lexicographic tie-break
  std::vector<std::pair<std::string, std::uint64_t>> ranked() const {
    std::vector<std::pair<std::string, std::uint64_t>> r(counts.begin(), counts.end());
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return r;
  }
};

inline OpStats script_stats(const std::vector<EditScript>& corpus) {
  OpStats s;
  for (const auto& script : corpus)
    for (const auto& op : script) {
      ++s.counts[op_symbol(op)];
      ++s.total;
    }
  if (s.total == 0) throw EmptyCorpus("no ops in script corpus");
  return s;
}

// Op vocabulary: reserved slots then the most frequent insertions.
inline Vocab build_op_vocab(const std::vector<EditScript>& corpus, std::size_t limit) {
  if (limit < op_reserved_tokens().size())
    throw Error("op vocab limit must be >= " + std::to_string(op_reserved_tokens().size()));
  if (corpus.empty()) throw EmptyCorpus("no scripts for op vocab");
  std::unordered_map<std::string, std::uint64_t> ins_counts;
  for (const auto& script : corpus)
    for (const auto& op : script)
      if (op.kind == OpKind::ins) ++ins_counts[op_symbol(op)];
  return Vocab::from_counts(op_reserved_tokens(), ins_counts, limit, kOpInsUnkId);
}

inline int encode_op(const EditOp& op, const Vocab& v) { return v.id(op_symbol(op)); }

inline std::vector<int> encode_ops(const EditScript& script, const Vocab& v) {
  std::vector<int> ids;
  ids.reserve(script.size());
  for (const auto& op : script) ids.push_back(encode_op(op, v));
  return ids;
}

inline EditOp op_from_id(int id, const Vocab& v) {
  if (id == kPadId) throw Error("pad id is not an op");
  if (id == kOpKeepId) return EditOp::keep();
  if (id == kOpDelId) return EditOp::del();
  if (id == kOpEosId) return EditOp::eos();
  return parse_op(v.token(id), 0, 0);
}

inline bool id_consumes_mt(int id) { return id == kOpKeepId || id == kOpDelId; }

}  // namespace ape
