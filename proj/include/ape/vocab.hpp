#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ape/error.hpp"

namespace ape {

// Reserved slot ids. Word vocabularies reserve pad/unk/bos/eos; edit-operation
// vocabularies reserve pad/keep/del/eos plus the unknown-word insertion.
inline constexpr int kPadId = 0;
inline constexpr int kWordUnkId = 1;
inline constexpr int kWordBosId = 2;
inline constexpr int kWordEosId = 3;

inline constexpr int kOpKeepId = 1;
inline constexpr int kOpDelId = 2;
inline constexpr int kOpEosId = 3;
inline constexpr int kOpInsUnkId = 4;

inline const std::vector<std::string>& word_reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<unk>", "<bos>", "<eos>"};
  return r;
}

inline const std::vector<std::string>& op_reserved_tokens() {
  static const std::vector<std::string> r = {"PAD", "KEEP", "DEL", "EOS", "INS|UNK"};
  return r;
}

// Frequency-capped bidirectional token<->id map. Reserved symbols take the
// lowest ids in the order given; the rest are assigned by descending count
// with lexicographic tie-break, so ids are deterministic for a given corpus.
class Vocab {
 public:
  Vocab() = default;

  static Vocab from_counts(const std::vector<std::string>& reserved,
                           const std::unordered_map<std::string, std::uint64_t>& counts,
                           std::size_t limit, int unk_slot) {
    if (limit < reserved.size())
      throw Error("vocab limit " + std::to_string(limit) + " smaller than reserved set of " +
                  std::to_string(reserved.size()));
    Vocab v;
    v.unk_id_ = unk_slot;
    for (const auto& tok : reserved) v.push(tok);
    std::vector<std::pair<std::string, std::uint64_t>> cand;
    cand.reserve(counts.size());
    for (const auto& [tok, c] : counts)
      if (!v.ids_.count(tok)) cand.emplace_back(tok, c);
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (const auto& [tok, c] : cand) {
      (void)c;
      if (v.size() >= limit) break;
      v.push(tok);
    }
    return v;
  }

  // Rebuild with ids fixed by position (checkpoint load).
  static Vocab from_ordered(const std::vector<std::string>& tokens, int unk_slot) {
    Vocab v;
    v.unk_id_ = unk_slot;
    for (const auto& tok : tokens) {
      if (v.ids_.count(tok)) throw Error("duplicate vocab token '" + tok + "'");
      v.push(tok);
    }
    if (unk_slot >= 0 && static_cast<std::size_t>(unk_slot) >= v.size())
      throw Error("unk slot out of range");
    return v;
  }

  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? unk_id_ : it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  int exact_id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? -1 : it->second;
  }

  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= toks_.size())
      throw Error("vocab id " + std::to_string(id) + " out of range");
    return toks_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return toks_.size(); }
  int unk_id() const { return unk_id_; }
  const std::vector<std::string>& tokens() const { return toks_; }

 private:
  void push(const std::string& tok) {
    ids_.emplace(tok, static_cast<int>(toks_.size()));
    toks_.push_back(tok);
  }

  std::vector<std::string> toks_;
  std::unordered_map<std::string, int> ids_;
  int unk_id_ = -1;
};

}  // namespace ape
