#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ape/model.hpp"

namespace ape {

// On-disk model format: a line-oriented text header (format version, config,
// vocabularies with their unknown-slot id, tensor names and shapes), a lone
// "data" line, then every tensor's values as little-endian f32 in header
// order. Values are widened back to the working precision on load.

inline constexpr const char* kCheckpointMagic = "ape-checkpoint 1";

namespace detail {

inline void write_f32_le(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                        static_cast<unsigned char>((u >> 8) & 0xff),
                        static_cast<unsigned char>((u >> 16) & 0xff),
                        static_cast<unsigned char>((u >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline float read_f32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw CheckpointError("truncated tensor payload");
  std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                    (static_cast<std::uint32_t>(b[2]) << 16) |
                    (static_cast<std::uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline void write_header_common(std::ostream& os, const ModelConfig& cfg) {
  os << kCheckpointMagic << "\n";
  os << "architecture " << to_string(cfg.architecture) << "\n";
  os << "attention " << to_string(cfg.attention) << "\n";
  os << "target_mode " << to_string(cfg.target_mode) << "\n";
  os << "cell_size " << cfg.cell_size << "\n";
  os << "embedding_size " << cfg.embedding_size << "\n";
  os << "vocab_limit " << cfg.vocab_limit << "\n";
  os << "maxout_pieces " << cfg.maxout_pieces << "\n";
  os << "dropout_p " << format_double(cfg.dropout_p) << "\n";
  os << "seed " << cfg.seed << "\n";
}

inline void write_vocab(std::ostream& os, const std::string& name, const Vocab& v) {
  os << "vocab " << name << " " << v.size() << " " << v.unk_id() << "\n";
  for (const auto& tok : v.tokens()) os << tok << "\n";
}

template <typename T>
void write_tensors(std::ostream& os, const std::vector<const Parameter<T>*>& params) {
  for (const auto* p : params)
    os << "tensor " << p->name << " " << p->value.rows() << " " << p->value.cols() << "\n";
  os << "data\n";
  for (const auto* p : params)
    for (T x : p->value.v) write_f32_le(os, static_cast<float>(x));
}

struct ParsedHeader {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Vocab>> vocabs;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> tensors;
};

inline ParsedHeader parse_header(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic)
    throw CheckpointError(path + ": not a checkpoint (bad magic line)");
  ParsedHeader h;
  while (std::getline(is, line)) {
    if (line == "data") return h;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "vocab") {
      std::string name;
      std::size_t count = 0;
      int unk = -1;
      if (!(ls >> name >> count >> unk))
        throw CheckpointError(path + ": malformed vocab line '" + line + "'");
      std::vector<std::string> toks;
      toks.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::string tok;
        if (!std::getline(is, tok))
          throw CheckpointError(path + ": vocab '" + name + "' truncated");
        toks.push_back(tok);
      }
      h.vocabs.emplace_back(name, Vocab::from_ordered(toks, unk));
    } else if (key == "tensor") {
      std::string name;
      std::size_t r = 0, c = 0;
      if (!(ls >> name >> r >> c))
        throw CheckpointError(path + ": malformed tensor line '" + line + "'");
      h.tensors.emplace_back(name, r, c);
    } else {
      std::string value;
      ls >> std::ws;
      std::getline(ls, value);
      if (key.empty() || value.empty())
        throw CheckpointError(path + ": malformed header line '" + line + "'");
      h.config[key] = value;
    }
  }
  throw CheckpointError(path + ": header has no data section");
}

inline const std::string& need(const ParsedHeader& h, const std::string& key,
                               const std::string& path) {
  auto it = h.config.find(key);
  if (it == h.config.end()) throw CheckpointError(path + ": missing config key '" + key + "'");
  return it->second;
}

inline ModelConfig config_from_header(const ParsedHeader& h, const std::string& path) {
  ModelConfig cfg;
  cfg.architecture = architecture_from_string(need(h, "architecture", path));
  cfg.attention = attention_from_string(need(h, "attention", path));
  cfg.target_mode = target_mode_from_string(need(h, "target_mode", path));
  cfg.cell_size = std::stoull(need(h, "cell_size", path));
  cfg.embedding_size = std::stoull(need(h, "embedding_size", path));
  cfg.vocab_limit = std::stoull(need(h, "vocab_limit", path));
  cfg.maxout_pieces = std::stoull(need(h, "maxout_pieces", path));
  cfg.dropout_p = std::stod(need(h, "dropout_p", path));
  cfg.seed = std::stoull(need(h, "seed", path));
  return cfg;
}

inline const Vocab& need_vocab(const ParsedHeader& h, const std::string& name,
                               const std::string& path) {
  for (const auto& [n, v] : h.vocabs)
    if (n == name) return v;
  throw CheckpointError(path + ": missing vocab section '" + name + "'");
}

template <typename T>
void read_tensors(std::istream& is, const ParsedHeader& h, std::vector<Parameter<T>*> params,
                  const std::string& path) {
  std::map<std::string, Parameter<T>*> by_name;
  for (auto* p : params)
    if (!by_name.emplace(p->name, p).second)
      throw CheckpointError(path + ": duplicate parameter name '" + p->name + "'");
  if (h.tensors.size() != params.size())
    throw CheckpointError(path + ": header lists " + std::to_string(h.tensors.size()) +
                          " tensors, model has " + std::to_string(params.size()));
  std::map<std::string, bool> seen;
  for (const auto& [name, r, c] : h.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError(path + ": unknown tensor '" + name + "'");
    if (seen[name]) throw CheckpointError(path + ": tensor '" + name + "' listed twice");
    seen[name] = true;
    Parameter<T>* p = it->second;
    if (p->value.rows() != r || p->value.cols() != c)
      throw CheckpointError(path + ": tensor '" + name + "' has shape [" + std::to_string(r) +
                            "," + std::to_string(c) + "], model expects " + p->value.dims());
    for (auto& x : p->value.v) x = static_cast<T>(read_f32_le(is));
  }
  is.peek();
  if (!is.eof()) throw CheckpointError(path + ": trailing bytes after tensor payload");
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const MonoSourceModel<T>& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  detail::write_header_common(os, m.cfg);
  detail::write_vocab(os, "input", m.input_vocab);
  detail::write_vocab(os, "target", m.target_vocab);
  detail::write_tensors(os, m.parameters());
  if (!os) throw IoError("write failed for '" + path + "'");
}

template <typename T>
void save_checkpoint(const std::string& path, const ChainedModel<T>& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  detail::write_header_common(os, m.cfg);
  detail::write_vocab(os, "src", m.src_vocab);
  detail::write_vocab(os, "mt", m.mt_vocab);
  detail::write_vocab(os, "op", m.op_vocab);
  detail::write_tensors(os, m.parameters());
  if (!os) throw IoError("write failed for '" + path + "'");
}

template <typename T>
void save_checkpoint(const std::string& path, const AnyModel<T>& m) {
  std::visit([&](const auto& inner) { save_checkpoint(path, inner); }, m);
}

template <typename T>
AnyModel<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path + "'");
  detail::ParsedHeader h = detail::parse_header(is, path);
  ModelConfig cfg = detail::config_from_header(h, path);
  if (cfg.architecture == Architecture::mono_source) {
    MonoSourceModel<T> m(cfg, detail::need_vocab(h, "input", path),
                         detail::need_vocab(h, "target", path));
    detail::read_tensors<T>(is, h, m.parameters(), path);
    return AnyModel<T>(std::move(m));
  }
  ChainedModel<T> m(cfg, detail::need_vocab(h, "src", path), detail::need_vocab(h, "mt", path),
                    detail::need_vocab(h, "op", path));
  detail::read_tensors<T>(is, h, m.parameters(), path);
  return AnyModel<T>(std::move(m));
}

}  // namespace ape
