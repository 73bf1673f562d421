#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/rng.hpp"
#include "pcotta/tape.hpp"
#include "pcotta/tensor.hpp"

namespace pcotta {

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts are unsupported");

/// A snapshot container: named float32 tensors packed into one binary blob,
/// indexed by a plain-text manifest (name, shape, byte offset) plus free-form
/// meta keys. Written as <stem>.manifest and <stem>.blob.
struct BlobFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, TensorF>> tensors;

  void add(const std::string& name, const TensorF& t) { tensors.emplace_back(name, t); }

  const TensorF& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw config_error("blob: missing tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }

  std::string meta_or(const std::string& key, const std::string& fallback) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }

  int meta_int(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw config_error("blob: missing meta key '" + key + "'");
    return std::stoi(it->second);
  }

  uint64_t blob_checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [n, t] : tensors) h = fnv1a64(t.data.data(), t.data.size() * 4, h);
    return h;
  }

  void save(const std::string& stem) const {
    std::ofstream blob(stem + ".blob", std::ios::binary);
    if (!blob) throw config_error("cannot write " + stem + ".blob");
    std::ostringstream man;
    man << "pcotta-blob 1\n";
    for (const auto& [k, v] : meta) man << "meta " << k << " " << v << "\n";
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)blob_checksum());
    man << "meta checksum " << hex << "\n";
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      man << "tensor " << name << " ";
      for (size_t i = 0; i < t.shape.size(); ++i) man << (i ? "," : "") << t.shape[i];
      if (t.shape.empty()) man << "1";
      man << " " << offset << " " << t.data.size() << "\n";
      blob.write(reinterpret_cast<const char*>(t.data.data()),
                 std::streamsize(t.data.size() * 4));
      offset += t.data.size() * 4;
    }
    blob.close();
    std::ofstream mf(stem + ".manifest");
    if (!mf) throw config_error("cannot write " + stem + ".manifest");
    mf << man.str();
  }

  static BlobFile load(const std::string& stem) {
    std::ifstream mf(stem + ".manifest");
    if (!mf) throw config_error("cannot open " + stem + ".manifest");
    std::ifstream blob(stem + ".blob", std::ios::binary);
    if (!blob) throw config_error("cannot open " + stem + ".blob");
    blob.seekg(0, std::ios::end);
    uint64_t blob_len = uint64_t(blob.tellg());

    BlobFile out;
    std::string line;
    if (!std::getline(mf, line) || line != "pcotta-blob 1")
      throw parse_error(stem + ".manifest: bad magic line");
    int lineno = 1;
    while (std::getline(mf, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string kind;
      is >> kind;
      if (kind == "meta") {
        std::string k, v;
        is >> k;
        std::getline(is, v);
        if (!v.empty() && v[0] == ' ') v.erase(0, 1);
        out.meta[k] = v;
      } else if (kind == "tensor") {
        std::string name, shape_str;
        uint64_t offset = 0, count = 0;
        is >> name >> shape_str >> offset >> count;
        if (is.fail())
          throw parse_error(stem + ".manifest: malformed tensor line " + std::to_string(lineno));
        std::vector<int> shape;
        std::istringstream ss(shape_str);
        std::string dim;
        while (std::getline(ss, dim, ',')) shape.push_back(std::stoi(dim));
        if (offset + count * 4 > blob_len)
          throw parse_error(stem + ": tensor '" + name + "' exceeds blob length " +
                            std::to_string(blob_len));
        TensorF t(shape);
        if (t.data.size() != count)
          throw parse_error(stem + ": tensor '" + name + "' count mismatch");
        blob.seekg(std::streamoff(offset));
        blob.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(count * 4));
        if (!blob) throw parse_error(stem + ": short read for tensor '" + name + "'");
        out.tensors.emplace_back(name, std::move(t));
      } else {
        throw parse_error(stem + ".manifest: unknown record '" + kind + "' at line " +
                          std::to_string(lineno));
      }
    }
    auto it = out.meta.find("checksum");
    if (it != out.meta.end()) {
      char hex[32];
      std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)out.blob_checksum());
      if (it->second != hex)
        throw parse_error(stem + ": blob checksum mismatch (manifest " + it->second +
                          ", actual " + hex + ")");
    }
    return out;
  }
};

/// Checksum of a parameter list's current values (order-sensitive).
template <typename T>
uint64_t params_checksum(const std::vector<Parameter<T>*>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : params) {
    h = fnv1a64(p->name.data(), p->name.size(), h);
    h = fnv1a64(p->value.data.data(), p->value.data.size() * sizeof(T), h);
  }
  return h;
}

}  // namespace pcotta
