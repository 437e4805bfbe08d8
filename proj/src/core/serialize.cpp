#include "lpvae/core/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "lpvae/core/adam.hpp"

namespace lpvae {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'V', 'B'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IngestError("blob: truncated file");
  return v;
}

}  // namespace

void write_blob(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestError("blob: cannot open for writing: " + path);
  f.write(kMagic, 4);
  put<uint32_t>(f, kVersion);
  put<uint32_t>(f, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(f, static_cast<uint32_t>(t.ndim()));
    for (size_t i = 0; i < t.ndim(); ++i) put<int64_t>(f, t.dim(i));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!f) throw IngestError("blob: write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("blob: cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IngestError("blob: bad magic in " + path);
  const uint32_t version = get<uint32_t>(f);
  if (version != kVersion) throw IngestError("blob: unsupported version in " + path);
  const uint32_t n = get<uint32_t>(f);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t name_len = get<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t ndim = get<uint32_t>(f);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = get<int64_t>(f);
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw IngestError("blob: truncated tensor data in " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_params(const std::string& path, const nn::ParamList& params) {
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(params.size());
  for (const auto& p : params) entries.emplace_back(p.name, p.var->value);
  write_blob(path, entries);
}

void load_params(const std::string& path, const nn::ParamList& params) {
  auto entries = read_blob(path);
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ContractError("load_params: missing entry " + p.name);
    if (!it->second->same_shape(p.var->value))
      throw ContractError("load_params: shape mismatch for " + p.name);
    p.var->value = *it->second;
  }
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  auto it = by_name.find("adam.t");
  if (it == by_name.end()) throw ContractError("adam state: missing step counter");
  t_ = static_cast<int64_t>((*it->second)[0]);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto im = by_name.find("adam.m." + params_[i].name);
    auto iv = by_name.find("adam.v." + params_[i].name);
    if (im == by_name.end() || iv == by_name.end())
      throw ContractError("adam state: missing moments for " + params_[i].name);
    if (!im->second->same_shape(slots_[i].m) || !iv->second->same_shape(slots_[i].v))
      throw ContractError("adam state: shape mismatch for " + params_[i].name);
    slots_[i].m = *im->second;
    slots_[i].v = *iv->second;
  }
}

}  // namespace lpvae
