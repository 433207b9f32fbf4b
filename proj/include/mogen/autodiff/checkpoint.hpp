#pragma once

// Versioned binary checkpoint container: header (magic, format version,
// module name, tensor manifest with names/shapes/dtype, metadata blob),
// then raw payloads in manifest order. Little-endian throughout.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mogen/autodiff/optim.hpp"
#include "mogen/autodiff/tensor.hpp"

namespace mogen::ad {

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<T> data;
};

template <typename T>
struct Checkpoint {
  std::string module;
  std::vector<NamedTensor<T>> tensors;
  std::string meta;  // free-form (JSON) config blob

  const NamedTensor<T>* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_str(os, ckpt.module);
  detail::write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    detail::write_str(os, t.name);
    const std::uint8_t dt = detail::dtype_code<T>();
    os.write(reinterpret_cast<const char*>(&dt), 1);
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
  }
  detail::write_str(os, ckpt.meta);
  for (const auto& t : ckpt.tensors)
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version) + " in " + path);
  Checkpoint<T> ckpt;
  ckpt.module = detail::read_str(is);
  const std::uint32_t count = detail::read_u32(is);
  std::vector<std::uint8_t> dtypes(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor<T> t;
    t.name = detail::read_str(is);
    is.read(reinterpret_cast<char*>(&dtypes[i]), 1);
    const std::uint32_t ndim = detail::read_u32(is);
    t.shape.resize(ndim);
    for (auto& d : t.shape) d = static_cast<int>(detail::read_u32(is));
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.meta = detail::read_str(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& t = ckpt.tensors[i];
    const auto n = static_cast<std::size_t>(numel_of(t.shape));
    t.data.resize(n);
    if (dtypes[i] == detail::dtype_code<T>()) {
      is.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(n * sizeof(T)));
    } else if (dtypes[i] == 0) {  // stored f32, loading as double
      std::vector<float> raw(n);
      is.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      for (std::size_t j = 0; j < n; ++j) t.data[j] = static_cast<T>(raw[j]);
    } else {  // stored f64, loading as float
      std::vector<double> raw(n);
      is.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
      for (std::size_t j = 0; j < n; ++j) t.data[j] = static_cast<T>(raw[j]);
    }
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
  return ckpt;
}

// Snapshot an entire parameter store (plus optional extra tensors such as
// optimizer state) into a container.
template <typename T>
Checkpoint<T> checkpoint_from_params(const std::string& module,
                                     const ParamStore<T>& params,
                                     std::string meta = "{}") {
  Checkpoint<T> ckpt;
  ckpt.module = module;
  ckpt.meta = std::move(meta);
  for (const auto& [name, v] : params.entries())
    ckpt.tensors.push_back({name, v.shape(), v.val()});
  return ckpt;
}

// Restore parameter values by name; every store entry must be present with
// a matching shape.
template <typename T>
void load_params(const Checkpoint<T>& ckpt, ParamStore<T>& params) {
  for (const auto& [name, v] : params.entries()) {
    const auto* t = ckpt.find(name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (t->shape != v.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': " +
                               shape_str(t->shape) + " vs " + shape_str(v.shape()));
    Var<T> dst = v;
    dst.val() = t->data;
  }
}

}  // namespace mogen::ad
