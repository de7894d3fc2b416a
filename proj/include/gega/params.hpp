#pragma once

// Named parameter collections: initialization, iteration, binary serialization.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gega/tensor.hpp"

namespace gega {

// Ordered by name so iteration, init and serialization are deterministic.
using ParamStore = std::map<std::string, Tensor>;

inline Tensor init_uniform(const std::vector<std::size_t>& shape,
                           std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw TensorError("init_uniform: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(shape, -bound, bound, rng, true);
}

inline Tensor& fetch_param(ParamStore& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw TensorError("parameter not found: " + name);
  return it->second;
}

inline const Tensor& fetch_param(const ParamStore& params,
                                 const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw TensorError("parameter not found: " + name);
  return it->second;
}

// ---------------------------------------------------------------------------
// Binary tensor blocks. Each block: name length, name bytes, rank, dims,
// raw little-endian doubles. Used inside checkpoint files.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline std::uint64_t take_u64(const std::string& in, std::size_t& at) {
  if (at + 8 > in.size())
    throw TensorError("tensor block: truncated integer field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += 8;
  return v;
}

}  // namespace detail

inline void append_named_tensors(std::string& out, const ParamStore& params) {
  detail::put_u64(out, params.size());
  for (const auto& [name, tensor] : params) {
    detail::put_u64(out, name.size());
    out.append(name);
    detail::put_u64(out, tensor.ndim());
    for (std::size_t d = 0; d < tensor.ndim(); ++d)
      detail::put_u64(out, tensor.dim(d));
    const auto& vals = tensor.values();
    const std::size_t bytes = vals.size() * sizeof(double);
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, vals.data(), bytes);
  }
}

inline ParamStore read_named_tensors(const std::string& in, std::size_t& at,
                                     bool requires_grad) {
  ParamStore params;
  const std::uint64_t count = detail::take_u64(in, at);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = detail::take_u64(in, at);
    if (at + name_len > in.size())
      throw TensorError("tensor block: truncated name");
    std::string name = in.substr(at, name_len);
    at += name_len;
    const std::uint64_t rank = detail::take_u64(in, at);
    std::vector<std::size_t> shape;
    for (std::uint64_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::size_t>(detail::take_u64(in, at)));
    Tensor t = Tensor::zeros(shape);
    if (requires_grad) t.set_requires_grad(true);
    auto& vals = t.values();
    const std::size_t bytes = vals.size() * sizeof(double);
    if (at + bytes > in.size())
      throw TensorError("tensor block: truncated values for " + name);
    std::memcpy(vals.data(), in.data() + at, bytes);
    at += bytes;
    if (!params.emplace(std::move(name), std::move(t)).second)
      throw TensorError("tensor block: duplicate tensor name");
  }
  return params;
}

}  // namespace gega
