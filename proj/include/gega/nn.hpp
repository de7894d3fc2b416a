#pragma once

// Small building blocks shared by the context encoder and the pair refiner:
// linear layers, multi-head self-attention, and a post-norm transformer block.

#include <cmath>
#include <string>
#include <vector>

#include "gega/params.hpp"
#include "gega/tensor.hpp"

namespace gega {

// x: (n, d_in), w: (d_in, d_out), b: (d_out) broadcast over rows.
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& w,
                     const Tensor& b) {
  return tape.add(tape.matmul(x, w), b);
}

struct AttnResult {
  Tensor out;                     // (n, d_model)
  std::vector<Tensor> head_attn;  // per head, (n, n) row-stochastic
};

// Full QKV projections, per-head column slices, scaled dot-product rows.
inline AttnResult multi_head_attention(Tape& tape, const Tensor& x,
                                       const ParamStore& params,
                                       const std::string& prefix,
                                       std::size_t heads) {
  const std::size_t d = x.dim(1);
  if (heads == 0 || d % heads != 0)
    throw TensorError("attention: model width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = linear(tape, x, fetch_param(params, prefix + "wq"),
                    fetch_param(params, prefix + "bq"));
  Tensor k = linear(tape, x, fetch_param(params, prefix + "wk"),
                    fetch_param(params, prefix + "bk"));
  Tensor v = linear(tape, x, fetch_param(params, prefix + "wv"),
                    fetch_param(params, prefix + "bv"));

  AttnResult res;
  std::vector<Tensor> ctx;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * dk, hi = lo + dk;
    Tensor qh = tape.slice_cols(q, lo, hi);
    Tensor kh = tape.slice_cols(k, lo, hi);
    Tensor vh = tape.slice_cols(v, lo, hi);
    Tensor scores = tape.scalar_mul(tape.matmul(qh, tape.transpose(kh)), scale);
    Tensor attn = tape.softmax(scores, 1);
    res.head_attn.push_back(attn);
    ctx.push_back(tape.matmul(attn, vh));
  }
  Tensor merged = ctx.size() == 1 ? ctx[0] : tape.concat(ctx, 1);
  res.out = linear(tape, merged, fetch_param(params, prefix + "wo"),
                   fetch_param(params, prefix + "bo"));
  return res;
}

struct BlockResult {
  Tensor out;
  std::vector<Tensor> head_attn;
};

// attention -> residual + affine layer norm -> feed-forward -> residual.
inline BlockResult transformer_block(Tape& tape, const Tensor& x,
                                     const ParamStore& params,
                                     const std::string& prefix,
                                     std::size_t heads) {
  AttnResult att = multi_head_attention(tape, x, params, prefix, heads);
  Tensor normed = tape.layer_norm(tape.add(x, att.out));
  Tensor la = tape.add(tape.mul(normed, fetch_param(params, prefix + "ln_g")),
                       fetch_param(params, prefix + "ln_b"));
  Tensor hidden = tape.relu(linear(tape, la,
                                   fetch_param(params, prefix + "ffn_w1"),
                                   fetch_param(params, prefix + "ffn_b1")));
  Tensor ffn = linear(tape, hidden, fetch_param(params, prefix + "ffn_w2"),
                      fetch_param(params, prefix + "ffn_b2"));
  return BlockResult{tape.add(la, ffn), std::move(att.head_attn)};
}

// Registers one block's parameters under prefix. d_ff is fixed at 2 * d.
inline void init_block_params(ParamStore& params, const std::string& prefix,
                              std::size_t d, std::mt19937_64& rng) {
  const std::size_t d_ff = 2 * d;
  for (const char* nm : {"wq", "wk", "wv", "wo"})
    params.emplace(prefix + nm, init_uniform({d, d}, d, rng));
  for (const char* nm : {"bq", "bk", "bv", "bo"})
    params.emplace(prefix + nm, init_uniform({d}, d, rng));
  params.emplace(prefix + "ln_g", Tensor::param({d}, std::vector<double>(d, 1.0)));
  params.emplace(prefix + "ln_b", Tensor::param({d}, std::vector<double>(d, 0.0)));
  params.emplace(prefix + "ffn_w1", init_uniform({d, d_ff}, d, rng));
  params.emplace(prefix + "ffn_b1", init_uniform({d_ff}, d, rng));
  params.emplace(prefix + "ffn_w2", init_uniform({d_ff, d}, d_ff, rng));
  params.emplace(prefix + "ffn_b2", init_uniform({d}, d_ff, rng));
}

}  // namespace gega
