#pragma once

// Context encoder: vocabulary, a small trainable transformer producing token
// embeddings plus per-head attention, and two-window handling for long inputs.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "gega/corpus.hpp"
#include "gega/nn.hpp"
#include "gega/params.hpp"
#include "gega/tensor.hpp"

namespace gega {

// -------------------------------------------------------------------------
// Vocabulary: the three structural tokens first, then sorted corpus tokens.
// -------------------------------------------------------------------------

class Vocab {
 public:
  Vocab() = default;

  static Vocab build(const Dataset& ds) {
    std::set<std::string> seen;
    for (const Document& doc : ds.docs)
      for (const auto& sent : doc.sentences)
        for (const auto& tok : sent) seen.insert(tok);
    Vocab v;
    v.tokens_ = {kClsToken, kSepToken, kMarkerToken};
    for (const auto& tok : seen)
      if (tok != kClsToken && tok != kSepToken && tok != kMarkerToken)
        v.tokens_.push_back(tok);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = i;
    return v;
  }

  static Vocab from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
      if (!v.ids_.emplace(v.tokens_[i], i).second)
        throw DataError("vocabulary has duplicate token: " + v.tokens_[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::size_t id(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it == ids_.end())
      throw DataError("token not in vocabulary: " + tok);
    return it->second;
  }

  std::vector<std::size_t> encode(const std::vector<std::string>& toks) const {
    std::vector<std::size_t> ids;
    ids.reserve(toks.size());
    for (const auto& tok : toks) ids.push_back(id(tok));
    return ids;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> ids_;
};

// -------------------------------------------------------------------------
// Encoder interface.
// -------------------------------------------------------------------------

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t num_heads = 2;
  std::size_t num_layers = 2;
  std::size_t vocab_size = 0;
  std::size_t max_window = 512;

  void validate() const {
    if (d_model == 0 || num_heads == 0 || num_layers == 0 || vocab_size == 0)
      throw TensorError("encoder config: sizes must be positive");
    if (d_model % num_heads != 0)
      throw TensorError("encoder config: d_model " + std::to_string(d_model) +
                        " not divisible by num_heads " +
                        std::to_string(num_heads));
    if (max_window < 2)
      throw TensorError("encoder config: max_window must be at least 2");
  }
};

struct EncoderOutput {
  Tensor h;                       // (tokens, d_model)
  std::vector<Tensor> head_attn;  // per head, (tokens, tokens)
};

class ContextEncoder {
 public:
  virtual ~ContextEncoder() = default;
  virtual std::size_t d_model() const = 0;
  virtual std::size_t num_heads() const = 0;
  virtual std::size_t max_window() const = 0;
  // token_ids.size() must be <= max_window; positions are sequence-local.
  virtual EncoderOutput encode(Tape& tape,
                               const std::vector<std::size_t>& token_ids) = 0;
};

// -------------------------------------------------------------------------
// Trainable transformer encoder. Attention comes from the final layer.
// -------------------------------------------------------------------------

class TransformerContextEncoder : public ContextEncoder {
 public:
  TransformerContextEncoder(EncoderConfig cfg, const ParamStore& params)
      : cfg_(cfg), params_(params) {
    cfg_.validate();
  }

  static void init_params(const EncoderConfig& cfg, ParamStore& params,
                          std::mt19937_64& rng) {
    cfg.validate();
    params.emplace("encoder.tok_emb",
                   init_uniform({cfg.vocab_size, cfg.d_model}, cfg.d_model,
                                rng));
    params.emplace("encoder.pos_emb",
                   init_uniform({cfg.max_window, cfg.d_model}, cfg.d_model,
                                rng));
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
      init_block_params(params, layer_prefix(l), cfg.d_model, rng);
  }

  std::size_t d_model() const override { return cfg_.d_model; }
  std::size_t num_heads() const override { return cfg_.num_heads; }
  std::size_t max_window() const override { return cfg_.max_window; }
  const EncoderConfig& config() const { return cfg_; }

  EncoderOutput encode(Tape& tape,
                       const std::vector<std::size_t>& token_ids) override {
    if (token_ids.empty())
      throw TensorError("encode: empty token sequence");
    if (token_ids.size() > cfg_.max_window)
      throw TensorError("encode: sequence length " +
                        std::to_string(token_ids.size()) +
                        " exceeds window " + std::to_string(cfg_.max_window));
    for (std::size_t id : token_ids)
      if (id >= cfg_.vocab_size)
        throw TensorError("encode: token id " + std::to_string(id) +
                          " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));

    std::vector<std::size_t> positions(token_ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    Tensor x = tape.add(
        tape.gather_rows(fetch_param(params_, "encoder.tok_emb"), token_ids),
        tape.gather_rows(fetch_param(params_, "encoder.pos_emb"), positions));

    EncoderOutput out;
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
      BlockResult block =
          transformer_block(tape, x, params_, layer_prefix(l), cfg_.num_heads);
      x = block.out;
      if (l + 1 == cfg_.num_layers) out.head_attn = std::move(block.head_attn);
    }
    out.h = x;
    return out;
  }

 private:
  static std::string layer_prefix(std::size_t l) {
    return "encoder.layer" + std::to_string(l) + ".";
  }

  EncoderConfig cfg_;
  const ParamStore& params_;
};

// -------------------------------------------------------------------------
// Long inputs: two maximal windows, averaged where they overlap.
// -------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> iota_range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> idx(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
  return idx;
}

// Picks the (rows x cols) block of a, offset into its local coordinates.
inline Tensor attn_block(Tape& tape, const Tensor& a, std::size_t row_lo,
                         std::size_t row_hi, std::size_t col_lo,
                         std::size_t col_hi, std::size_t local_offset) {
  Tensor rows = tape.gather_rows(
      a, iota_range(row_lo - local_offset, row_hi - local_offset));
  return tape.slice_cols(rows, col_lo - local_offset, col_hi - local_offset);
}

}  // namespace detail

inline EncoderOutput encode_windowed(
    Tape& tape, ContextEncoder& enc,
    const std::vector<std::size_t>& token_ids) {
  const std::size_t len = token_ids.size();
  const std::size_t win = enc.max_window();
  if (len <= win) return enc.encode(tape, token_ids);
  if (len > 2 * win - 1)
    throw TensorError("encode_windowed: length " + std::to_string(len) +
                      " exceeds the two-window limit of " +
                      std::to_string(2 * win - 1));

  const std::size_t off = len - win;  // second window starts here
  std::vector<std::size_t> first(token_ids.begin(), token_ids.begin() + win);
  std::vector<std::size_t> second(token_ids.begin() + off, token_ids.end());
  EncoderOutput w1 = enc.encode(tape, first);
  EncoderOutput w2 = enc.encode(tape, second);

  // Row bands in document coordinates: leading [0, off), shared [off, win),
  // trailing [win, len). The shared band is resident in both windows.
  Tensor h_top = tape.gather_rows(w1.h, detail::iota_range(0, off));
  Tensor h_mid = tape.scalar_mul(
      tape.add(tape.gather_rows(w1.h, detail::iota_range(off, win)),
               tape.gather_rows(w2.h, detail::iota_range(0, win - off))),
      0.5);
  Tensor h_bot = tape.gather_rows(w2.h, detail::iota_range(win - off, win));

  EncoderOutput out;
  out.h = tape.concat({h_top, h_mid, h_bot}, 0);

  for (std::size_t head = 0; head < w1.head_attn.size(); ++head) {
    const Tensor& a1 = w1.head_attn[head];
    const Tensor& a2 = w2.head_attn[head];
    Tensor top = tape.concat(
        {detail::attn_block(tape, a1, 0, off, 0, off, 0),
         detail::attn_block(tape, a1, 0, off, off, win, 0),
         Tensor::zeros({off, len - win})},
        1);
    Tensor mid = tape.concat(
        {detail::attn_block(tape, a1, off, win, 0, off, 0),
         tape.scalar_mul(
             tape.add(detail::attn_block(tape, a1, off, win, off, win, 0),
                      detail::attn_block(tape, a2, off, win, off, win, off)),
             0.5),
         detail::attn_block(tape, a2, off, win, win, len, off)},
        1);
    Tensor bot = tape.concat(
        {Tensor::zeros({len - win, off}),
         detail::attn_block(tape, a2, win, len, off, win, off),
         detail::attn_block(tape, a2, win, len, win, len, off)},
        1);
    out.head_attn.push_back(
        tape.normalize_rows(tape.concat({top, mid, bot}, 0)));
  }
  return out;
}

}  // namespace gega
