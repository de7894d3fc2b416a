#pragma once

// The relation-extraction chain over an encoded document: pooled entity
// vectors, concentrated attention graphs, graph convolution, a refining
// transformer stack, collaborative pair signals, and grouped bilinear scores.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gega/corpus.hpp"
#include "gega/encoder.hpp"
#include "gega/nn.hpp"
#include "gega/params.hpp"
#include "gega/tensor.hpp"

namespace gega {

struct GegaConfig {
  std::size_t num_heads = 2;
  std::size_t gnn_layers = 2;
  std::size_t enc_layers = 3;
  std::size_t num_class = 97;
  std::size_t num_labels_cap = 4;
  double evi_thresh = 0.2;
  std::size_t bilinear_groups = 0;  // 0 picks one group per 64 channels

  std::size_t resolved_groups(std::size_t d_model) const {
    if (bilinear_groups > 0) return bilinear_groups;
    const std::size_t g = (d_model + 32) / 64;
    return g == 0 ? 1 : g;
  }

  void validate(std::size_t d_model) const {
    if (num_heads == 0 || d_model % num_heads != 0)
      throw TensorError("model config: width " + std::to_string(d_model) +
                        " not divisible by " + std::to_string(num_heads) +
                        " heads");
    if (gnn_layers < 1)
      throw TensorError("model config: need at least one graph layer");
    if (enc_layers < 3)
      throw TensorError(
          "model config: refiner needs at least 3 layers so the last three "
          "can be averaged");
    if (num_class < 2)
      throw TensorError("model config: num_class must include the null class");
    const std::size_t g = resolved_groups(d_model);
    if (d_model % g != 0)
      throw TensorError("model config: width " + std::to_string(d_model) +
                        " not divisible into " + std::to_string(g) +
                        " bilinear groups");
  }
};

// -------------------------------------------------------------------------
// Chain stages as free functions.
// -------------------------------------------------------------------------

// Soft-max-style pooling of one entity's mention rows of h.
inline Tensor entity_embed(Tape& tape, const Tensor& h,
                           const std::vector<std::size_t>& positions) {
  if (positions.empty())
    throw TensorError("entity_embed: entity has no mentions");
  return tape.logsumexp(tape.gather_rows(h, positions), 0);
}

// Per-head re-weighted token graph: softmax((hWq)(hWk)^T / sqrt(dk)) rows.
inline std::vector<Tensor> attention_concentration(Tape& tape, const Tensor& h,
                                                   const ParamStore& params,
                                                   std::size_t heads) {
  const std::size_t d = h.dim(1);
  if (heads == 0 || d % heads != 0)
    throw TensorError("attention concentration: bad head count");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / heads));
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < heads; ++i) {
    const std::string prefix = "gega.ac.head" + std::to_string(i) + ".";
    Tensor q = tape.matmul(h, fetch_param(params, prefix + "wq"));
    Tensor k = tape.matmul(h, fetch_param(params, prefix + "wk"));
    Tensor logits = tape.scalar_mul(tape.matmul(q, tape.transpose(k)), scale);
    out.push_back(tape.softmax(logits, 1));
  }
  return out;
}

// Per head: repeated graph propagation of the head's input slice with a
// running residual sum, then heads merged through an output projection.
inline Tensor multi_graphconv(Tape& tape, const Tensor& x,
                              const std::vector<Tensor>& attn,
                              const ParamStore& params, std::size_t layers) {
  const std::size_t heads = attn.size();
  const std::size_t d = x.dim(1);
  if (heads == 0 || d % heads != 0)
    throw TensorError("graph conv: bad head count");
  if (layers < 1) throw TensorError("graph conv: need at least one layer");
  const std::size_t dh = d / heads;

  std::vector<Tensor> merged;
  for (std::size_t i = 0; i < heads; ++i) {
    Tensor slice = tape.slice_cols(x, i * dh, (i + 1) * dh);
    Tensor mixed = tape.matmul(attn[i], slice);
    Tensor acc = slice;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string name = "gega.mgc.head" + std::to_string(i) + ".layer" +
                               std::to_string(l) + ".w";
      acc = tape.add(tape.relu(tape.matmul(mixed, fetch_param(params, name))),
                     acc);
    }
    merged.push_back(acc);
  }
  Tensor cat = merged.size() == 1 ? merged[0] : tape.concat(merged, 1);
  return tape.matmul(cat, fetch_param(params, "gega.mgc.wo"));
}

struct RefinerOutput {
  Tensor h;                           // mean of the last three hidden states
  Tensor attn;                        // row-normalized mean attention
  std::vector<Tensor> layer_h;        // every layer's hidden state
  std::vector<Tensor> layer_attn;     // every layer's head-averaged attention
};

inline RefinerOutput transformer_enc(Tape& tape, const Tensor& x,
                                     const ParamStore& params,
                                     std::size_t heads, std::size_t layers) {
  if (layers < 3)
    throw TensorError(
        "refiner: need at least 3 layers so the last three can be averaged");
  RefinerOutput out;
  Tensor cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = "gega.enc.layer" + std::to_string(l) + ".";
    BlockResult block = transformer_block(tape, cur, params, prefix, heads);
    cur = block.out;
    Tensor attn_sum = block.head_attn[0];
    for (std::size_t h = 1; h < block.head_attn.size(); ++h)
      attn_sum = tape.add(attn_sum, block.head_attn[h]);
    out.layer_h.push_back(cur);
    out.layer_attn.push_back(
        tape.scalar_mul(attn_sum, 1.0 / double(block.head_attn.size())));
  }
  Tensor h_sum = tape.add(tape.add(out.layer_h[layers - 3],
                                   out.layer_h[layers - 2]),
                          out.layer_h[layers - 1]);
  out.h = tape.scalar_mul(h_sum, 1.0 / 3.0);
  Tensor a_sum = tape.add(tape.add(out.layer_attn[layers - 3],
                                   out.layer_attn[layers - 2]),
                          out.layer_attn[layers - 1]);
  out.attn = tape.normalize_rows(tape.scalar_mul(a_sum, 1.0 / 3.0));
  return out;
}

// One entity's aggregated attention row: mean over its mention rows.
inline Tensor entity_attention(Tape& tape, const Tensor& attn,
                               const std::vector<std::size_t>& positions) {
  if (positions.empty())
    throw TensorError("entity_attention: entity has no mentions");
  return tape.mean(tape.gather_rows(attn, positions), 0);
}

struct PairSignals {
  Tensor q;         // distribution over tokens, structural tokens excluded
  Tensor p;         // distribution over sentences
  bool degenerate = false;
};

// Token importance as the product of the two entities' attention rows,
// restricted to real tokens and renormalized; sentence importance by
// summing within each sentence span.
inline PairSignals pair_signals(Tape& tape, const Tensor& a_es,
                                const Tensor& a_eo, const FlatIndex& flat) {
  const std::size_t n = flat.num_tokens();
  if (a_es.ndim() != 1 || a_es.dim(0) != n || a_eo.ndim() != 1 ||
      a_eo.dim(0) != n)
    throw TensorError("pair_signals: attention rows must match token count");
  if (n < 3)
    throw TensorError("pair_signals: document has no real tokens");

  std::vector<double> mask_vals(n, 1.0);
  std::size_t real_tokens = n;
  for (std::size_t i = 0; i < n; ++i)
    if (flat.is_special(i)) {
      mask_vals[i] = 0.0;
      --real_tokens;
    }
  Tensor mask = Tensor::vec(mask_vals);

  PairSignals sig;
  Tensor raw = tape.mul(mask, tape.mul(a_es, a_eo));
  double mass = 0.0;
  for (double v : raw.values()) mass += v;
  if (mass < 1e-30) {
    // Disjoint attention supports: fall back to uniform over real tokens.
    std::vector<double> uni(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (mask_vals[i] > 0.0) uni[i] = 1.0 / double(real_tokens);
    sig.q = Tensor::vec(uni);
    sig.degenerate = true;
  } else {
    sig.q = tape.normalize(raw);
  }

  const std::size_t sents = flat.num_sentences();
  Tensor indicator = Tensor::zeros({sents, n});
  for (std::size_t t = 0; t < n; ++t)
    if (flat.sentence_of[t] >= 0)
      indicator.at(std::size_t(flat.sentence_of[t]), t) = 1.0;
  sig.p = tape.matmul(indicator, sig.q);
  return sig;
}

// c = tanh(W [entity ; H^T q] + b); w is (d, 2d).
inline Tensor pair_context(Tape& tape, const Tensor& ent, const Tensor& h,
                           const Tensor& q, const Tensor& w, const Tensor& b) {
  Tensor pooled = tape.matmul(tape.transpose(h), q);
  Tensor joint = tape.concat({ent, pooled}, 0);
  return tape.tanh(tape.add(tape.matmul(w, joint), b));
}

// Grouped bilinear: per group the outer product of the two context slices,
// flattened and scored against each relation's weight row.
inline Tensor relation_scores(Tape& tape, const Tensor& c_es,
                              const Tensor& c_eo, const Tensor& w,
                              const Tensor& b, std::size_t groups) {
  const std::size_t d = c_es.dim(0);
  if (groups == 0 || d % groups != 0)
    throw TensorError("relation_scores: width " + std::to_string(d) +
                      " not divisible into " + std::to_string(groups) +
                      " groups");
  const std::size_t k = d / groups;
  Tensor es_row = tape.reshape(c_es, {1, d});
  Tensor eo_row = tape.reshape(c_eo, {1, d});
  std::vector<Tensor> feats;
  for (std::size_t g = 0; g < groups; ++g) {
    Tensor a = tape.reshape(tape.slice_cols(es_row, g * k, (g + 1) * k),
                            {k, 1});
    Tensor bt = tape.slice_cols(eo_row, g * k, (g + 1) * k);
    feats.push_back(tape.reshape(tape.matmul(a, bt), {k * k}));
  }
  Tensor feat = feats.size() == 1 ? feats[0] : tape.concat(feats, 0);
  return tape.add(tape.matmul(w, feat), b);
}

// Relations scoring above the null class, best first, at most cap kept.
// Returned ids are sorted ascending.
inline std::vector<int> decide_relations(const std::vector<double>& scores,
                                         std::size_t cap) {
  if (scores.empty()) throw TensorError("decide_relations: empty scores");
  std::vector<int> above;
  for (std::size_t r = 1; r < scores.size(); ++r)
    if (scores[r] > scores[0]) above.push_back(int(r));
  std::sort(above.begin(), above.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (above.size() > cap) above.resize(cap);
  std::sort(above.begin(), above.end());
  return above;
}

inline std::vector<std::size_t> select_evidence(const std::vector<double>& p,
                                                double thresh) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > thresh) out.push_back(j);
  return out;
}

// -------------------------------------------------------------------------
// Whole-document forward pass.
// -------------------------------------------------------------------------

struct PairResult {
  std::size_t head = 0, tail = 0;
  Tensor scores;      // (num_class), null class at index 0
  Tensor token_prob;  // (num_tokens)
  Tensor sent_prob;   // (num_sentences)
  bool degenerate_signal = false;
};

struct DocResult {
  FlatIndex flat;
  EncoderOutput enc;
  std::vector<Tensor> entity_embeds;
  std::vector<Tensor> ac_attn;
  Tensor gnn;
  RefinerOutput refined;
  std::vector<PairResult> pairs;
};

class GegaModel {
 public:
  GegaModel(GegaConfig cfg, ContextEncoder& encoder, const Vocab& vocab,
            const ParamStore& params)
      : cfg_(cfg), encoder_(encoder), vocab_(vocab), params_(params) {
    cfg_.validate(encoder_.d_model());
  }

  static void init_params(const GegaConfig& cfg, std::size_t d_model,
                          ParamStore& params, std::mt19937_64& rng) {
    cfg.validate(d_model);
    const std::size_t dk = d_model / cfg.num_heads;
    for (std::size_t i = 0; i < cfg.num_heads; ++i) {
      const std::string prefix = "gega.ac.head" + std::to_string(i) + ".";
      params.emplace(prefix + "wq", init_uniform({d_model, dk}, d_model, rng));
      params.emplace(prefix + "wk", init_uniform({d_model, dk}, d_model, rng));
      for (std::size_t l = 0; l < cfg.gnn_layers; ++l)
        params.emplace("gega.mgc.head" + std::to_string(i) + ".layer" +
                           std::to_string(l) + ".w",
                       init_uniform({dk, dk}, dk, rng));
    }
    params.emplace("gega.mgc.wo",
                   init_uniform({d_model, d_model}, d_model, rng));
    for (std::size_t l = 0; l < cfg.enc_layers; ++l)
      init_block_params(params, "gega.enc.layer" + std::to_string(l) + ".",
                        d_model, rng);
    for (const char* side : {"es", "eo"}) {
      params.emplace(std::string("cls.w_") + side,
                     init_uniform({d_model, 2 * d_model}, 2 * d_model, rng));
      params.emplace(std::string("cls.b_") + side,
                     init_uniform({d_model}, 2 * d_model, rng));
    }
    const std::size_t g = cfg.resolved_groups(d_model);
    const std::size_t feat = g * (d_model / g) * (d_model / g);
    params.emplace("cls.bil.w",
                   init_uniform({cfg.num_class, feat}, feat, rng));
    params.emplace("cls.bil.b", init_uniform({cfg.num_class}, feat, rng));
  }

  const GegaConfig& config() const { return cfg_; }
  ContextEncoder& encoder() { return encoder_; }
  const Vocab& vocab() const { return vocab_; }
  const ParamStore& params() const { return params_; }

  // All ordered entity pairs unless an explicit subset is requested.
  DocResult forward(
      Tape& tape, const Document& doc,
      const std::vector<std::pair<std::size_t, std::size_t>>* pair_subset =
          nullptr) const {
    DocResult res;
    res.flat = flatten(doc);
    res.enc = encode_windowed(tape, encoder_,
                              vocab_.encode(res.flat.tokens));

    for (std::size_t e = 0; e < doc.entities.size(); ++e)
      res.entity_embeds.push_back(
          entity_embed(tape, res.enc.h, res.flat.mention_positions[e]));

    res.ac_attn =
        attention_concentration(tape, res.enc.h, params_, cfg_.num_heads);
    res.gnn = multi_graphconv(tape, res.enc.h, res.ac_attn, params_,
                              cfg_.gnn_layers);
    res.refined = transformer_enc(tape, res.gnn, params_, cfg_.num_heads,
                                  cfg_.enc_layers);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (pair_subset) {
      pairs = *pair_subset;
    } else {
      for (std::size_t h = 0; h < doc.entities.size(); ++h)
        for (std::size_t t = 0; t < doc.entities.size(); ++t)
          if (h != t) pairs.emplace_back(h, t);
    }

    std::vector<Tensor> ent_attn(doc.entities.size());
    auto attn_row = [&](std::size_t e) {
      if (!ent_attn[e].defined())
        ent_attn[e] = entity_attention(tape, res.refined.attn,
                                       res.flat.mention_positions[e]);
      return ent_attn[e];
    };

    const std::size_t groups = cfg_.resolved_groups(encoder_.d_model());
    for (const auto& [h, t] : pairs) {
      if (h >= doc.entities.size() || t >= doc.entities.size() || h == t)
        throw TensorError("forward: invalid entity pair " + std::to_string(h) +
                          "," + std::to_string(t));
      PairSignals sig = pair_signals(tape, attn_row(h), attn_row(t), res.flat);
      Tensor c_es = pair_context(tape, res.entity_embeds[h], res.refined.h,
                                 sig.q, fetch_param(params_, "cls.w_es"),
                                 fetch_param(params_, "cls.b_es"));
      Tensor c_eo = pair_context(tape, res.entity_embeds[t], res.refined.h,
                                 sig.q, fetch_param(params_, "cls.w_eo"),
                                 fetch_param(params_, "cls.b_eo"));
      PairResult pr;
      pr.head = h;
      pr.tail = t;
      pr.scores = relation_scores(tape, c_es, c_eo,
                                  fetch_param(params_, "cls.bil.w"),
                                  fetch_param(params_, "cls.bil.b"), groups);
      pr.token_prob = sig.q;
      pr.sent_prob = sig.p;
      pr.degenerate_signal = sig.degenerate;
      res.pairs.push_back(std::move(pr));
    }
    return res;
  }

 private:
  GegaConfig cfg_;
  ContextEncoder& encoder_;
  const Vocab& vocab_;
  const ParamStore& params_;
};

}  // namespace gega
