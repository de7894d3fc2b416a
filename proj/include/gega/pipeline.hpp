#pragma once

// End-to-end drivers: training phases, checkpointing, silver annotation,
// and single / fusion inference over DocRED-style corpora.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gega/corpus.hpp"
#include "gega/encoder.hpp"
#include "gega/io.hpp"
#include "gega/losses.hpp"
#include "gega/metrics.hpp"
#include "gega/model.hpp"
#include "gega/optim.hpp"
#include "gega/params.hpp"
#include "json.hpp"

namespace gega {

struct PipelineError : std::runtime_error {
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

// -------------------------------------------------------------------------
// Training configuration. One preset per phase; callers tweak from there.
// -------------------------------------------------------------------------

enum class TrainPhase { teacher, student_distill, student_finetune };

struct TrainConfig {
  TrainPhase phase = TrainPhase::teacher;
  std::size_t num_epochs = 30;
  std::size_t batch_size = 4;
  std::size_t accum_steps = 1;
  double lr = 5e-5;
  double lr_added = 0.0;  // rate for non-encoder parameters when positive
  double max_grad_norm = 1.0;
  double warmup_ratio = 0.06;
  double lambda = 0.1;  // weight of the evidence loss
  std::uint64_t seed = 42;

  static TrainConfig teacher() { return TrainConfig{}; }

  static TrainConfig student_distill() {
    TrainConfig c;
    c.phase = TrainPhase::student_distill;
    c.num_epochs = 2;
    c.lr = 3e-5;
    c.max_grad_norm = 5.0;
    c.accum_steps = 2;
    return c;
  }

  static TrainConfig student_finetune() {
    TrainConfig c;
    c.phase = TrainPhase::student_finetune;
    c.num_epochs = 10;
    c.lr = 1e-6;
    c.lr_added = 3e-6;
    c.max_grad_norm = 2.0;
    return c;
  }

  void validate() const {
    if (batch_size == 0)
      throw PipelineError("train config: batch_size must be positive");
    if (accum_steps == 0)
      throw PipelineError("train config: accum_steps must be positive");
    if (lr <= 0.0) throw PipelineError("train config: lr must be positive");
    if (lambda < 0.0 || lambda > 1.0)
      throw PipelineError("train config: lambda must lie in [0, 1]");
    if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
      throw PipelineError("train config: warmup_ratio must lie in [0, 1]");
  }
};

// -------------------------------------------------------------------------
// Checkpoints: configs + vocabulary + parameters in one binary blob.
// -------------------------------------------------------------------------

struct Checkpoint {
  EncoderConfig encoder;
  GegaConfig gega;
  std::vector<std::string> vocab;
  ParamStore params;
};

inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'G', 'A',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

inline ParamStore clone_params(const ParamStore& params) {
  ParamStore out;
  for (const auto& [name, t] : params)
    out.emplace(name, Tensor::param(t.shape(), t.values()));
  return out;
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json j;
  j["encoder"] = {{"d_model", ck.encoder.d_model},
                  {"num_heads", ck.encoder.num_heads},
                  {"num_layers", ck.encoder.num_layers},
                  {"vocab_size", ck.encoder.vocab_size},
                  {"max_window", ck.encoder.max_window}};
  j["gega"] = {{"num_heads", ck.gega.num_heads},
               {"gnn_layers", ck.gega.gnn_layers},
               {"enc_layers", ck.gega.enc_layers},
               {"num_class", ck.gega.num_class},
               {"num_labels_cap", ck.gega.num_labels_cap},
               {"evi_thresh", ck.gega.evi_thresh},
               {"bilinear_groups", ck.gega.bilinear_groups}};
  j["vocab"] = ck.vocab;
  const std::string cfg = j.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u64(out, kCheckpointVersion);
  detail::put_u64(out, cfg.size());
  out += cfg;
  append_named_tensors(out, ck.params);
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      bytes.compare(0, sizeof(kCheckpointMagic), kCheckpointMagic,
                    sizeof(kCheckpointMagic)) != 0)
    throw PipelineError("checkpoint: bad magic, not a checkpoint file");
  std::size_t at = sizeof(kCheckpointMagic);
  const std::uint64_t version = detail::take_u64(bytes, at);
  if (version != kCheckpointVersion)
    throw PipelineError("checkpoint: unsupported version " +
                        std::to_string(version));
  const std::uint64_t cfg_len = detail::take_u64(bytes, at);
  if (at + cfg_len > bytes.size())
    throw PipelineError("checkpoint: truncated config block");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(at, cfg_len));
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("checkpoint: bad config json: ") +
                        e.what());
  }
  at += cfg_len;

  Checkpoint ck;
  const auto& je = j.at("encoder");
  ck.encoder.d_model = je.at("d_model").get<std::size_t>();
  ck.encoder.num_heads = je.at("num_heads").get<std::size_t>();
  ck.encoder.num_layers = je.at("num_layers").get<std::size_t>();
  ck.encoder.vocab_size = je.at("vocab_size").get<std::size_t>();
  ck.encoder.max_window = je.at("max_window").get<std::size_t>();
  const auto& jg = j.at("gega");
  ck.gega.num_heads = jg.at("num_heads").get<std::size_t>();
  ck.gega.gnn_layers = jg.at("gnn_layers").get<std::size_t>();
  ck.gega.enc_layers = jg.at("enc_layers").get<std::size_t>();
  ck.gega.num_class = jg.at("num_class").get<std::size_t>();
  ck.gega.num_labels_cap = jg.at("num_labels_cap").get<std::size_t>();
  ck.gega.evi_thresh = jg.at("evi_thresh").get<double>();
  ck.gega.bilinear_groups = jg.at("bilinear_groups").get<std::size_t>();
  ck.vocab = j.at("vocab").get<std::vector<std::string>>();
  ck.params = read_named_tensors(bytes, at, /*requires_grad=*/true);
  if (at != bytes.size())
    throw PipelineError("checkpoint: trailing bytes after tensor block");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

// -------------------------------------------------------------------------
// Silver annotations produced by the teacher over the distant corpus.
// -------------------------------------------------------------------------

struct SilverPair {
  std::size_t head = 0;
  std::size_t tail = 0;
  std::vector<double> token_dist;  // over the flattened document's tokens
  std::vector<std::size_t> evidence;
};

struct SilverDoc {
  std::string title;
  std::vector<SilverPair> pairs;
};

struct SilverSet {
  std::vector<SilverDoc> docs;
};

inline std::string silver_to_string(const SilverSet& set) {
  nlohmann::json root = nlohmann::json::array();
  for (const SilverDoc& doc : set.docs) {
    nlohmann::json jd;
    jd["title"] = doc.title;
    jd["pairs"] = nlohmann::json::array();
    for (const SilverPair& p : doc.pairs) {
      nlohmann::json jp;
      jp["h"] = p.head;
      jp["t"] = p.tail;
      jp["q"] = p.token_dist;
      jp["evidence"] = p.evidence;
      jd["pairs"].push_back(std::move(jp));
    }
    root.push_back(std::move(jd));
  }
  return root.dump(1);
}

inline SilverSet parse_silver(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("silver annotations: bad json: ") +
                        e.what());
  }
  if (!root.is_array())
    throw PipelineError("silver annotations: root must be a JSON array");
  SilverSet set;
  for (const auto& jd : root) {
    SilverDoc doc;
    doc.title = jd.at("title").get<std::string>();
    for (const auto& jp : jd.at("pairs")) {
      SilverPair p;
      p.head = jp.at("h").get<std::size_t>();
      p.tail = jp.at("t").get<std::size_t>();
      p.token_dist = jp.at("q").get<std::vector<double>>();
      p.evidence = jp.at("evidence").get<std::vector<std::size_t>>();
      doc.pairs.push_back(std::move(p));
    }
    set.docs.push_back(std::move(doc));
  }
  return set;
}

inline void save_silver(const SilverSet& set, const std::string& path) {
  write_file(path, silver_to_string(set));
}

inline SilverSet load_silver(const std::string& path) {
  return parse_silver(read_file(path));
}

// -------------------------------------------------------------------------
// Supervision: what each ordered entity pair should learn.
// -------------------------------------------------------------------------

struct PairSupervision {
  std::vector<int> positives;
  std::optional<std::vector<double>> sent_ref;   // gold evidence distribution
  std::optional<std::vector<double>> token_ref;  // teacher token distribution
};

using DocSupervision =
    std::map<std::pair<std::size_t, std::size_t>, PairSupervision>;

namespace detail {

// Groups a document's facts by ordered pair; evidence becomes a sentence
// distribution when any fact of the pair carries it.
inline DocSupervision gold_supervision(const Document& doc) {
  DocSupervision sup;
  for (const RelationFact& f : doc.facts)
    sup[{f.head, f.tail}].positives.push_back(f.relation);
  for (auto& [pair, ps] : sup) {
    std::sort(ps.positives.begin(), ps.positives.end());
    ps.positives.erase(
        std::unique(ps.positives.begin(), ps.positives.end()),
        ps.positives.end());
    ps.sent_ref = pair_evidence_vector(doc, pair.first, pair.second);
  }
  return sup;
}

// Same positives, but the evidence target comes from the silver set.
inline DocSupervision silver_supervision(const Document& doc,
                                         const SilverDoc* silver) {
  DocSupervision sup;
  for (const RelationFact& f : doc.facts)
    sup[{f.head, f.tail}].positives.push_back(f.relation);
  std::map<std::pair<std::size_t, std::size_t>, const SilverPair*> by_pair;
  if (silver)
    for (const SilverPair& p : silver->pairs) by_pair[{p.head, p.tail}] = &p;
  const std::size_t n_tokens = flatten(doc).num_tokens();
  for (auto& [pair, ps] : sup) {
    std::sort(ps.positives.begin(), ps.positives.end());
    ps.positives.erase(
        std::unique(ps.positives.begin(), ps.positives.end()),
        ps.positives.end());
    auto it = by_pair.find(pair);
    if (it == by_pair.end())
      throw PipelineError("no silver annotation for pair (" +
                          std::to_string(pair.first) + ", " +
                          std::to_string(pair.second) + ") of document '" +
                          doc.title + "'");
    if (it->second->token_dist.size() != n_tokens)
      throw PipelineError(
          "silver token distribution for pair (" +
          std::to_string(pair.first) + ", " + std::to_string(pair.second) +
          ") of document '" + doc.title + "' has length " +
          std::to_string(it->second->token_dist.size()) + ", expected " +
          std::to_string(n_tokens));
    ps.token_ref = it->second->token_dist;
  }
  return sup;
}

}  // namespace detail

// Mean adaptive-threshold loss over every ordered pair plus, when enabled,
// the mean evidence loss over the supervised pairs.
inline LossBundle doc_loss(Tape& tape, const GegaModel& model,
                           const Document& doc, const DocSupervision& sup,
                           double lambda) {
  DocResult res = model.forward(tape, doc);
  if (res.pairs.empty())
    throw PipelineError("doc_loss: document '" + doc.title +
                        "' has no entity pairs");
  static const std::vector<int> kNoPositives;
  Tensor re_sum;
  Tensor er_sum;
  std::size_t er_count = 0;
  for (const PairResult& pr : res.pairs) {
    auto it = sup.find({pr.head, pr.tail});
    const std::vector<int>& pos =
        it == sup.end() ? kNoPositives : it->second.positives;
    Tensor a = atl_loss(tape, pr.scores, pos);
    re_sum = re_sum.defined() ? tape.add(re_sum, a) : a;
    if (lambda > 0.0 && it != sup.end()) {
      Tensor e;
      if (it->second.token_ref)
        e = er_sent_loss(tape, *it->second.token_ref, pr.token_prob);
      else if (it->second.sent_ref)
        e = er_doc_loss(tape, *it->second.sent_ref, pr.sent_prob);
      if (e.defined()) {
        er_sum = er_sum.defined() ? tape.add(er_sum, e) : e;
        ++er_count;
      }
    }
  }
  Tensor re = tape.scalar_mul(re_sum, 1.0 / double(res.pairs.size()));
  if (er_count == 0) return total_loss(tape, re, nullptr, lambda);
  Tensor er = tape.scalar_mul(er_sum, 1.0 / double(er_count));
  return total_loss(tape, re, &er, lambda);
}

// -------------------------------------------------------------------------
// The training loop shared by all phases.
// -------------------------------------------------------------------------

struct TrainStepRecord {
  std::size_t step = 0;
  double l_re = 0.0;
  double l_er = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double lr_scale = 0.0;
};

using TrainLog = std::vector<TrainStepRecord>;

inline std::string train_log_to_jsonl(const TrainLog& log) {
  std::string out;
  for (const TrainStepRecord& r : log) {
    nlohmann::json j;
    j["step"] = r.step;
    j["l_re"] = r.l_re;
    j["l_er"] = r.l_er;
    j["total"] = r.total;
    j["grad_norm"] = r.grad_norm;
    j["lr_scale"] = r.lr_scale;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_train_log(const TrainLog& log, const std::string& path) {
  write_file(path, train_log_to_jsonl(log));
}

inline void run_training(const GegaModel& model, ParamStore& params,
                         const Dataset& data,
                         const std::vector<DocSupervision>& sup,
                         const TrainConfig& cfg, TrainLog* log) {
  cfg.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.docs.size(); ++i)
    if (data.docs[i].entities.size() >= 2) usable.push_back(i);
  if (usable.empty())
    throw PipelineError("training: no document has at least two entities");

  const std::size_t chunk = cfg.batch_size * cfg.accum_steps;
  const std::size_t chunks_per_epoch = (usable.size() + chunk - 1) / chunk;

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.lr_added = cfg.lr_added;
  acfg.max_grad_norm = cfg.max_grad_norm;
  acfg.warmup_ratio = cfg.warmup_ratio;
  acfg.total_steps = cfg.num_epochs * chunks_per_epoch;
  Adam opt(acfg);

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.num_epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t c = 0; c < order.size(); c += chunk) {
      const std::size_t end = std::min(order.size(), c + chunk);
      const double inv = 1.0 / double(end - c);
      for (auto& kv : params) kv.second.zero_grad();

      double mean_re = 0.0, mean_er = 0.0, mean_total = 0.0;
      for (std::size_t k = c; k < end; ++k) {
        const Document& doc = data.docs[order[k]];
        Tape tape(true);
        LossBundle lb =
            doc_loss(tape, model, doc, sup[order[k]], cfg.lambda);
        const double tv = lb.total.item();
        if (!std::isfinite(tv))
          throw PipelineError("training diverged at step " +
                              std::to_string(global_step + 1) +
                              " on document '" + doc.title + "'");
        mean_re += lb.l_re.item() * inv;
        mean_er += lb.l_er.item() * inv;
        mean_total += tv * inv;
        tape.backward(tape.scalar_mul(lb.total, inv));
      }

      const double grad_norm = opt.clip_gradients(params);
      opt.step(params);
      ++global_step;
      if (log)
        log->push_back({global_step, mean_re, mean_er, mean_total, grad_norm,
                        opt.last_scale()});
    }
  }
}

// -------------------------------------------------------------------------
// Phase drivers.
// -------------------------------------------------------------------------

inline Checkpoint train_teacher(const Dataset& train, const Vocab& vocab,
                                EncoderConfig ecfg, const GegaConfig& gcfg,
                                const TrainConfig& cfg,
                                TrainLog* log = nullptr) {
  cfg.validate();
  ecfg.vocab_size = vocab.size();
  ecfg.validate();
  gcfg.validate(ecfg.d_model);

  ParamStore params;
  std::mt19937_64 rng(cfg.seed);
  TransformerContextEncoder::init_params(ecfg, params, rng);
  GegaModel::init_params(gcfg, ecfg.d_model, params, rng);

  TransformerContextEncoder encoder(ecfg, params);
  GegaModel model(gcfg, encoder, vocab, params);

  std::vector<DocSupervision> sup;
  sup.reserve(train.docs.size());
  for (const Document& doc : train.docs)
    sup.push_back(detail::gold_supervision(doc));

  run_training(model, params, train, sup, cfg, log);
  return Checkpoint{ecfg, gcfg, vocab.tokens(), std::move(params)};
}

namespace detail {

template <typename Fn>
inline void for_each_doc(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

// Ordered entity pairs that carry at least one label.
inline std::vector<std::pair<std::size_t, std::size_t>> labeled_pairs(
    const Document& doc) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const RelationFact& f : doc.facts) seen.insert({f.head, f.tail});
  return {seen.begin(), seen.end()};
}

}  // namespace detail

inline SilverSet infer_silver(const Checkpoint& ck, const Dataset& distant,
                              std::size_t workers = 1) {
  const Vocab vocab = Vocab::from_tokens(ck.vocab);
  TransformerContextEncoder encoder(ck.encoder, ck.params);
  const GegaModel model(ck.gega, encoder, vocab, ck.params);

  SilverSet set;
  set.docs.resize(distant.docs.size());
  detail::for_each_doc(
      distant.docs.size(), workers, [&](std::size_t i) {
        const Document& doc = distant.docs[i];
        SilverDoc out;
        out.title = doc.title;
        const auto pairs = detail::labeled_pairs(doc);
        if (!pairs.empty()) {
          Tape tape(false);
          DocResult res = model.forward(tape, doc, &pairs);
          for (const PairResult& pr : res.pairs) {
            SilverPair sp;
            sp.head = pr.head;
            sp.tail = pr.tail;
            sp.token_dist = floor_distribution(pr.token_prob.values());
            sp.evidence =
                select_evidence(pr.sent_prob.values(), ck.gega.evi_thresh);
            out.pairs.push_back(std::move(sp));
          }
        }
        set.docs[i] = std::move(out);
      });
  return set;
}

inline Checkpoint train_student(const Dataset& distant,
                                const SilverSet& silver, const Vocab& vocab,
                                EncoderConfig ecfg, const GegaConfig& gcfg,
                                const TrainConfig& cfg,
                                TrainLog* log = nullptr) {
  cfg.validate();
  ecfg.vocab_size = vocab.size();
  ecfg.validate();
  gcfg.validate(ecfg.d_model);

  std::map<std::string, const SilverDoc*> by_title;
  for (const SilverDoc& d : silver.docs) by_title[d.title] = &d;

  ParamStore params;
  std::mt19937_64 rng(cfg.seed);
  TransformerContextEncoder::init_params(ecfg, params, rng);
  GegaModel::init_params(gcfg, ecfg.d_model, params, rng);

  TransformerContextEncoder encoder(ecfg, params);
  GegaModel model(gcfg, encoder, vocab, params);

  std::vector<DocSupervision> sup;
  sup.reserve(distant.docs.size());
  for (const Document& doc : distant.docs) {
    auto it = by_title.find(doc.title);
    sup.push_back(detail::silver_supervision(
        doc, it == by_title.end() ? nullptr : it->second));
  }

  run_training(model, params, distant, sup, cfg, log);
  return Checkpoint{ecfg, gcfg, vocab.tokens(), std::move(params)};
}

inline Checkpoint finetune_student(const Checkpoint& start,
                                   const Dataset& train,
                                   const TrainConfig& cfg,
                                   TrainLog* log = nullptr) {
  cfg.validate();
  Checkpoint out{start.encoder, start.gega, start.vocab,
                 clone_params(start.params)};
  const Vocab vocab = Vocab::from_tokens(out.vocab);
  TransformerContextEncoder encoder(out.encoder, out.params);
  GegaModel model(out.gega, encoder, vocab, out.params);

  std::vector<DocSupervision> sup;
  sup.reserve(train.docs.size());
  for (const Document& doc : train.docs)
    sup.push_back(detail::gold_supervision(doc));

  run_training(model, out.params, train, sup, cfg, log);
  return out;
}

// -------------------------------------------------------------------------
// Inference. Both modes score every ordered pair; fusion additionally
// re-scores each evidenced pair on a pseudo-document of its own evidence.
// -------------------------------------------------------------------------

namespace detail {

inline std::vector<double> margins(const std::vector<double>& scores) {
  std::vector<double> m(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) m[r] = scores[r] - scores[0];
  return m;
}

inline void emit_pair(std::vector<PredictionRecord>& out,
                      const std::string& title, std::size_t h, std::size_t t,
                      const std::vector<double>& margin, std::size_t cap,
                      const std::vector<std::size_t>& evidence) {
  for (int r : decide_relations(margin, cap)) {
    PredictionRecord rec;
    rec.title = title;
    rec.h_idx = h;
    rec.t_idx = t;
    rec.r = r;
    rec.evidence = evidence;
    rec.score = margin[std::size_t(r)];
    rec.has_score = true;
    out.push_back(std::move(rec));
  }
}

struct PseudoDoc {
  Document doc;
  std::size_t head = 0;  // pair indices within the reduced entity list
  std::size_t tail = 0;
  bool ok = false;
};

// A document reduced to the pair's evidence sentences, keeping original
// sentence order. Entities that lose every mention drop out; losing the
// head or tail makes the reduction unusable.
inline PseudoDoc reduce_to_evidence(const Document& doc,
                                    const std::vector<std::size_t>& evidence,
                                    std::size_t head, std::size_t tail) {
  PseudoDoc out;
  std::vector<long> new_sent(doc.sentences.size(), -1);
  for (std::size_t k = 0; k < evidence.size(); ++k) {
    if (evidence[k] >= doc.sentences.size()) return out;
    new_sent[evidence[k]] = long(k);
    out.doc.sentences.push_back(doc.sentences[evidence[k]]);
  }
  out.doc.title = doc.title;

  std::vector<long> new_entity(doc.entities.size(), -1);
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    Entity kept;
    kept.entity_type = doc.entities[e].entity_type;
    for (const Mention& m : doc.entities[e].mentions) {
      if (new_sent[m.sent_id] < 0) continue;
      Mention moved = m;
      moved.sent_id = std::size_t(new_sent[m.sent_id]);
      kept.mentions.push_back(std::move(moved));
    }
    if (kept.mentions.empty()) continue;
    new_entity[e] = long(out.doc.entities.size());
    out.doc.entities.push_back(std::move(kept));
  }
  if (new_entity[head] < 0 || new_entity[tail] < 0) return out;
  out.head = std::size_t(new_entity[head]);
  out.tail = std::size_t(new_entity[tail]);
  out.ok = true;
  return out;
}

}  // namespace detail

inline std::vector<PredictionRecord> infer_single(const Checkpoint& ck,
                                                  const Dataset& data,
                                                  std::size_t workers = 1) {
  const Vocab vocab = Vocab::from_tokens(ck.vocab);
  TransformerContextEncoder encoder(ck.encoder, ck.params);
  const GegaModel model(ck.gega, encoder, vocab, ck.params);

  std::vector<std::vector<PredictionRecord>> per_doc(data.docs.size());
  detail::for_each_doc(data.docs.size(), workers, [&](std::size_t i) {
    const Document& doc = data.docs[i];
    if (doc.entities.size() < 2) return;
    Tape tape(false);
    DocResult res = model.forward(tape, doc);
    for (const PairResult& pr : res.pairs)
      detail::emit_pair(per_doc[i], doc.title, pr.head, pr.tail,
                        detail::margins(pr.scores.values()),
                        ck.gega.num_labels_cap,
                        select_evidence(pr.sent_prob.values(),
                                        ck.gega.evi_thresh));
  });

  std::vector<PredictionRecord> out;
  for (auto& chunk : per_doc)
    out.insert(out.end(), std::make_move_iterator(chunk.begin()),
               std::make_move_iterator(chunk.end()));
  return out;
}

inline std::vector<PredictionRecord> infer_fusion(const Checkpoint& ck,
                                                  const Dataset& data,
                                                  std::size_t workers = 1) {
  const Vocab vocab = Vocab::from_tokens(ck.vocab);
  TransformerContextEncoder encoder(ck.encoder, ck.params);
  const GegaModel model(ck.gega, encoder, vocab, ck.params);

  std::vector<std::vector<PredictionRecord>> per_doc(data.docs.size());
  detail::for_each_doc(data.docs.size(), workers, [&](std::size_t i) {
    const Document& doc = data.docs[i];
    if (doc.entities.size() < 2) return;
    Tape tape(false);
    DocResult res = model.forward(tape, doc);
    for (const PairResult& pr : res.pairs) {
      const std::vector<double> m1 = detail::margins(pr.scores.values());
      const std::vector<std::size_t> evidence =
          select_evidence(pr.sent_prob.values(), ck.gega.evi_thresh);

      std::vector<double> combined = m1;
      if (!evidence.empty()) {
        detail::PseudoDoc pseudo =
            detail::reduce_to_evidence(doc, evidence, pr.head, pr.tail);
        if (pseudo.ok) {
          const std::vector<std::pair<std::size_t, std::size_t>> subset = {
              {pseudo.head, pseudo.tail}};
          Tape t2(false);
          DocResult r2 = model.forward(t2, pseudo.doc, &subset);
          const std::vector<double> m2 =
              detail::margins(r2.pairs.at(0).scores.values());
          for (std::size_t r = 0; r < combined.size(); ++r)
            combined[r] += m2[r];
        }
      }
      detail::emit_pair(per_doc[i], doc.title, pr.head, pr.tail, combined,
                        ck.gega.num_labels_cap, evidence);
    }
  });

  std::vector<PredictionRecord> out;
  for (auto& chunk : per_doc)
    out.insert(out.end(), std::make_move_iterator(chunk.begin()),
               std::make_move_iterator(chunk.end()));
  return out;
}

// -------------------------------------------------------------------------
// Evaluation summary.
// -------------------------------------------------------------------------

struct EvalReport {
  MetricResult re;
  MetricResult evi;
  MetricResult ign;
  bool has_ign = false;
};

inline EvalReport evaluate(const std::vector<PredictionRecord>& preds,
                           const Dataset& gold,
                           const Dataset* train_for_ign = nullptr) {
  EvalReport rep;
  rep.re = re_f1(preds, gold);
  rep.evi = evi_f1(preds, gold);
  if (train_for_ign) {
    rep.ign = ign_f1(preds, gold, *train_for_ign);
    rep.has_ign = true;
  }
  return rep;
}

}  // namespace gega
