#pragma once

// Scoring: relation F1, the train-overlap-ignoring variant, evidence F1,
// and the submission-format JSON round trip.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "gega/corpus.hpp"

namespace gega {

struct PredictionRecord {
  std::string title;
  std::size_t h_idx = 0;
  std::size_t t_idx = 0;
  int r = 0;
  std::vector<std::size_t> evidence;
  double score = 0.0;
  bool has_score = true;

  bool operator==(const PredictionRecord& o) const {
    return title == o.title && h_idx == o.h_idx && t_idx == o.t_idx &&
           r == o.r && evidence == o.evidence;
  }
};

struct MetricResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool gold_empty = false;     // nothing left to score on the gold side
  std::size_t duplicates = 0;  // duplicate predicted triples dropped
};

namespace detail {

using Triple = std::tuple<std::string, std::size_t, std::size_t, int>;

inline MetricResult score_sets(std::size_t pred, std::size_t gold,
                               std::size_t hit) {
  MetricResult m;
  if (gold == 0) m.gold_empty = true;
  if (pred > 0) m.precision = double(hit) / double(pred);
  if (gold > 0) m.recall = double(hit) / double(gold);
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

inline std::set<Triple> dedup_predictions(
    const std::vector<PredictionRecord>& preds, std::size_t& duplicates) {
  std::set<Triple> out;
  duplicates = 0;
  for (const auto& p : preds)
    if (!out.emplace(p.title, p.h_idx, p.t_idx, p.r).second) ++duplicates;
  return out;
}

inline std::set<Triple> gold_triples(const Dataset& gold) {
  std::set<Triple> out;
  for (const auto& doc : gold.docs)
    for (const auto& fact : doc.facts)
      out.emplace(doc.title, fact.head, fact.tail, fact.relation);
  return out;
}

// Every (head name, tail name, relation) combination seen in training.
inline std::set<std::tuple<std::string, std::string, int>> train_name_index(
    const Dataset& train) {
  std::set<std::tuple<std::string, std::string, int>> idx;
  for (const auto& doc : train.docs)
    for (const auto& fact : doc.facts)
      for (const auto& hm : doc.entities[fact.head].mentions)
        for (const auto& tm : doc.entities[fact.tail].mentions)
          idx.emplace(hm.name, tm.name, fact.relation);
  return idx;
}

inline bool triple_in_train(
    const Triple& t, const Dataset& gold,
    const std::map<std::string, const Document*>& by_title,
    const std::set<std::tuple<std::string, std::string, int>>& idx) {
  auto it = by_title.find(std::get<0>(t));
  if (it == by_title.end()) return false;
  const Document& doc = *it->second;
  const std::size_t h = std::get<1>(t), tl = std::get<2>(t);
  if (h >= doc.entities.size() || tl >= doc.entities.size()) return false;
  for (const auto& hm : doc.entities[h].mentions)
    for (const auto& tm : doc.entities[tl].mentions)
      if (idx.count({hm.name, tm.name, std::get<3>(t)})) return true;
  return false;
}

}  // namespace detail

// Micro F1 over exact (title, head, tail, relation) matches.
inline MetricResult re_f1(const std::vector<PredictionRecord>& preds,
                          const Dataset& gold) {
  std::size_t dup = 0;
  auto pset = detail::dedup_predictions(preds, dup);
  auto gset = detail::gold_triples(gold);
  std::size_t hit = 0;
  for (const auto& t : pset)
    if (gset.count(t)) ++hit;
  MetricResult m = detail::score_sets(pset.size(), gset.size(), hit);
  m.duplicates = dup;
  return m;
}

// Same, after dropping triples whose (head name, tail name, relation)
// combination already occurs in the training data, from both sides.
inline MetricResult ign_f1(const std::vector<PredictionRecord>& preds,
                           const Dataset& gold, const Dataset& train) {
  std::size_t dup = 0;
  auto pset = detail::dedup_predictions(preds, dup);
  auto gset = detail::gold_triples(gold);
  auto idx = detail::train_name_index(train);
  std::map<std::string, const Document*> by_title;
  for (const auto& doc : gold.docs) by_title.emplace(doc.title, &doc);

  auto keep = [&](const detail::Triple& t) {
    return !detail::triple_in_train(t, gold, by_title, idx);
  };
  std::size_t pred_kept = 0, gold_kept = 0, hit = 0;
  for (const auto& t : pset)
    if (keep(t)) {
      ++pred_kept;
      if (gset.count(t)) ++hit;
    }
  for (const auto& t : gset)
    if (keep(t)) ++gold_kept;
  MetricResult m = detail::score_sets(pred_kept, gold_kept, hit);
  m.duplicates = dup;
  return m;
}

// Micro F1 over (title, head, tail, relation, sentence) tuples. Evidence
// attached to a wrong triple still inflates the prediction denominator.
inline MetricResult evi_f1(const std::vector<PredictionRecord>& preds,
                           const Dataset& gold) {
  using Tuple =
      std::tuple<std::string, std::size_t, std::size_t, int, std::size_t>;
  std::set<Tuple> pset, gset;
  std::set<detail::Triple> seen;
  std::size_t dup = 0;
  for (const auto& p : preds) {
    if (!seen.emplace(p.title, p.h_idx, p.t_idx, p.r).second) {
      ++dup;
      continue;
    }
    for (std::size_t s : p.evidence)
      pset.emplace(p.title, p.h_idx, p.t_idx, p.r, s);
  }
  for (const auto& doc : gold.docs)
    for (const auto& fact : doc.facts)
      for (std::size_t s : fact.evidence)
        gset.emplace(doc.title, fact.head, fact.tail, fact.relation, s);
  std::size_t hit = 0;
  for (const auto& t : pset)
    if (gset.count(t)) ++hit;
  MetricResult m = detail::score_sets(pset.size(), gset.size(), hit);
  m.duplicates = dup;
  return m;
}

// -------------------------------------------------------------------------
// Submission format: JSON array of {title, h_idx, t_idx, r, evidence, score},
// canonically sorted so emitted files are stable across runs.
// -------------------------------------------------------------------------

inline std::string emit_official(std::vector<PredictionRecord> preds) {
  std::sort(preds.begin(), preds.end(),
            [](const PredictionRecord& a, const PredictionRecord& b) {
              return std::tie(a.title, a.h_idx, a.t_idx, a.r) <
                     std::tie(b.title, b.h_idx, b.t_idx, b.r);
            });
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : preds) {
    nlohmann::json rec;
    rec["title"] = p.title;
    rec["h_idx"] = p.h_idx;
    rec["t_idx"] = p.t_idx;
    rec["r"] = p.r;
    rec["evidence"] = p.evidence;
    if (p.has_score) rec["score"] = p.score;
    arr.push_back(std::move(rec));
  }
  return arr.dump(1);
}

inline std::vector<PredictionRecord> load_official(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("result file: malformed JSON: ") + e.what());
  }
  if (!root.is_array()) throw DataError("result file: expected an array");
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& rec = root[i];
    try {
      PredictionRecord p;
      p.title = rec.at("title").get<std::string>();
      p.h_idx = rec.at("h_idx").get<std::size_t>();
      p.t_idx = rec.at("t_idx").get<std::size_t>();
      p.r = rec.at("r").get<int>();
      if (rec.contains("evidence"))
        p.evidence = rec.at("evidence").get<std::vector<std::size_t>>();
      if (rec.contains("score")) {
        p.score = rec.at("score").get<double>();
      } else {
        p.has_score = false;
      }
      if (p.r <= 0)
        throw DataError("result file: record " + std::to_string(i) +
                        " has non-positive relation id");
      if (p.h_idx == p.t_idx)
        throw DataError("result file: record " + std::to_string(i) +
                        " relates an entity to itself");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("result file: record " + std::to_string(i) + ": " +
                      e.what());
    }
  }
  return out;
}

}  // namespace gega
