#pragma once
// Deterministic synthetic corpus generator. Every planted fact (h, r, t) is
// signaled by the contiguous pattern "<head name> <relation trigger> <tail
// name>" inside each of its evidence sentences and nowhere else, so a model
// can recover both the relations and the evidence exactly.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gega/corpus.hpp"

namespace gega {

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t num_docs = 50;
  std::size_t vocab_size = 48;   // total distinct tokens (names + triggers + filler)
  std::size_t num_relation_types = 4;  // planted ids 1..num_relation_types
  std::size_t sentences_per_doc = 5;
  std::size_t entities_per_doc = 3;
  std::size_t facts_per_doc = 2;
  std::size_t entity_pool = 8;       // surface names shared across documents
  std::size_t tokens_per_sentence = 4;  // filler prefix length
  std::size_t num_class = 10;        // label space the corpus targets

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0)
        throw DataError(std::string("synthetic spec: ") + name +
                        " must be positive");
    };
    positive(num_docs, "num_docs");
    positive(vocab_size, "vocab_size");
    positive(num_relation_types, "num_relation_types");
    positive(sentences_per_doc, "sentences_per_doc");
    positive(entities_per_doc, "entities_per_doc");
    positive(facts_per_doc, "facts_per_doc");
    positive(entity_pool, "entity_pool");
    positive(tokens_per_sentence, "tokens_per_sentence");
    if (num_relation_types >= num_class)
      throw DataError("synthetic spec: num_relation_types " +
                      std::to_string(num_relation_types) +
                      " must stay below num_class " + std::to_string(num_class) +
                      " (id 0 is the null label)");
    if (entities_per_doc < 2)
      throw DataError("synthetic spec: need at least 2 entities per document");
    if (entities_per_doc > entity_pool)
      throw DataError("synthetic spec: entities_per_doc exceeds entity_pool");
    const std::size_t reserved = entity_pool + num_relation_types;
    if (vocab_size < reserved + 3)
      throw DataError(
          "synthetic spec: vocabulary too small to avoid pattern collisions; "
          "need at least " +
          std::to_string(reserved + 3) + " tokens (" +
          std::to_string(entity_pool) + " names + " +
          std::to_string(num_relation_types) + " triggers + 3 filler), got " +
          std::to_string(vocab_size));
  }
};

inline Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<std::string> names, triggers, filler;
  for (std::size_t i = 0; i < spec.entity_pool; ++i)
    names.push_back("ent" + std::to_string(i));
  for (std::size_t r = 1; r <= spec.num_relation_types; ++r)
    triggers.push_back("rel" + std::to_string(r));
  for (std::size_t i = 0;
       i < spec.vocab_size - spec.entity_pool - spec.num_relation_types; ++i)
    filler.push_back("w" + std::to_string(i));

  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  Dataset ds;
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    Document doc;
    doc.title = "synth_" + std::to_string(spec.seed) + "_" + std::to_string(d);

    // Entities: a random distinct draw from the shared name pool.
    std::vector<std::size_t> pool(spec.entity_pool);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::string> local_names;
    for (std::size_t e = 0; e < spec.entities_per_doc; ++e)
      local_names.push_back(names[pool[e]]);

    // Facts: a random prefix of the shuffled (head, tail, relation) space.
    struct Planted {
      std::size_t head, tail;
      int relation;
      std::vector<std::size_t> evidence;
    };
    std::vector<Planted> planted;
    for (std::size_t h = 0; h < spec.entities_per_doc; ++h)
      for (std::size_t t = 0; t < spec.entities_per_doc; ++t)
        for (std::size_t r = 1; r <= spec.num_relation_types && h != t; ++r)
          planted.push_back(Planted{h, t, static_cast<int>(r), {}});
    std::shuffle(planted.begin(), planted.end(), rng);
    planted.resize(std::min(spec.facts_per_doc, planted.size()));

    for (Planted& p : planted) {
      std::set<std::size_t> ev;
      const std::size_t n_ev = 1 + pick(2);
      while (ev.size() < std::min(n_ev, spec.sentences_per_doc))
        ev.insert(pick(spec.sentences_per_doc));
      p.evidence.assign(ev.begin(), ev.end());
    }

    // Sentences start as filler, then evidence sentences get the planted
    // pattern appended. Name and trigger namespaces are disjoint from the
    // filler, so the pattern cannot arise by accident.
    doc.sentences.assign(spec.sentences_per_doc, {});
    for (auto& sent : doc.sentences)
      for (std::size_t i = 0; i < spec.tokens_per_sentence; ++i)
        sent.push_back(filler[pick(filler.size())]);
    for (const Planted& p : planted)
      for (std::size_t ev : p.evidence) {
        auto& sent = doc.sentences[ev];
        sent.push_back(local_names[p.head]);
        sent.push_back(triggers[static_cast<std::size_t>(p.relation) - 1]);
        sent.push_back(local_names[p.tail]);
      }

    // Entities untouched by any fact still need a mention somewhere.
    std::vector<bool> mentioned(spec.entities_per_doc, false);
    for (const Planted& p : planted) mentioned[p.head] = mentioned[p.tail] = true;
    for (std::size_t e = 0; e < spec.entities_per_doc; ++e)
      if (!mentioned[e])
        doc.sentences[pick(spec.sentences_per_doc)].push_back(local_names[e]);

    doc.entities.resize(spec.entities_per_doc);
    for (std::size_t e = 0; e < spec.entities_per_doc; ++e)
      doc.entities[e].entity_type = "SYN";
    for (std::size_t s = 0; s < doc.sentences.size(); ++s)
      for (std::size_t p = 0; p < doc.sentences[s].size(); ++p)
        for (std::size_t e = 0; e < spec.entities_per_doc; ++e)
          if (doc.sentences[s][p] == local_names[e])
            doc.entities[e].mentions.push_back(
                Mention{s, p, p + 1, local_names[e]});

    for (const Planted& p : planted)
      doc.facts.push_back(RelationFact{p.head, p.tail, p.relation, p.evidence});

    validate_document(doc, "synthetic " + doc.title);
    ds.docs.push_back(std::move(doc));
  }
  return ds;
}

// Distant-supervision view of a corpus: relation labels survive, evidence is
// dropped.
inline void strip_evidence(Dataset& ds) {
  for (Document& doc : ds.docs)
    for (RelationFact& fact : doc.facts) fact.evidence.clear();
}

}  // namespace gega
