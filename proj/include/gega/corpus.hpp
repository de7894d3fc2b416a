#pragma once
// Document-level relation extraction corpus model: typed documents, JSON
// loading/saving in the usual doc-RE layout (title / sents / vertexSet /
// labels with evidence), marker-inserting flattening, and evidence targets.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gega/io.hpp"

namespace gega {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- data model

struct Mention {
  std::size_t sent_id = 0;
  std::size_t begin = 0;  // token span [begin, end) within the sentence
  std::size_t end = 0;
  std::string name;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct Entity {
  std::string entity_type;
  std::vector<Mention> mentions;

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct RelationFact {
  std::size_t head = 0;
  std::size_t tail = 0;
  int relation = 0;  // label id; 0 is reserved for "no relation"
  std::vector<std::size_t> evidence;  // sentence ids

  friend bool operator==(const RelationFact&, const RelationFact&) = default;
};

struct Document {
  std::string title;
  std::vector<std::vector<std::string>> sentences;
  std::vector<Entity> entities;
  std::vector<RelationFact> facts;

  friend bool operator==(const Document&, const Document&) = default;
};

struct Dataset {
  std::vector<Document> docs;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMarkerToken = "[MRK]";

// ---------------------------------------------------------------- validation

namespace detail {

inline std::string doc_ctx(std::size_t i, const std::string& title) {
  return "document " + std::to_string(i) + " ('" + title + "')";
}

}  // namespace detail

inline void validate_document(const Document& doc, const std::string& ctx) {
  const std::size_t n_sents = doc.sentences.size();
  if (doc.sentences.empty())
    throw DataError(ctx + ": empty sentence list");
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    const Entity& ent = doc.entities[e];
    if (ent.mentions.empty())
      throw DataError(ctx + ": vertexSet[" + std::to_string(e) +
                      "] has no mentions");
    for (std::size_t m = 0; m < ent.mentions.size(); ++m) {
      const Mention& men = ent.mentions[m];
      const std::string mctx =
          ctx + ": vertexSet[" + std::to_string(e) + "][" + std::to_string(m) + "]";
      if (men.sent_id >= n_sents)
        throw DataError(mctx + ".sent_id = " + std::to_string(men.sent_id) +
                        " out of range (" + std::to_string(n_sents) +
                        " sentences)");
      const std::size_t sent_len = doc.sentences[men.sent_id].size();
      if (men.begin >= men.end || men.end > sent_len)
        throw DataError(mctx + ".pos = [" + std::to_string(men.begin) + ", " +
                        std::to_string(men.end) + ") invalid for sentence of " +
                        std::to_string(sent_len) + " tokens");
    }
  }
  for (std::size_t f = 0; f < doc.facts.size(); ++f) {
    const RelationFact& fact = doc.facts[f];
    const std::string fctx = ctx + ": labels[" + std::to_string(f) + "]";
    if (fact.head >= doc.entities.size())
      throw DataError(fctx + ".h = " + std::to_string(fact.head) +
                      " out of range (" + std::to_string(doc.entities.size()) +
                      " entities)");
    if (fact.tail >= doc.entities.size())
      throw DataError(fctx + ".t = " + std::to_string(fact.tail) +
                      " out of range (" + std::to_string(doc.entities.size()) +
                      " entities)");
    if (fact.head == fact.tail)
      throw DataError(fctx + ": head equals tail (" +
                      std::to_string(fact.head) + ")");
    if (fact.relation <= 0)
      throw DataError(fctx + ".r = " + std::to_string(fact.relation) +
                      " must be a positive label id");
    for (std::size_t ev : fact.evidence)
      if (ev >= n_sents)
        throw DataError(fctx + ": evidence sentence " + std::to_string(ev) +
                        " out of range (" + std::to_string(n_sents) +
                        " sentences)");
  }
}

// ------------------------------------------------------------------- parsing

inline Dataset parse_docred(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus JSON malformed: ") + e.what());
  }
  if (!root.is_array()) throw DataError("corpus root must be a JSON array");

  Dataset ds;
  std::set<std::string> titles;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const nlohmann::json& jd = root[i];
    std::string ctx = "document " + std::to_string(i);
    try {
      Document doc;
      doc.title = jd.at("title").get<std::string>();
      ctx = detail::doc_ctx(i, doc.title);
      if (!titles.insert(doc.title).second)
        throw DataError(ctx + ": duplicate title");
      for (const auto& js : jd.at("sents")) {
        std::vector<std::string> sent;
        for (const auto& jt : js) sent.push_back(jt.get<std::string>());
        doc.sentences.push_back(std::move(sent));
      }
      for (const auto& je : jd.at("vertexSet")) {
        Entity ent;
        for (const auto& jm : je) {
          Mention men;
          men.name = jm.at("name").get<std::string>();
          men.sent_id = jm.at("sent_id").get<std::size_t>();
          const auto& pos = jm.at("pos");
          if (!pos.is_array() || pos.size() != 2)
            throw DataError(ctx + ": mention pos must be a [begin, end) pair");
          men.begin = pos[0].get<std::size_t>();
          men.end = pos[1].get<std::size_t>();
          if (jm.contains("type"))
            ent.entity_type = jm.at("type").get<std::string>();
          ent.mentions.push_back(std::move(men));
        }
        doc.entities.push_back(std::move(ent));
      }
      if (jd.contains("labels")) {
        for (const auto& jf : jd.at("labels")) {
          RelationFact fact;
          fact.head = jf.at("h").get<std::size_t>();
          fact.tail = jf.at("t").get<std::size_t>();
          const auto& jr = jf.at("r");
          if (jr.is_number_integer()) {
            fact.relation = jr.get<int>();
          } else if (jr.is_string()) {
            try {
              std::size_t used = 0;
              fact.relation = std::stoi(jr.get<std::string>(), &used);
              if (used != jr.get<std::string>().size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
              throw DataError(ctx + ": label r '" + jr.get<std::string>() +
                              "' is not an integer relation id");
            }
          } else {
            throw DataError(ctx + ": label r must be an integer id");
          }
          if (jf.contains("evidence"))
            for (const auto& je : jf.at("evidence"))
              fact.evidence.push_back(je.get<std::size_t>());
          std::sort(fact.evidence.begin(), fact.evidence.end());
          fact.evidence.erase(
              std::unique(fact.evidence.begin(), fact.evidence.end()),
              fact.evidence.end());
          doc.facts.push_back(std::move(fact));
        }
      }
      validate_document(doc, ctx);
      ds.docs.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(ctx + ": " + e.what());
    }
  }
  return ds;
}

inline Dataset load_docred(const std::string& path) {
  try {
    return parse_docred(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline std::string docred_to_string(const Dataset& ds) {
  nlohmann::json root = nlohmann::json::array();
  for (const Document& doc : ds.docs) {
    nlohmann::json jd;
    jd["title"] = doc.title;
    jd["sents"] = doc.sentences;
    nlohmann::json jes = nlohmann::json::array();
    for (const Entity& ent : doc.entities) {
      nlohmann::json jms = nlohmann::json::array();
      for (const Mention& men : ent.mentions) {
        jms.push_back({{"name", men.name},
                       {"sent_id", men.sent_id},
                       {"pos", {men.begin, men.end}},
                       {"type", ent.entity_type}});
      }
      jes.push_back(std::move(jms));
    }
    jd["vertexSet"] = std::move(jes);
    nlohmann::json jfs = nlohmann::json::array();
    for (const RelationFact& fact : doc.facts) {
      jfs.push_back({{"h", fact.head},
                     {"t", fact.tail},
                     {"r", fact.relation},
                     {"evidence", fact.evidence}});
    }
    jd["labels"] = std::move(jfs);
    root.push_back(std::move(jd));
  }
  return root.dump(1);
}

inline void save_docred(const Dataset& ds, const std::string& path) {
  write_file(path, docred_to_string(ds));
}

// ---------------------------------------------------------------- flattening

// A document laid out as one token sequence: [CLS], then each sentence with a
// marker token on both sides of every mention, then [SEP]. Sentence spans
// cover their own markers, so the spans partition everything between [CLS]
// and [SEP].
struct FlatIndex {
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> sentence_spans;
  std::vector<std::vector<std::size_t>> mention_positions;  // [entity][mention]
  std::vector<int> sentence_of;  // sentence id per position, -1 for [CLS]/[SEP]

  std::size_t num_sentences() const { return sentence_spans.size(); }
  std::size_t num_tokens() const { return tokens.size(); }
  bool is_special(std::size_t pos) const { return sentence_of.at(pos) < 0; }
};

inline FlatIndex flatten(const Document& doc) {
  validate_document(doc, "flatten: '" + doc.title + "'");

  struct Ref {
    std::size_t entity, mention, begin, end;
  };
  std::vector<std::vector<Ref>> by_sent(doc.sentences.size());
  for (std::size_t e = 0; e < doc.entities.size(); ++e)
    for (std::size_t m = 0; m < doc.entities[e].mentions.size(); ++m) {
      const Mention& men = doc.entities[e].mentions[m];
      by_sent[men.sent_id].push_back(Ref{e, m, men.begin, men.end});
    }

  FlatIndex flat;
  flat.mention_positions.resize(doc.entities.size());
  for (std::size_t e = 0; e < doc.entities.size(); ++e)
    flat.mention_positions[e].resize(doc.entities[e].mentions.size());

  flat.tokens.push_back(kClsToken);
  flat.sentence_of.push_back(-1);

  for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
    const auto& sent = doc.sentences[s];
    const std::size_t start = flat.tokens.size();

    // Opening markers for longer mentions come first so spans nest; markers
    // closing at a position are emitted before any opening there.
    std::vector<std::vector<Ref>> opens(sent.size() + 1), closes(sent.size() + 1);
    for (const Ref& r : by_sent[s]) {
      opens[r.begin].push_back(r);
      closes[r.end].push_back(r);
    }
    for (auto& v : opens)
      std::sort(v.begin(), v.end(), [](const Ref& a, const Ref& b) {
        if (a.end != b.end) return a.end > b.end;
        if (a.entity != b.entity) return a.entity < b.entity;
        return a.mention < b.mention;
      });
    for (auto& v : closes)
      std::sort(v.begin(), v.end(), [](const Ref& a, const Ref& b) {
        if (a.begin != b.begin) return a.begin > b.begin;
        if (a.entity != b.entity) return a.entity > b.entity;
        return a.mention > b.mention;
      });

    for (std::size_t p = 0; p <= sent.size(); ++p) {
      for (std::size_t k = 0; k < closes[p].size(); ++k) {
        flat.tokens.push_back(kMarkerToken);
        flat.sentence_of.push_back(static_cast<int>(s));
      }
      for (const Ref& r : opens[p]) {
        flat.mention_positions[r.entity][r.mention] = flat.tokens.size();
        flat.tokens.push_back(kMarkerToken);
        flat.sentence_of.push_back(static_cast<int>(s));
      }
      if (p < sent.size()) {
        flat.tokens.push_back(sent[p]);
        flat.sentence_of.push_back(static_cast<int>(s));
      }
    }
    flat.sentence_spans.emplace_back(start, flat.tokens.size());
  }

  flat.tokens.push_back(kSepToken);
  flat.sentence_of.push_back(-1);
  return flat;
}

// ---------------------------------------------------------- evidence targets

// Uniform distribution over the union of the given facts' evidence sentences;
// empty union means no supervision for the pair.
inline std::optional<std::vector<double>> evidence_vector(
    const std::vector<const RelationFact*>& facts, std::size_t num_sentences) {
  std::set<std::size_t> sents;
  for (const RelationFact* f : facts)
    for (std::size_t ev : f->evidence) {
      if (ev >= num_sentences)
        throw DataError("evidence_vector: sentence " + std::to_string(ev) +
                        " out of range (" + std::to_string(num_sentences) + ")");
      sents.insert(ev);
    }
  if (sents.empty()) return std::nullopt;
  std::vector<double> z(num_sentences, 0.0);
  const double w = 1.0 / static_cast<double>(sents.size());
  for (std::size_t s : sents) z[s] = w;
  return z;
}

inline std::optional<std::vector<double>> pair_evidence_vector(
    const Document& doc, std::size_t head, std::size_t tail) {
  std::vector<const RelationFact*> facts;
  for (const RelationFact& f : doc.facts)
    if (f.head == head && f.tail == tail) facts.push_back(&f);
  return evidence_vector(facts, doc.sentences.size());
}

}  // namespace gega
