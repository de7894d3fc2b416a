#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include "gega/corpus.hpp"
#include "gega/synth.hpp"

using namespace gega;
using Catch::Matchers::ContainsSubstring;

namespace {

Document two_sentence_doc() {
  Document doc;
  doc.title = "pair";
  doc.sentences = {{"alpha", "beta"}, {"gamma"}};
  doc.entities.resize(2);
  doc.entities[0].entity_type = "X";
  doc.entities[0].mentions = {Mention{0, 0, 1, "alpha"}};
  doc.entities[1].entity_type = "Y";
  doc.entities[1].mentions = {Mention{1, 0, 1, "gamma"}};
  doc.facts = {RelationFact{0, 1, 3, {1}}};
  return doc;
}

}  // namespace

TEST_CASE("corpus JSON round-trips exactly") {
  Dataset ds;
  ds.docs.push_back(two_sentence_doc());
  const std::string text = docred_to_string(ds);
  Dataset back = parse_docred(text);
  REQUIRE(back == ds);
  REQUIRE(docred_to_string(back) == text);
}

TEST_CASE("corpus validation names the offending record") {
  Dataset ds;
  ds.docs.push_back(two_sentence_doc());

  SECTION("mention sentence out of range") {
    ds.docs[0].entities[0].mentions[0].sent_id = 7;
    REQUIRE_THROWS_MATCHES(parse_docred(docred_to_string(ds)), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("document 0") &&
                               ContainsSubstring("vertexSet[0][0]") &&
                               ContainsSubstring("sent_id")));
  }
  SECTION("label head out of range") {
    ds.docs[0].facts[0].head = 9;
    REQUIRE_THROWS_MATCHES(parse_docred(docred_to_string(ds)), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("labels[0]") &&
                               ContainsSubstring(".h = 9")));
  }
  SECTION("evidence sentence out of range") {
    ds.docs[0].facts[0].evidence = {5};
    REQUIRE_THROWS_MATCHES(parse_docred(docred_to_string(ds)), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("labels[0]") &&
                               ContainsSubstring("evidence sentence 5")));
  }
  SECTION("mention span out of bounds") {
    ds.docs[0].entities[0].mentions[0].end = 9;
    REQUIRE_THROWS_MATCHES(parse_docred(docred_to_string(ds)), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("pos = [0, 9)")));
  }
  SECTION("malformed JSON") {
    REQUIRE_THROWS_MATCHES(parse_docred("[{\"title\": "), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("malformed")));
  }
  SECTION("duplicate titles") {
    ds.docs.push_back(two_sentence_doc());
    REQUIRE_THROWS_MATCHES(parse_docred(docred_to_string(ds)), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("duplicate title")));
  }
  SECTION("non-integer relation id") {
    std::string text = docred_to_string(ds);
    const auto at = text.find("\"r\": 3");
    text.replace(at, 6, "\"r\": \"P17\"");
    REQUIRE_THROWS_MATCHES(parse_docred(text), DataError,
                           Catch::Matchers::MessageMatches(
                               ContainsSubstring("P17")));
  }
}

TEST_CASE("flatten lays out markers, spans and the inverse map") {
  FlatIndex flat = flatten(two_sentence_doc());
  const std::vector<std::string> want = {"[CLS]", "[MRK]", "alpha", "[MRK]",
                                         "beta",  "[MRK]", "gamma", "[MRK]",
                                         "[SEP]"};
  REQUIRE(flat.tokens == want);
  REQUIRE(flat.sentence_spans ==
          std::vector<std::pair<std::size_t, std::size_t>>{{1, 5}, {5, 8}});
  REQUIRE(flat.mention_positions ==
          std::vector<std::vector<std::size_t>>{{1}, {5}});
  REQUIRE(flat.sentence_of == std::vector<int>{-1, 0, 0, 0, 0, 1, 1, 1, -1});
  REQUIRE(flat.is_special(0));
  REQUIRE(flat.is_special(8));
  REQUIRE_FALSE(flat.is_special(1));
}

TEST_CASE("flatten handles adjacent and nested mentions") {
  SECTION("adjacent mentions close before the next opens") {
    Document doc;
    doc.title = "adj";
    doc.sentences = {{"x", "y"}};
    doc.entities.resize(2);
    doc.entities[0].mentions = {Mention{0, 0, 1, "x"}};
    doc.entities[1].mentions = {Mention{0, 1, 2, "y"}};
    FlatIndex flat = flatten(doc);
    const std::vector<std::string> want = {"[CLS]", "[MRK]", "x",    "[MRK]",
                                           "[MRK]", "y",     "[MRK]", "[SEP]"};
    REQUIRE(flat.tokens == want);
    REQUIRE(flat.mention_positions ==
            std::vector<std::vector<std::size_t>>{{1}, {4}});
  }
  SECTION("nested mentions open outermost-first") {
    Document doc;
    doc.title = "nest";
    doc.sentences = {{"x", "y"}};
    doc.entities.resize(2);
    doc.entities[0].mentions = {Mention{0, 0, 2, "x y"}};
    doc.entities[1].mentions = {Mention{0, 0, 1, "x"}};
    FlatIndex flat = flatten(doc);
    const std::vector<std::string> want = {"[CLS]", "[MRK]", "[MRK]", "x",
                                           "[MRK]", "y",     "[MRK]", "[SEP]"};
    REQUIRE(flat.tokens == want);
    REQUIRE(flat.mention_positions ==
            std::vector<std::vector<std::size_t>>{{1}, {2}});
  }
}

TEST_CASE("flatten invariants hold on generated corpora") {
  SynthSpec spec;
  spec.seed = 123;
  spec.num_docs = 12;
  spec.entities_per_doc = 4;
  spec.facts_per_doc = 3;
  Dataset ds = generate_synthetic(spec);
  for (const Document& doc : ds.docs) {
    FlatIndex flat = flatten(doc);
    REQUIRE(flat.tokens.front() == std::string(kClsToken));
    REQUIRE(flat.tokens.back() == std::string(kSepToken));

    // Sentence spans partition everything between [CLS] and [SEP].
    std::size_t cursor = 1;
    for (std::size_t s = 0; s < flat.num_sentences(); ++s) {
      REQUIRE(flat.sentence_spans[s].first == cursor);
      REQUIRE(flat.sentence_spans[s].second > flat.sentence_spans[s].first);
      cursor = flat.sentence_spans[s].second;
      for (std::size_t p = flat.sentence_spans[s].first;
           p < flat.sentence_spans[s].second; ++p)
        REQUIRE(flat.sentence_of[p] == static_cast<int>(s));
    }
    REQUIRE(cursor == flat.num_tokens() - 1);

    std::size_t mentions = 0, markers = 0;
    for (const auto& per_entity : flat.mention_positions) {
      mentions += per_entity.size();
      for (std::size_t pos : per_entity)
        REQUIRE(flat.tokens[pos] == std::string(kMarkerToken));
    }
    for (const auto& tok : flat.tokens)
      if (tok == kMarkerToken) ++markers;
    REQUIRE(markers == 2 * mentions);
  }
}

TEST_CASE("evidence vectors take the union and normalize") {
  RelationFact a{0, 1, 2, {0, 2}};
  RelationFact b{0, 1, 5, {2, 3}};
  auto z = evidence_vector({&a, &b}, 5);
  REQUIRE(z.has_value());
  REQUIRE(z->size() == 5);
  const double third = 1.0 / 3.0;
  REQUIRE((*z)[0] == Catch::Approx(third));
  REQUIRE((*z)[1] == 0.0);
  REQUIRE((*z)[2] == Catch::Approx(third));
  REQUIRE((*z)[3] == Catch::Approx(third));
  REQUIRE((*z)[4] == 0.0);

  RelationFact bare{0, 1, 2, {}};
  REQUIRE_FALSE(evidence_vector({&bare}, 5).has_value());
  REQUIRE_FALSE(evidence_vector({}, 5).has_value());

  Document doc = two_sentence_doc();
  auto zp = pair_evidence_vector(doc, 0, 1);
  REQUIRE(zp.has_value());
  REQUIRE((*zp)[1] == 1.0);
  REQUIRE_FALSE(pair_evidence_vector(doc, 1, 0).has_value());
}

TEST_CASE("synthetic generation is deterministic") {
  SynthSpec spec;
  spec.seed = 7;
  spec.num_docs = 6;
  Dataset a = generate_synthetic(spec);
  Dataset b = generate_synthetic(spec);
  REQUIRE(a == b);
  REQUIRE(docred_to_string(a) == docred_to_string(b));

  spec.seed = 8;
  REQUIRE_FALSE(generate_synthetic(spec) == a);
}

TEST_CASE("planted patterns appear exactly in their evidence sentences") {
  SynthSpec spec;
  spec.seed = 97;
  spec.num_docs = 20;
  spec.entities_per_doc = 4;
  spec.facts_per_doc = 3;
  Dataset ds = generate_synthetic(spec);

  for (const Document& doc : ds.docs) {
    REQUIRE_FALSE(doc.facts.empty());
    for (const Entity& ent : doc.entities) REQUIRE_FALSE(ent.mentions.empty());

    for (const RelationFact& fact : doc.facts) {
      REQUIRE(fact.relation >= 1);
      REQUIRE(fact.relation <= static_cast<int>(spec.num_relation_types));
      REQUIRE_FALSE(fact.evidence.empty());
      const std::string& h = doc.entities[fact.head].mentions[0].name;
      const std::string& t = doc.entities[fact.tail].mentions[0].name;
      const std::string trig = "rel" + std::to_string(fact.relation);

      std::set<std::size_t> found;
      for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
        const auto& sent = doc.sentences[s];
        for (std::size_t p = 0; p + 2 < sent.size(); ++p)
          if (sent[p] == h && sent[p + 1] == trig && sent[p + 2] == t)
            found.insert(s);
      }
      REQUIRE(found == std::set<std::size_t>(fact.evidence.begin(),
                                             fact.evidence.end()));
    }
  }
}

TEST_CASE("majority-class baseline stays weak on planted corpora") {
  SynthSpec spec;
  spec.seed = 7;
  spec.num_docs = 50;
  Dataset ds = generate_synthetic(spec);

  std::map<int, std::size_t> counts;
  std::size_t gold = 0;
  for (const Document& doc : ds.docs)
    for (const RelationFact& fact : doc.facts) {
      ++counts[fact.relation];
      ++gold;
    }
  int majority = 0;
  std::size_t best = 0;
  for (auto& [r, c] : counts)
    if (c > best) best = c, majority = r;

  // Predict the majority relation for every ordered entity pair.
  std::size_t tp = 0, pred = 0;
  for (const Document& doc : ds.docs) {
    const std::size_t n = doc.entities.size();
    pred += n * (n - 1);
    for (const RelationFact& fact : doc.facts)
      if (fact.relation == majority) ++tp;
  }
  const double p = static_cast<double>(tp) / static_cast<double>(pred);
  const double r = static_cast<double>(tp) / static_cast<double>(gold);
  const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  REQUIRE(f1 < 0.3);
}

TEST_CASE("undersized vocabularies are rejected") {
  SynthSpec spec;
  spec.vocab_size = 10;
  REQUIRE_THROWS_MATCHES(generate_synthetic(spec), DataError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("vocabulary too small")));
}

TEST_CASE("strip_evidence keeps labels and drops evidence") {
  SynthSpec spec;
  spec.num_docs = 3;
  Dataset ds = generate_synthetic(spec);
  Dataset stripped = ds;
  strip_evidence(stripped);
  std::size_t facts = 0;
  for (std::size_t d = 0; d < ds.docs.size(); ++d) {
    REQUIRE(stripped.docs[d].facts.size() == ds.docs[d].facts.size());
    for (const RelationFact& fact : stripped.docs[d].facts) {
      REQUIRE(fact.evidence.empty());
      ++facts;
    }
  }
  REQUIRE(facts > 0);
}

TEST_CASE("missing corpus files raise an IO error") {
  REQUIRE_THROWS_AS(load_docred("/nonexistent/corpus.json"), IoError);
}
