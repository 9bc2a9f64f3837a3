#include "doctest.h"

#include "malcom/errors.hpp"
#include "malcom/rng.hpp"
#include "malcom/synth.hpp"
#include "malcom/topics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace {

// Two document groups with zero vocabulary overlap. Documents are long
// relative to the smoothing prior so topic assignments can couple within a
// document.
std::vector<std::string> disjoint_corpus() {
  std::vector<std::string> docs;
  for (int i = 0; i < 12; ++i) {
    const char* phrase = i % 2 == 0 ? "apple banana cherry grape melon"
                                    : "engine gearbox clutch piston brake";
    std::string doc;
    for (int r = 0; r < 12; ++r) {
      if (!doc.empty()) doc.push_back(' ');
      doc += phrase;
    }
    docs.push_back(doc);
  }
  return docs;
}

bool in_group(const std::string& w, int g) {
  static const std::set<std::string> fruit = {"apple", "banana", "cherry", "grape", "melon"};
  static const std::set<std::string> car = {"engine", "gearbox", "clutch", "piston", "brake"};
  return (g == 0 ? fruit : car).count(w) > 0;
}

}  // namespace

TEST_SUITE("topics") {
  TEST_CASE("fitted topics separate disjoint vocabulary groups") {
    const auto docs = disjoint_corpus();
    const auto m = malcom::fit_topic_model(docs, 2, 3);
    REQUIRE(m.k == 2);
    for (int t = 0; t < 2; ++t) {
      const double sum = m.topic_word.row(t).sum();
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    // Each topic's top word comes from exactly one group, and the two topics
    // cover different groups.
    const auto top0 = m.topic_words(0, 1);
    const auto top1 = m.topic_words(1, 1);
    REQUIRE(top0.size() == 1);
    REQUIRE(top1.size() == 1);
    const int g0 = in_group(top0[0], 0) ? 0 : 1;
    const int g1 = in_group(top1[0], 0) ? 0 : 1;
    CHECK(g0 != g1);

    // Pure documents infer > 0.9 mass on their group's topic.
    const auto p_fruit = m.infer(docs[0]);
    CHECK(*std::max_element(p_fruit.begin(), p_fruit.end()) > 0.9);
    const auto p_car = m.infer(docs[1]);
    int arg_f = p_fruit[0] > p_fruit[1] ? 0 : 1;
    int arg_c = p_car[0] > p_car[1] ? 0 : 1;
    CHECK(arg_f != arg_c);
  }

  TEST_CASE("fitting is deterministic per seed") {
    const auto docs = disjoint_corpus();
    const auto a = malcom::fit_topic_model(docs, 2, 11);
    const auto b = malcom::fit_topic_model(docs, 2, 11);
    CHECK((a.topic_word - b.topic_word).cwiseAbs().maxCoeff() == 0.0);
    // On an ambiguous corpus the chain's endpoint depends on the seed.
    std::vector<std::string> soup;
    malcom::Rng rng(77);
    const std::vector<std::string> pool = {"red", "blue", "green", "gold", "gray", "pink"};
    for (int i = 0; i < 8; ++i) {
      std::string doc;
      for (int t = 0; t < 40; ++t) {
        if (!doc.empty()) doc.push_back(' ');
        doc += pool[std::size_t(rng.index(pool.size()))];
      }
      soup.push_back(doc);
    }
    const auto c1 = malcom::fit_topic_model(soup, 2, 12, 20);
    const auto c2 = malcom::fit_topic_model(soup, 2, 13, 20);
    CHECK((c1.topic_word - c2.topic_word).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("identical documents infer identical distributions") {
    const std::vector<std::string> docs = {"alpha beta gamma delta", "alpha beta gamma delta",
                                           "epsilon zeta eta theta", "epsilon zeta eta theta"};
    const auto m = malcom::fit_topic_model(docs, 2, 5);
    CHECK(m.infer(docs[0]) == m.infer(docs[1]));
  }

  TEST_CASE("inference returns a simplex; oov falls back to uniform") {
    const auto m = malcom::fit_topic_model(disjoint_corpus(), 3, 7);
    for (const char* text : {"apple engine", "apple apple apple", "mixed engine brake apple"}) {
      const auto p = m.infer(text);
      REQUIRE(int(p.size()) == 3);
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
    const auto u = m.infer("zzz qqq www");
    for (double v : u) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const auto u2 = m.infer("");
    for (double v : u2) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("coherency matches the hand-computed cosine") {
    // cos([0.8,0.2],[0.2,0.8]) = 0.32/0.68.
    const double want = 0.32 / 0.68;
    std::vector<double> a = {0.8, 0.2}, b = {0.2, 0.8};
    double dot = a[0] * b[0] + a[1] * b[1];
    double na = std::sqrt(a[0] * a[0] + a[1] * a[1]);
    double nb = std::sqrt(b[0] * b[0] + b[1] * b[1]);
    CHECK(dot / (na * nb) == doctest::Approx(want).epsilon(1e-12));
    CHECK(want == doctest::Approx(0.4706).epsilon(1e-3));

    // Self-pairs score exactly 1 through the full coherency path.
    const auto docs = disjoint_corpus();
    const auto m = malcom::fit_topic_model(docs, 2, 3);
    CHECK(malcom::coherency_tk(m, docs, docs) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("coherency averages over the topic set and ignores pair order") {
    const auto docs = disjoint_corpus();
    const auto set = malcom::fit_topic_set(docs, {2, 3}, 9, 5, 60);
    REQUIRE(set.models.size() == 2);
    const double direct = malcom::coherency(set, docs, docs);
    CHECK(direct == doctest::Approx(1.0).epsilon(1e-12));
    const double one = malcom::coherency_tk(set.models[0], docs, docs);
    const double two = malcom::coherency_tk(set.models[1], docs, docs);
    CHECK(direct == doctest::Approx(0.5 * (one + two)).epsilon(1e-12));

    std::vector<std::string> contents = {docs[0], docs[1], docs[2]};
    std::vector<std::string> comments = {"apple banana", "engine brake", "cherry melon"};
    const double fwd = malcom::coherency(set, contents, comments);
    std::vector<std::string> rc = {contents[2], contents[0], contents[1]};
    std::vector<std::string> rm = {comments[2], comments[0], comments[1]};
    CHECK(malcom::coherency(set, rc, rm) == doctest::Approx(fwd).epsilon(1e-12));

    // Aligned pairs are more coherent than deliberately crossed ones.
    std::vector<std::string> crossed = {comments[1], comments[0], comments[1]};
    CHECK(fwd > malcom::coherency(set, contents, crossed));
  }

  TEST_CASE("coherency on planted-topic comments beats shuffled pairing") {
    malcom::SynthConfig cfg;
    cfg.articles_per_class = 30;
    cfg.comments_per_article = 2;
    const auto d = malcom::synth_corpus(cfg, 17);
    std::vector<std::string> contents, comments;
    for (const auto& a : d.articles) {
      contents.push_back(a.content);
      comments.push_back(a.comments[0]);
    }
    const auto set = malcom::fit_topic_set(contents, {4}, 5, 30, 80);
    const double aligned = malcom::coherency(set, contents, comments);
    auto shuffled = comments;
    malcom::Rng rng(23);
    rng.shuffle(shuffled);
    const double broken = malcom::coherency(set, contents, shuffled);
    CHECK(aligned > broken);
  }

  TEST_CASE("k selection prefers low-entropy candidates") {
    const auto docs = disjoint_corpus();
    const auto K = malcom::select_k_set(docs, {2, 12}, 3, 0.5, 80);
    REQUIRE(K.size() == 1);
    CHECK(K[0] == 2);
    const auto single = malcom::select_k_set(docs, {5}, 3);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == 5);
    const auto again = malcom::select_k_set(docs, {2, 12}, 3, 0.5, 80);
    CHECK(K == again);
  }

  TEST_CASE("top topic words stay inside the article's vocabulary group") {
    const auto docs = disjoint_corpus();
    const auto m = malcom::fit_topic_model(docs, 2, 3);
    const auto words = malcom::top_topic_words(m, docs[0], 5);
    REQUIRE(words.size() == 5);
    for (const auto& w : words) CHECK(in_group(w, 0));
    const auto one = malcom::top_topic_words(m, docs[1], 1);
    REQUIRE(one.size() == 1);
    CHECK(in_group(one[0], 1));
    // q beyond vocabulary returns every word.
    const auto all = malcom::top_topic_words(m, docs[0], 10000);
    CHECK(all.size() == m.vocab.size());
  }

  TEST_CASE("topic set serialization round-trips") {
    const auto docs = disjoint_corpus();
    const auto set = malcom::fit_topic_set(docs, {2, 3}, 9, 30, 40);
    const auto j = set.to_json();
    const auto set2 = malcom::TopicSet::from_json(j);
    CHECK(set2.K == set.K);
    CHECK(set2.q == set.q);
    REQUIRE(set2.models.size() == set.models.size());
    for (std::size_t i = 0; i < set.models.size(); ++i) {
      CHECK((set2.models[i].topic_word - set.models[i].topic_word).cwiseAbs().maxCoeff() == 0.0);
      CHECK(set2.models[i].infer(docs[0]) == set.models[i].infer(docs[0]));
    }
    auto bad = j;
    bad["models"][0]["topic_word"]["data"][0] = 0.5;
    CHECK_THROWS_AS(malcom::TopicSet::from_json(bad), malcom::SchemaError);
  }

  TEST_CASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(malcom::fit_topic_model({}, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(malcom::fit_topic_model({"a b"}, 1, 1), std::invalid_argument);
    // All tokens are stop words -> empty LDA vocabulary.
    CHECK_THROWS_AS(malcom::fit_topic_model({"the and of", "a an is"}, 2, 1),
                    std::invalid_argument);
  }
}
