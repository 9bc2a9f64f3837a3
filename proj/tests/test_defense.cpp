#include "malcom/defense.hpp"

#include "malcom/errors.hpp"
#include "malcom/synth.hpp"

#include "doctest.h"

#include <algorithm>
#include <set>

using namespace malcom;

namespace {

struct DefenseWorld {
  Dataset train;
  Vocabulary vocab;
  TopicSet topics;
  WordRecognizer recognizer;
};

DefenseWorld& defense_world() {
  static DefenseWorld* w = [] {
    SynthConfig sc;
    sc.articles_per_class = 60;
    sc.comments_per_article = 4;
    Dataset corpus = synth_corpus(sc, 808);
    Vocabulary vocab = Vocabulary::build(corpus, 4000);
    std::vector<std::string> contents;
    for (const auto& a : corpus.articles) contents.push_back(a.content);
    TopicSet topics = fit_topic_set(contents, {4}, 17);
    WordRecognizer rec = dictionary_recognizer(vocab);
    return new DefenseWorld{std::move(corpus), std::move(vocab), std::move(topics),
                            std::move(rec)};
  }();
  return *w;
}

// An article whose words come verbatim from one planted pool, so coherency
// behavior is fully controlled.
Article pool_article(int topic) {
  const auto& pool = synth_topic_groups()[std::size_t(topic)];
  Article a;
  a.id = "pool" + std::to_string(topic);
  std::string text;
  for (std::size_t i = 0; i < 12; ++i) {
    if (!text.empty()) text.push_back(' ');
    text += pool[i];
  }
  a.content = text;
  std::string title;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!title.empty()) title.push_back(' ');
    title += pool[i];
  }
  a.title = title;
  a.label = 0;
  return a;
}

std::string pool_comment(int topic, std::size_t offset, std::size_t n) {
  const auto& pool = synth_topic_groups()[std::size_t(topic)];
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += pool[(offset + i) % pool.size()];
  }
  return out;
}

}  // namespace

TEST_SUITE("defense") {

TEST_CASE("suspicious counts match the pinned examples") {
  auto& w = defense_world();
  const auto& rec = w.recognizer;

  CHECK(count_suspicious("her dad gave her a great smile", rec) == 0);
  CHECK(count_suspicious("her dad ga ve her a great smile", rec) == 2);  // "ga" and "ve"
  CHECK(count_suspicious("he11o", rec) == 1);
  CHECK(count_suspicious("", rec) == 0);

  // Leet disguises of vocabulary words are caught through the inverse map.
  CHECK(count_suspicious("c0ach", rec) == 1);
  CHECK(count_suspicious("g@ve", rec) == 1);
  CHECK(count_suspicious("h0ax exposed", rec) == 1);

  // Ordinary text survives: contractions, numerals, edge punctuation.
  CHECK(count_suspicious("don't stop", rec) == 0);
  CHECK(count_suspicious("rated 10 of 10", rec) == 0);
  CHECK(count_suspicious("'great' story", rec) == 0);

  // Domain words come from the train vocabulary, not the common list.
  CHECK(count_suspicious("goalie scoreboard vaccine", rec) == 0);
  CHECK(count_suspicious("zzqqy", rec) == 1);
}

TEST_CASE("recognizer is pluggable") {
  WordRecognizer accept_all = [](const std::string&) { return true; };
  WordRecognizer reject_all = [](const std::string&) { return false; };
  CHECK(count_suspicious("zzqqy qqzzt", accept_all) == 0);
  CHECK(count_suspicious("coach season trophy", reject_all) == 3);
}

TEST_CASE("defense config validates and round trips") {
  DefenseConfig c;
  CHECK_NOTHROW(c.validate());
  const auto back = DefenseConfig::from_json(c.to_json());
  CHECK(back.max_suspicious == c.max_suspicious);
  CHECK(back.coherency_margin == doctest::Approx(c.coherency_margin));

  auto j = c.to_json();
  j["coherency_margin"] = -0.1;
  CHECK_THROWS_AS(static_cast<void>(DefenseConfig::from_json(j)), SchemaError);
  DefenseConfig bad;
  bad.max_suspicious = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("clean on-topic comments pass, bugged and off-topic ones fall") {
  auto& w = defense_world();
  const Article a = pool_article(0);
  DefenseConfig cfg;

  const std::string on_topic = pool_comment(0, 3, 6);
  const std::string bugged = "co ach se@son pl@yoff " + pool_comment(0, 6, 3);  // 4 flags
  const std::string off_topic = pool_comment(1, 0, 6);

  const auto r = defend(a, {on_topic, bugged, off_topic}, w.topics, cfg, w.recognizer);
  REQUIRE(r.verdicts.size() == 3);
  CHECK(!r.verdicts[0].removed);
  CHECK(r.verdicts[0].reason.empty());
  CHECK(r.verdicts[1].removed);
  CHECK(r.verdicts[1].suspicious > 1);
  CHECK(r.verdicts[1].reason.find("misspelling") != std::string::npos);
  CHECK(r.verdicts[2].removed);
  CHECK(r.verdicts[2].reason == "coherency");
  CHECK(r.kept == std::vector<std::string>{on_topic});
  CHECK(r.filter_out_rate == doctest::Approx(2.0 / 3.0));

  const auto j = r.to_json();
  CHECK(j["verdicts"].size() == 3);
  CHECK(j["kept"].size() == 1);
  CHECK(j["verdicts"][1]["removed"].get<bool>());
}

TEST_CASE("one misspelling is tolerated, two are not") {
  auto& w = defense_world();
  const Article a = pool_article(2);
  DefenseConfig cfg;

  const std::string one_bug = "sh@res " + pool_comment(2, 1, 6);
  const std::string two_bugs = "sh@res m@rket " + pool_comment(2, 2, 5);
  const auto r = defend(a, {one_bug, two_bugs}, w.topics, cfg, w.recognizer);
  CHECK(r.verdicts[0].suspicious == 1);
  CHECK(!r.verdicts[0].removed);
  CHECK(r.verdicts[1].suspicious == 2);
  CHECK(r.verdicts[1].removed);
}

TEST_CASE("the title survives as a comment even at margin zero") {
  auto& w = defense_world();
  DefenseConfig cfg;
  cfg.coherency_margin = 0.0;  // boundary: coherency == floor must pass
  for (int topic = 0; topic < 4; ++topic) {
    const Article a = pool_article(topic);
    const auto r = defend(a, {a.title}, w.topics, cfg, w.recognizer);
    CHECK(r.kept == std::vector<std::string>{a.title});
    CHECK(r.verdicts[0].coherency == doctest::Approx(r.title_coherency));
  }
}

TEST_CASE("empty comment list gives rate zero and keeps nothing") {
  auto& w = defense_world();
  const auto r = defend(pool_article(1), {}, w.topics, DefenseConfig{}, w.recognizer);
  CHECK(r.kept.empty());
  CHECK(r.verdicts.empty());
  CHECK(r.filter_out_rate == 0.0);
}

TEST_CASE("verdicts are per comment: order cannot change the kept set") {
  auto& w = defense_world();
  const Article a = pool_article(3);
  std::vector<std::string> comments = {
      pool_comment(3, 0, 6), "v@ccine d0ctor " + pool_comment(3, 4, 4), pool_comment(0, 0, 6),
      pool_comment(3, 8, 5), "cl1nic " + pool_comment(3, 2, 5)};
  const auto fwd = defend(a, comments, w.topics, DefenseConfig{}, w.recognizer);

  auto reversed = comments;
  std::reverse(reversed.begin(), reversed.end());
  const auto rev = defend(a, reversed, w.topics, DefenseConfig{}, w.recognizer);

  const std::multiset<std::string> kf(fwd.kept.begin(), fwd.kept.end());
  const std::multiset<std::string> kr(rev.kept.begin(), rev.kept.end());
  CHECK(kf == kr);
  CHECK(fwd.filter_out_rate == doctest::Approx(rev.filter_out_rate));
}

TEST_CASE("growing the margin never shrinks the kept set") {
  auto& w = defense_world();
  const Article a = pool_article(0);
  std::vector<std::string> comments;
  comments.push_back(pool_comment(0, 2, 6));      // on topic
  comments.push_back(pool_comment(1, 3, 6));      // off topic
  comments.push_back(pool_comment(2, 1, 6));      // off topic
  comments.push_back(pool_comment(0, 9, 4));      // on topic, different words
  comments.push_back("hoax hoax " + pool_comment(0, 4, 4));

  std::vector<std::string> prev;
  for (double margin : {0.0, 0.05, 0.2, 1.0}) {
    DefenseConfig cfg;
    cfg.coherency_margin = margin;
    const auto r = defend(a, comments, w.topics, cfg, w.recognizer);
    for (const auto& k : prev)
      CHECK(std::count(r.kept.begin(), r.kept.end(), k) >= 1);  // superset of smaller margin
    prev = r.kept;
  }
}

TEST_CASE("bugged attack text is filtered far more often than clean text") {
  auto& w = defense_world();
  // Clean donor comments from real synth articles vs their bugged rewrites.
  std::vector<std::string> clean;
  for (const auto& a : w.train.articles) {
    if (a.label != 0) continue;
    clean.push_back(a.comments.front());
    if (clean.size() == 12) break;
  }
  REQUIRE(clean.size() == 12);

  std::vector<std::string> bugged;
  for (const auto& c : clean) {
    auto toks = tokenize(c);
    // Bug the two leading words the way the character-level attack does.
    for (std::size_t i = 0; i < 2 && i < toks.size(); ++i) {
      std::string& t = toks[i];
      if (t.size() >= 2) t.insert(t.size() / 2, 1, ' ');
    }
    std::string joined;
    for (const auto& t : toks) {
      if (!joined.empty()) joined.push_back(' ');
      joined += t;
    }
    bugged.push_back(joined);
  }

  int removed_clean = 0, removed_bugged = 0;
  for (const auto& a : w.train.articles) {
    if (a.label != 1) continue;
    const auto rc = defend(a, clean, w.topics, DefenseConfig{}, w.recognizer);
    const auto rb = defend(a, bugged, w.topics, DefenseConfig{}, w.recognizer);
    removed_clean += static_cast<int>(clean.size() - rc.kept.size());
    removed_bugged += static_cast<int>(bugged.size() - rb.kept.size());
    break;  // one representative article keeps the case fast
  }
  CHECK(removed_bugged > removed_clean);
  CHECK(removed_bugged >= 10);  // split words read as gibberish and trip the recognizer
}

}  // TEST_SUITE
