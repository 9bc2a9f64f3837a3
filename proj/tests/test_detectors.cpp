#include "doctest.h"

#include "fd_check.hpp"
#include "malcom/detectors.hpp"
#include "malcom/errors.hpp"
#include "malcom/synth.hpp"

#include <cmath>
#include <cstdio>

namespace {

using malcom::Arch;
using malcom::CommentInput;
using malcom::Detector;
using malcom::DetectorConfig;
using malcom::Vocabulary;
using malcom::nn::Graph;
using malcom::nn::Mat;

DetectorConfig tiny_config() {
  DetectorConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden = 8;
  cfg.content_dim = 8;
  cfg.comment_budget = 3;
  cfg.max_comment_tokens = 6;
  cfg.conv_filters = 4;
  cfg.conv_widths = {2};
  cfg.defend_chunk = 4;
  return cfg;
}

malcom::Dataset tiny_dataset() {
  malcom::SynthConfig sc;
  sc.articles_per_class = 4;
  sc.comments_per_article = 3;
  sc.content_len = 10;
  sc.title_len = 5;
  return malcom::synth_corpus(sc, 31);
}

std::vector<CommentInput> hard_all(const Detector& f, const std::vector<std::string>& comments) {
  std::vector<CommentInput> out;
  for (const auto& c : comments)
    out.push_back(malcom::hard_comment(f.vocab(), c, f.config().max_comment_tokens));
  return out;
}

}  // namespace

TEST_SUITE("detectors") {
  TEST_CASE("architecture tags round-trip and unknown tags fail") {
    for (Arch a : malcom::all_archs()) CHECK(malcom::arch_from_tag(malcom::arch_tag(a)) == a);
    CHECK_THROWS_AS(malcom::arch_from_tag("mystery"), std::invalid_argument);
  }

  TEST_CASE("predictions live in (0,1) for every architecture, with and without comments") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    for (Arch a : malcom::all_archs()) {
      Detector f(a, tiny_config(), vocab, 7);
      const auto& art = d.articles[0];
      const double with = f.predict_p(art.content, art.comments);
      CHECK(with > 0.0);
      CHECK(with < 1.0);
      const double without = f.predict_p(art.content, {});
      CHECK(without > 0.0);
      CHECK(without < 1.0);
    }
  }

  TEST_CASE("csi_t ignores article content entirely") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::csi_t, tiny_config(), vocab, 3);
    const auto& art = d.articles[1];
    const double a = f.predict_p(art.content, art.comments);
    const double b = f.predict_p("completely different words", art.comments);
    const double c = f.predict_p("", art.comments);
    CHECK(a == b);
    CHECK(a == c);
    // Every other architecture reacts to the content.
    for (Arch t : {Arch::f_cnn, Arch::f_rnn, Arch::textcnn, Arch::defend}) {
      Detector g(t, tiny_config(), vocab, 3);
      CHECK(g.predict_p(art.content, art.comments) !=
            g.predict_p(d.articles[5].content, art.comments));
    }
  }

  TEST_CASE("mean-aggregating architectures are comment-permutation invariant") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    const auto& art = d.articles[2];
    std::vector<std::string> fwd = art.comments;
    std::vector<std::string> rev(fwd.rbegin(), fwd.rend());
    REQUIRE(fwd.size() >= 2);
    REQUIRE(fwd != rev);
    for (Arch a : {Arch::f_cnn, Arch::textcnn}) {
      Detector f(a, tiny_config(), vocab, 11);
      CHECK(f.predict_p(art.content, fwd) ==
            doctest::Approx(f.predict_p(art.content, rev)).epsilon(1e-12));
    }
    for (Arch a : {Arch::f_rnn, Arch::csi_t}) {
      Detector f(a, tiny_config(), vocab, 11);
      CHECK(f.predict_p(art.content, fwd) != f.predict_p(art.content, rev));
    }
  }

  TEST_CASE("comments beyond the budget are ignored; override widens the window") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::f_rnn, tiny_config(), vocab, 5);  // budget 3
    const auto& art = d.articles[0];
    std::vector<std::string> three(art.comments.begin(), art.comments.begin() + 3);
    std::vector<std::string> extra = three;
    extra.push_back("one more trailing comment here");
    CHECK(f.predict_p(art.content, three) == f.predict_p(art.content, extra));
    CHECK(f.predict_p(art.content, three, 4) != f.predict_p(art.content, extra, 4));
  }

  TEST_CASE("defend co-attention rows are simplexes") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::defend, tiny_config(), vocab, 13);
    Graph g;
    const auto& art = d.articles[3];
    auto fwd = f.forward(g, art.content, hard_all(f, art.comments));
    REQUIRE(fwd.attention >= 0);
    const Mat& attn = g.val(fwd.attention);
    CHECK(attn.rows() == 3);  // budget-capped comments
    for (Eigen::Index i = 0; i < attn.rows(); ++i) {
      CHECK(attn.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
      for (Eigen::Index j = 0; j < attn.cols(); ++j) CHECK(attn(i, j) >= 0.0);
    }
  }

  TEST_CASE("bce training gradients match finite differences on tiny models") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    // f_rnn covers embedding/dense/gru; f_cnn covers the conv bank; defend
    // covers co-attention.
    for (Arch a : {Arch::f_rnn, Arch::f_cnn, Arch::defend}) {
      Detector f(a, tiny_config(), vocab, 17);
      auto fn = [&]() {
        Graph g;
        std::vector<Graph::Var> scores;
        std::vector<double> labels;
        for (int i : {0, 5}) {
          const auto& art = d.articles[std::size_t(i)];
          auto fwd = f.forward(g, art.content, hard_all(f, art.comments));
          scores.push_back(fwd.score);
          labels.push_back(double(art.label));
        }
        auto loss = malcom::bce_from_scores(g, g.concat_cols(scores), labels);
        g.backward(loss);
        return g.val(loss)(0, 0);
      };
      testutil::fd_check(f.params(), fn, 1e-5, 1e-3);
    }
  }

  TEST_CASE("gradients reach relaxed comments but never frozen parameters") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::f_rnn, tiny_config(), vocab, 19);
    malcom::nn::Param logits(vocab.size(), 4, "relaxed_logits");
    malcom::Rng rng(3);
    logits.value = testutil::filled(vocab.size(), 4, rng);

    auto fn = [&]() {
      Graph g;
      CommentInput soft;
      soft.relaxed = g.softmax_cols(g.param(logits));
      soft.len = 4;
      auto fwd = f.forward(g, d.articles[0].content, {soft}, /*frozen=*/true);
      auto loss = malcom::bce_from_scores(g, fwd.score, {0.0});
      g.backward(loss);
      return g.val(loss)(0, 0);
    };
    for (auto* p : f.params()) p->zero_grad();
    testutil::fd_check({&logits}, fn, 1e-5, 1e-4);
    for (auto* p : f.params()) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("training separates the planted corpus and flipped labels invert it") {
    malcom::SynthConfig sc;
    sc.articles_per_class = 60;
    sc.comments_per_article = 8;
    const auto corpus = malcom::synth_corpus(sc, 41);
    auto [train, test] = malcom::split(corpus, 0.8, 5);
    const auto vocab = Vocabulary::build(train, 2000);

    DetectorConfig cfg;  // desk-scale defaults
    Detector f(Arch::f_rnn, cfg, vocab, 23);
    const auto m = malcom::train_detector(f, train, test, 8, 3e-3, 29);
    CHECK(m.accuracy >= 0.9);
    CHECK(m.f1 > 0.8);
    REQUIRE(m.train_loss.size() == 8);
    CHECK(m.train_loss.back() < m.train_loss.front());

    auto flipped_train = train;
    for (auto& a : flipped_train.articles) a.label = 1 - a.label;
    Detector ff(Arch::f_rnn, cfg, vocab, 23);
    (void)malcom::train_detector(ff, flipped_train, test, 8, 3e-3, 29);
    const auto on_true = malcom::evaluate_detector(ff, test);
    CHECK(on_true.accuracy <= 1.0 - m.accuracy + 0.1);
  }

  TEST_CASE("content encoder retrieves same-class neighbors above chance") {
    malcom::SynthConfig sc;
    sc.articles_per_class = 40;
    sc.comments_per_article = 4;
    const auto corpus = malcom::synth_corpus(sc, 43);
    auto [train, test] = malcom::split(corpus, 0.8, 5);
    const auto vocab = Vocabulary::build(train, 2000);
    Detector f(Arch::f_rnn, DetectorConfig{}, vocab, 23);
    (void)malcom::train_detector(f, train, test, 6, 3e-3, 29);

    std::vector<Mat> encs;
    for (const auto& a : train.articles) encs.push_back(f.encode_content_values(a.content));
    int same = 0;
    for (std::size_t i = 0; i < train.articles.size(); ++i) {
      double best = -2.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < train.articles.size(); ++j) {
        if (i == j) continue;
        const double cos =
            encs[i].col(0).dot(encs[j].col(0)) / (encs[i].norm() * encs[j].norm() + 1e-12);
        if (cos > best) {
          best = cos;
          best_j = j;
        }
      }
      same += train.articles[i].label == train.articles[best_j].label ? 1 : 0;
    }
    CHECK(double(same) / double(train.articles.size()) > 0.6);
  }

  TEST_CASE("checkpoints round-trip and refuse a mismatched vocabulary") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::defend, tiny_config(), vocab, 37);
    const auto& art = d.articles[0];
    const double before = f.predict_p(art.content, art.comments);
    const std::string path = "test_detector_ckpt.json";
    malcom::save_detector(path, f);
    Detector g = malcom::load_detector(path, vocab);
    CHECK(g.predict_p(art.content, art.comments) == doctest::Approx(before).epsilon(1e-12));

    malcom::Dataset other = d;
    other.articles[0].title += " extraindividualword";
    const auto vocab2 = Vocabulary::build(other, 500);
    CHECK_THROWS_AS(malcom::load_detector(path, vocab2), malcom::SchemaError);
    std::remove(path.c_str());
  }

  TEST_CASE("degenerate training sets are rejected") {
    const auto d = tiny_dataset();
    const auto vocab = Vocabulary::build(d, 500);
    Detector f(Arch::f_cnn, tiny_config(), vocab, 41);
    malcom::Dataset single;
    for (const auto& a : d.articles)
      if (a.label == 1) single.articles.push_back(a);
    CHECK_THROWS_AS(malcom::train_detector(f, single, d, 1, 1e-3, 1), std::invalid_argument);
    CHECK_THROWS_AS(malcom::train_detector(f, malcom::Dataset{}, d, 1, 1e-3, 1),
                    std::invalid_argument);
  }
}
