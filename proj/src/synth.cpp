#include "malcom/synth.hpp"

#include <cstdio>
#include <stdexcept>

namespace malcom {

namespace {

const std::vector<std::vector<std::string>> kTopicGroups = {
    {"coach",  "season",  "playoff", "league",   "striker", "goalie",  "stadium", "referee",
     "tackle", "inning",  "dugout",  "halftime", "roster",  "draft",   "trophy",  "finals",
     "derby",  "batting", "fixture", "penalty",  "squad",   "transfer", "keeper",  "winger",
     "umpire", "kickoff", "lineup",  "overtime", "champion", "scoreboard"},
    {"guitar",  "album",   "concert", "chorus",   "melody",  "bassline", "drummer", "vocalist",
     "encore",  "studio",  "remix",   "ballad",   "tempo",   "lyrics",   "acoustic", "festival",
     "setlist", "producer", "harmony", "orchestra", "piano",   "single",   "tour",     "soundtrack",
     "verse",   "riff",     "duet",    "genre",     "billboard", "grammy"},
    {"shares",   "market",   "investor", "earnings", "dividend", "portfolio", "trading", "hedge",
     "futures",  "equity",   "merger",   "startup",  "valuation", "revenue",  "quarter", "forecast",
     "deficit",  "interest", "inflation", "bond",     "currency",  "broker",   "index",   "rally",
     "selloff" , "ipo",      "asset",     "stake",    "profit",    "lending"},
    {"vaccine",  "doctor",   "clinic",  "symptom", "patient",  "therapy",   "diagnosis", "nurse",
     "surgery",  "outbreak", "dosage",  "immune",  "hospital", "screening", "recovery",  "virus",
     "infection", "wellness", "nutrition", "allergy", "chronic", "remedy",    "trial",     "placebo",
     "epidemic", "hygiene",  "insulin",  "biopsy",  "pharmacy", "checkup"}};

const std::vector<std::string> kFakeWords = {
    "hoax",    "shocking", "exposed", "secret",   "banned",   "miracle", "conspiracy", "scandal",
    "rumored", "clickbait", "fabricated", "outrage", "bombshell", "coverup", "unbelievable"};

const std::vector<std::string> kRealWords = {
    "official", "confirmed", "verified", "statement", "spokesperson", "documented", "sourced",
    "accurate", "evidence",  "reported", "announced", "factual",      "credible",   "cited",
    "reviewed"};

const std::vector<std::string> kFillerWords = {
    "people", "today", "story", "update", "video", "photo",  "share", "read",  "week",  "world",
    "local",  "online", "media", "public", "press", "daily",  "live",  "post",  "group", "city"};

}  // namespace

const std::vector<std::vector<std::string>>& synth_topic_groups() { return kTopicGroups; }
const std::vector<std::string>& synth_fake_words() { return kFakeWords; }
const std::vector<std::string>& synth_real_words() { return kRealWords; }
const std::vector<std::string>& synth_filler_words() { return kFillerWords; }

Dataset synth_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.articles_per_class < 1) throw std::invalid_argument("synth: articles_per_class < 1");
  if (cfg.n_topics < 1 || cfg.n_topics > static_cast<int>(kTopicGroups.size()))
    throw std::invalid_argument("synth: n_topics must be in [1, " +
                                std::to_string(kTopicGroups.size()) + "]");
  if (cfg.comment_len_min < 1 || cfg.comment_len_max < cfg.comment_len_min)
    throw std::invalid_argument("synth: bad comment length bounds");

  Rng rng(seed);
  Dataset d;
  auto pick = [&rng](const std::vector<std::string>& pool) -> const std::string& {
    return pool[std::size_t(rng.index(pool.size()))];
  };
  auto pool_for = [&](int topic, int label, double topic_rate,
                      double class_rate) -> const std::vector<std::string>& {
    const double u = rng.uniform();
    if (u < topic_rate) return kTopicGroups[std::size_t(topic)];
    if (u < topic_rate + class_rate) return label == 1 ? kFakeWords : kRealWords;
    return kFillerWords;
  };
  auto make_text = [&](int len, int topic, int label, double topic_rate, double class_rate) {
    std::string out;
    for (int t = 0; t < len; ++t) {
      const std::string& w = pick(pool_for(topic, label, topic_rate, class_rate));
      if (!out.empty()) out.push_back(' ');
      out += w;
    }
    return out;
  };
  // Comments come out as fixed word pairs from the drawn pool, so sequence
  // models have real transition structure to learn; per-word pool frequencies
  // match the independent draws used for titles and contents.
  auto make_comment = [&](int len, int topic, int label, double topic_rate, double class_rate) {
    std::string out;
    int t = 0;
    while (t < len) {
      const auto& pool = pool_for(topic, label, topic_rate, class_rate);
      const std::size_t j = std::size_t(rng.index(pool.size() / 2));
      for (int k = 0; k < 2 && t < len; ++k, ++t) {
        if (!out.empty()) out.push_back(' ');
        out += pool[2 * j + std::size_t(k)];
      }
    }
    return out;
  };

  const int total = 2 * cfg.articles_per_class;
  for (int i = 0; i < total; ++i) {
    Article a;
    const int label = i < cfg.articles_per_class ? 1 : 0;
    const int topic = rng.index(std::size_t(cfg.n_topics));
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "a%04d", i);
    a.id = idbuf;
    a.label = label;
    a.title = make_text(cfg.title_len, topic, label, cfg.content_topic_rate, cfg.content_class_rate);
    a.content =
        make_text(cfg.content_len, topic, label, cfg.content_topic_rate, cfg.content_class_rate);
    for (int c = 0; c < cfg.comments_per_article; ++c) {
      const int len =
          cfg.comment_len_min + int(rng.below(std::uint64_t(cfg.comment_len_max -
                                                            cfg.comment_len_min + 1)));
      a.comments.push_back(
          make_comment(len, topic, label, cfg.comment_topic_rate, cfg.comment_class_rate));
    }
    d.articles.push_back(std::move(a));
  }
  return d;
}

}  // namespace malcom
