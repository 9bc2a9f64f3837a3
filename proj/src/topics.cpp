#include "malcom/topics.hpp"

#include "malcom/corpus.hpp"
#include "malcom/errors.hpp"
#include "malcom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace malcom {

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStop = {
      "a",    "an",  "and",  "are", "as",   "at",   "be",   "but", "by",   "for", "from",
      "had",  "has", "have", "he",  "her",  "his",  "i",    "if",  "in",   "is",  "it",
      "its",  "my",  "no",   "not", "of",   "on",   "or",   "our", "she",  "so",  "that",
      "the",  "their", "them", "they", "this", "to", "was",  "we",  "were", "will", "with",
      "you",  "your"};
  return kStop;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<int>> encode_docs(const std::vector<std::string>& contents,
                                          const std::unordered_map<std::string, int>& word_id) {
  std::vector<std::vector<int>> docs;
  docs.reserve(contents.size());
  for (const auto& text : contents) {
    std::vector<int> doc;
    for (const auto& tok : tokenize(text)) {
      auto it = word_id.find(tok);
      if (it != word_id.end()) doc.push_back(it->second);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

TopicModel fit_topic_model(const std::vector<std::string>& contents, int k, std::uint64_t seed,
                           int fit_iters) {
  if (k < 2) throw std::invalid_argument("fit_topic_model: k must be >= 2");
  if (contents.empty()) throw std::invalid_argument("fit_topic_model: no documents");

  TopicModel m;
  m.k = k;
  m.seed = seed;
  m.alpha = 50.0 / double(k);

  for (const auto& text : contents)
    for (const auto& tok : tokenize(text))
      if (!stopwords().count(tok) && !m.word_id.count(tok)) {
        m.word_id[tok] = static_cast<int>(m.vocab.size());
        m.vocab.push_back(tok);
      }
  const int V = static_cast<int>(m.vocab.size());
  if (V == 0) throw std::invalid_argument("fit_topic_model: empty vocabulary after stop words");

  const auto docs = encode_docs(contents, m.word_id);
  const std::size_t D = docs.size();

  std::vector<std::vector<int>> z(D);
  nn::Mat n_dt = nn::Mat::Zero(Eigen::Index(D), k);
  nn::Mat n_tw = nn::Mat::Zero(k, V);
  std::vector<double> n_t(std::size_t(k), 0.0);

  Rng rng(mix_seed(seed, 0x1da));
  for (std::size_t d = 0; d < D; ++d) {
    z[d].resize(docs[d].size());
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const int t = rng.index(std::size_t(k));
      z[d][i] = t;
      n_dt(Eigen::Index(d), t) += 1.0;
      n_tw(t, docs[d][i]) += 1.0;
      n_t[std::size_t(t)] += 1.0;
    }
  }

  std::vector<double> w(static_cast<std::size_t>(k));
  for (int it = 0; it < fit_iters; ++it) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const int word = docs[d][i];
        const int old = z[d][i];
        n_dt(Eigen::Index(d), old) -= 1.0;
        n_tw(old, word) -= 1.0;
        n_t[std::size_t(old)] -= 1.0;
        for (int t = 0; t < k; ++t)
          w[std::size_t(t)] = (n_dt(Eigen::Index(d), t) + m.alpha) * (n_tw(t, word) + m.beta) /
                              (n_t[std::size_t(t)] + V * m.beta);
        const int nt = rng.categorical(w);
        z[d][i] = nt;
        n_dt(Eigen::Index(d), nt) += 1.0;
        n_tw(nt, word) += 1.0;
        n_t[std::size_t(nt)] += 1.0;
      }
    }
  }

  m.topic_word = nn::Mat(k, V);
  for (int t = 0; t < k; ++t) {
    for (int word = 0; word < V; ++word)
      m.topic_word(t, word) = (n_tw(t, word) + m.beta) / (n_t[std::size_t(t)] + V * m.beta);
    m.topic_word.row(t) /= m.topic_word.row(t).sum();
  }
  return m;
}

std::vector<double> TopicModel::infer(const std::string& text) const {
  std::vector<int> doc;
  for (const auto& tok : tokenize(text)) {
    auto it = word_id.find(tok);
    if (it != word_id.end()) doc.push_back(it->second);
  }
  if (doc.empty()) return std::vector<double>(std::size_t(k), 1.0 / double(k));

  // The fold-in stream depends only on (model seed, text), so scoring order
  // never changes a result.
  Rng rng(mix_seed(seed, fnv1a(text)));
  std::vector<int> z(doc.size());
  std::vector<double> n(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    z[i] = rng.index(std::size_t(k));
    n[std::size_t(z[i])] += 1.0;
  }
  std::vector<double> w(static_cast<std::size_t>(k));
  for (int it = 0; it < infer_iters; ++it) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      n[std::size_t(z[i])] -= 1.0;
      for (int t = 0; t < k; ++t)
        w[std::size_t(t)] = topic_word(t, doc[i]) * (n[std::size_t(t)] + alpha_infer);
      z[i] = rng.categorical(w);
      n[std::size_t(z[i])] += 1.0;
    }
  }
  std::vector<double> p(static_cast<std::size_t>(k));
  const double denom = double(doc.size()) + double(k) * alpha_infer;
  for (int t = 0; t < k; ++t) p[std::size_t(t)] = (n[std::size_t(t)] + alpha_infer) / denom;
  return p;
}

std::vector<std::string> TopicModel::topic_words(int t, int q) const {
  if (t < 0 || t >= k) throw std::invalid_argument("topic_words: topic out of range");
  std::vector<int> idx(vocab.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (topic_word(t, a) != topic_word(t, b)) return topic_word(t, a) > topic_word(t, b);
    return a < b;
  });
  const std::size_t take = std::min<std::size_t>(std::size_t(std::max(q, 0)), vocab.size());
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(vocab[std::size_t(idx[i])]);
  return out;
}

Json TopicModel::to_json() const {
  Json j = artifact_envelope("topic_model", 1);
  j["k"] = k;
  j["seed"] = seed;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["alpha_infer"] = alpha_infer;
  j["infer_iters"] = infer_iters;
  j["vocab"] = vocab;
  j["topic_word"] = mat_to_json(topic_word);
  return j;
}

TopicModel TopicModel::from_json(const Json& j) {
  check_envelope(j, "topic_model", 1);
  TopicModel m;
  m.k = j.at("k").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.alpha = j.at("alpha").get<double>();
  m.beta = j.at("beta").get<double>();
  m.alpha_infer = j.at("alpha_infer").get<double>();
  m.infer_iters = j.at("infer_iters").get<int>();
  m.vocab = j.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.word_id[m.vocab[i]] = static_cast<int>(i);
  m.topic_word = mat_from_json(j.at("topic_word"));
  if (m.topic_word.rows() != m.k || m.topic_word.cols() != Eigen::Index(m.vocab.size()))
    throw SchemaError("topic_model: weight shape does not match k and vocabulary");
  for (int t = 0; t < m.k; ++t)
    if (std::fabs(m.topic_word.row(t).sum() - 1.0) > 1e-9)
      throw SchemaError("topic_model: topic row does not sum to 1");
  return m;
}

double coherency_tk(const TopicModel& model, const std::vector<std::string>& contents,
                    const std::vector<std::string>& comments) {
  if (contents.size() != comments.size() || contents.empty())
    throw std::invalid_argument("coherency_tk: need equal-length nonempty pairs");
  double acc = 0.0;
  for (std::size_t i = 0; i < contents.size(); ++i)
    acc += cosine(model.infer(contents[i]), model.infer(comments[i]));
  return acc / double(contents.size());
}

TopicSet fit_topic_set(const std::vector<std::string>& contents, const std::vector<int>& K,
                       std::uint64_t seed, int q, int fit_iters) {
  if (K.empty()) throw std::invalid_argument("fit_topic_set: K empty");
  TopicSet set;
  set.K = K;
  set.q = q;
  for (int k : K)
    set.models.push_back(fit_topic_model(contents, k, mix_seed(seed, std::uint64_t(k)), fit_iters));
  return set;
}

double coherency(const TopicSet& set, const std::vector<std::string>& contents,
                 const std::vector<std::string>& comments) {
  if (set.models.empty()) throw std::invalid_argument("coherency: empty topic set");
  double acc = 0.0;
  for (const auto& m : set.models) acc += coherency_tk(m, contents, comments);
  return acc / double(set.models.size());
}

double coherency_pair(const TopicSet& set, const std::string& content,
                      const std::string& comment) {
  if (set.models.empty()) throw std::invalid_argument("coherency_pair: empty topic set");
  double acc = 0.0;
  for (const auto& m : set.models) acc += cosine(m.infer(content), m.infer(comment));
  return acc / double(set.models.size());
}

std::vector<int> select_k_set(const std::vector<std::string>& contents,
                              const std::vector<int>& candidate_ks, std::uint64_t seed,
                              double quantile, int fit_iters) {
  if (candidate_ks.empty()) throw std::invalid_argument("select_k_set: no candidates");
  if (candidate_ks.size() == 1) return candidate_ks;

  struct Scored {
    int k;
    double entropy;
  };
  std::vector<Scored> scored;
  for (int k : candidate_ks) {
    const TopicModel m =
        fit_topic_model(contents, k, mix_seed(seed, std::uint64_t(k)), fit_iters);
    double acc = 0.0;
    for (const auto& text : contents) {
      const auto p = m.infer(text);
      double h = 0.0;
      for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
      acc += h / std::log(double(k));  // normalized so entropies compare across k
    }
    scored.push_back({k, acc / double(contents.size())});
  }
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].entropy != scored[b].entropy) return scored[a].entropy < scored[b].entropy;
    return scored[a].k < scored[b].k;
  });
  const std::size_t keep = std::max<std::size_t>(
      1, std::size_t(std::ceil(quantile * double(scored.size()) - 1e-12)));
  std::vector<bool> selected(scored.size(), false);
  for (std::size_t i = 0; i < keep && i < order.size(); ++i) selected[order[i]] = true;
  std::vector<int> out;
  for (std::size_t i = 0; i < scored.size(); ++i)
    if (selected[i]) out.push_back(scored[i].k);
  return out;
}

std::vector<std::string> top_topic_words(const TopicModel& model, const std::string& content,
                                         int q) {
  if (q < 1) throw std::invalid_argument("top_topic_words: q must be >= 1");
  const auto p = model.infer(content);
  int best = 0;
  for (int t = 1; t < model.k; ++t)
    if (p[std::size_t(t)] > p[std::size_t(best)]) best = t;  // ties keep the lowest index
  return model.topic_words(best, q);
}

Json TopicSet::to_json() const {
  Json j = artifact_envelope("topics", 1);
  j["q"] = q;
  j["K"] = K;
  Json models_j = Json::array();
  for (const auto& m : models) models_j.push_back(m.to_json());
  j["models"] = models_j;
  return j;
}

TopicSet TopicSet::from_json(const Json& j) {
  check_envelope(j, "topics", 1);
  TopicSet set;
  set.q = j.at("q").get<int>();
  set.K = j.at("K").get<std::vector<int>>();
  for (const Json& mj : j.at("models")) set.models.push_back(TopicModel::from_json(mj));
  if (set.K.size() != set.models.size()) throw SchemaError("topics: K/models length mismatch");
  for (std::size_t i = 0; i < set.K.size(); ++i)
    if (set.models[i].k != set.K[i]) throw SchemaError("topics: model k mismatch");
  return set;
}

}  // namespace malcom
