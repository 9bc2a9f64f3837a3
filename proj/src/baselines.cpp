#include "malcom/baselines.hpp"

#include "malcom/errors.hpp"
#include "malcom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace malcom {

namespace {

constexpr double kFlipLoss = 0.6931471805599453;  // ln 2: BCE below this means p is on the target side

std::vector<CommentInput> to_inputs(const Vocabulary& v, const std::vector<std::string>& texts,
                                    int max_tokens) {
  std::vector<CommentInput> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hard_comment(v, t, max_tokens));
  return out;
}

double attack_loss_value(Detector& f, const std::string& content,
                         const std::vector<std::string>& existing, const CommentInput& generated,
                         int target_label) {
  nn::Graph g;
  const auto loss = attack_loss(g, f, content,
                                to_inputs(f.vocab(), existing, f.config().max_comment_tokens),
                                generated, target_label);
  return g.val(loss)(0, 0);
}

CommentInput ids_comment(std::vector<int> ids, int max_tokens) {
  if (static_cast<int>(ids.size()) > max_tokens) ids.resize(std::size_t(max_tokens));
  CommentInput c;
  c.len = static_cast<int>(ids.size());
  c.ids = std::move(ids);
  return c;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

SemanticEncoder::SemanticEncoder(Vocabulary vocab, int dim, std::uint64_t seed,
                                 const std::vector<std::string>& reference_texts)
    : vocab_(std::move(vocab)) {
  if (dim < 1) throw std::invalid_argument("semantic encoder: dim < 1");
  Rng rng(seed);
  table_.resize(dim, vocab_.size());
  for (int c = 0; c < vocab_.size(); ++c)
    for (int r = 0; r < dim; ++r) table_(r, c) = rng.normal();

  idf_.assign(std::size_t(vocab_.size()), 1.0);
  if (!reference_texts.empty()) {
    std::vector<int> df(std::size_t(vocab_.size()), 0);
    for (const auto& text : reference_texts) {
      std::set<int> seen;
      for (const auto& tok : tokenize(text)) seen.insert(vocab_.id(tok));
      for (int id : seen)
        if (id >= Vocabulary::kReserved) ++df[std::size_t(id)];
    }
    const double n = static_cast<double>(reference_texts.size());
    for (std::size_t i = Vocabulary::kReserved; i < idf_.size(); ++i)
      idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }
}

nn::Mat SemanticEncoder::encode(const std::string& text) const {
  nn::Mat out = nn::Mat::Zero(table_.rows(), 1);
  double total = 0.0;
  for (const auto& tok : tokenize(text)) {
    const int id = vocab_.id(tok);
    if (id < Vocabulary::kReserved) continue;
    out += idf_[std::size_t(id)] * table_.col(id);
    total += idf_[std::size_t(id)];
  }
  if (total > 0.0) out /= total;
  return out;
}

CopycatIndex::CopycatIndex(const SemanticEncoder& enc, const Dataset& train) {
  for (const auto& a : train.articles) {
    if (a.comments.empty()) continue;
    Entry e;
    e.article_id = a.id;
    e.label = a.label;
    e.comments = a.comments;
    e.encoding = enc.encode(a.content);
    const double n = e.encoding.norm();
    if (n > 0.0) e.encoding /= n;
    entries_.push_back(std::move(e));
  }
}

std::size_t CopycatIndex::nearest(const SemanticEncoder& enc, const std::string& content,
                                  int target_label) const {
  nn::Mat q = enc.encode(content);
  const double n = q.norm();
  if (n > 0.0) q /= n;
  std::size_t best = entries_.size();
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].label != target_label) continue;
    const double sim = (entries_[i].encoding.array() * q.array()).sum();
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  if (best == entries_.size())
    throw std::invalid_argument("copycat: no commented train article with label " +
                                std::to_string(target_label));
  return best;
}

std::string copycat(const SemanticEncoder& enc, const CopycatIndex& index, const Article& query,
                    int target_label, std::uint64_t seed) {
  const auto& donor = index.entry(index.nearest(enc, query.content, target_label));
  Rng rng(mix_seed(seed, fnv1a(query.id)));
  return donor.comments[std::size_t(rng.index(donor.comments.size()))];
}

std::string hotflip(Detector& f, const Article& article, const std::vector<std::string>& existing,
                    const std::string& seed_comment, int target_label, int budget) {
  std::vector<std::string> words = tokenize(seed_comment);
  if (words.empty() || budget <= 0) return seed_comment;

  const Vocabulary& v = f.vocab();
  const int max_tokens = f.config().max_comment_tokens;
  const int len = std::min<int>(static_cast<int>(words.size()), max_tokens);
  std::vector<int> ids(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) ids[std::size_t(i)] = v.id(words[std::size_t(i)]);

  double cur = attack_loss_value(f, article.content, existing, ids_comment(ids, max_tokens),
                                 target_label);
  if (cur < kFlipLoss) return seed_comment;  // detector already reads the target label

  int changed = 0;
  std::set<int> rejected;  // positions whose verified substitution failed at the current state
  while (changed < budget) {
    nn::Param onehot(v.size(), len, "hotflip_onehot");
    for (int i = 0; i < len; ++i) onehot.value(ids[std::size_t(i)], i) = 1.0;

    nn::Graph g;
    CommentInput gen;
    gen.relaxed = g.param(onehot);
    gen.len = len;
    const auto loss = attack_loss(g, f, article.content,
                                  to_inputs(v, existing, max_tokens), gen, target_label);
    g.backward(loss);
    const nn::Mat& grad = onehot.grad;

    // Positions by gradient norm, strongest first.
    std::vector<int> order(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) order[std::size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return grad.col(a).norm() > grad.col(b).norm(); });

    bool applied = false;
    for (int pos : order) {
      if (rejected.count(pos)) continue;
      const int from = ids[std::size_t(pos)];
      int best_tok = -1;
      double best_grad = grad(from, pos);
      for (int tok = Vocabulary::kReserved; tok < v.size(); ++tok) {
        if (tok == from) continue;
        if (grad(tok, pos) < best_grad) {
          best_grad = grad(tok, pos);
          best_tok = tok;
        }
      }
      if (best_tok < 0) {  // no first-order decrease at this position
        rejected.insert(pos);
        continue;
      }
      std::vector<int> trial = ids;
      trial[std::size_t(pos)] = best_tok;
      const double trial_loss = attack_loss_value(f, article.content, existing,
                                                  ids_comment(trial, max_tokens), target_label);
      if (trial_loss < cur) {
        ids = std::move(trial);
        words[std::size_t(pos)] = v.token(best_tok);
        cur = trial_loss;
        ++changed;
        rejected.clear();
        applied = true;
        break;
      }
      rejected.insert(pos);
    }
    if (!applied || cur < kFlipLoss) break;
  }
  return join_words(words);
}

Json TriggerPhrase::to_json() const {
  Json j;
  j["tokens"] = Json::array();
  for (const auto& t : tokens) j["tokens"].push_back(t);
  j["topic"] = topic;
  j["target_label"] = target_label;
  return j;
}

TriggerPhrase TriggerPhrase::from_json(const Json& j) {
  TriggerPhrase t;
  if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array())
    throw SchemaError("trigger: missing tokens array");
  for (const auto& e : j["tokens"]) {
    if (!e.is_string()) throw SchemaError("trigger: non-string token");
    t.tokens.push_back(e.get<std::string>());
  }
  t.topic = j.value("topic", -1);
  t.target_label = j.value("target_label", 0);
  if (t.target_label != 0 && t.target_label != 1)
    throw SchemaError("trigger: target_label must be 0 or 1");
  return t;
}

TriggerPhrase unitrigger_search(Detector& f, const std::vector<TriggerExample>& examples,
                                const std::vector<std::string>& candidates, int trigger_len,
                                int target_label, int topic, int max_sweeps) {
  if (candidates.empty()) throw std::invalid_argument("unitrigger: empty candidate list");
  if (examples.empty()) throw std::invalid_argument("unitrigger: no tuning examples");
  if (trigger_len < 1) throw std::invalid_argument("unitrigger: trigger_len < 1");

  TriggerPhrase trig;
  trig.tokens.assign(std::size_t(trigger_len), candidates.front());
  trig.topic = topic;
  trig.target_label = target_label;

  std::unordered_map<std::string, double> memo;
  auto mean_loss = [&](const std::vector<std::string>& tokens) {
    const std::string key = join_words(tokens);
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    double sum = 0.0;
    for (const auto& ex : examples) {
      const std::string comment = key + " " + ex.base_comment;
      sum += attack_loss_value(f, ex.content, ex.existing,
                               hard_comment(f.vocab(), comment, f.config().max_comment_tokens),
                               target_label);
    }
    const double mean = sum / static_cast<double>(examples.size());
    memo.emplace(key, mean);
    return mean;
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool moved = false;
    for (int s = 0; s < trigger_len; ++s) {
      std::string best_word = trig.tokens[std::size_t(s)];
      auto probe = trig.tokens;
      double best = mean_loss(probe);
      for (const auto& w : candidates) {
        probe[std::size_t(s)] = w;
        const double l = mean_loss(probe);
        if (l < best) {
          best = l;
          best_word = w;
        }
      }
      if (best_word != trig.tokens[std::size_t(s)]) {
        trig.tokens[std::size_t(s)] = best_word;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return trig;
}

std::string unitrigger_apply(const TriggerPhrase& trigger, const std::string& comment) {
  if (trigger.tokens.empty()) return comment;
  const std::string prefix = join_words(trigger.tokens);
  if (comment.empty()) return prefix;
  return prefix + " " + comment;
}

std::vector<std::string> bug_candidates(const Detector& f, const std::string& word) {
  const int n = static_cast<int>(word.size());
  std::vector<std::string> out;
  auto add = [&](std::string s) {
    if (s != word && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  };

  if (n >= 2) {  // space insertion splits the word in the middle: "gave" -> "ga ve"
    std::string s = word;
    s.insert(std::size_t(n / 2), 1, ' ');
    add(std::move(s));
  }
  if (n >= 3) {  // middle-character deletion: "gave" -> "gve"
    std::string s = word;
    s.erase(std::size_t((n - 1) / 2), 1);
    add(std::move(s));
  }
  if (n >= 4) {  // interior adjacent swap: "gave" -> "gvae"
    std::string s = word;
    std::swap(s[std::size_t((n - 1) / 2)], s[std::size_t((n - 1) / 2) + 1]);
    add(std::move(s));
  }
  {  // leet glyph for the first mappable character: "gave" -> "g@ve"
    static const std::unordered_map<char, char> kGlyph = {{'a', '@'}, {'e', '3'}, {'i', '1'},
                                                          {'l', '1'}, {'o', '0'}, {'s', '$'}};
    for (int i = 0; i < n; ++i) {
      const auto it = kGlyph.find(word[std::size_t(i)]);
      if (it != kGlyph.end()) {
        std::string s = word;
        s[std::size_t(i)] = it->second;
        add(std::move(s));
        break;
      }
    }
  }
  {  // nearest embedding neighbor among real vocabulary words
    const Vocabulary& v = f.vocab();
    const int id = v.id(word);
    if (id >= Vocabulary::kReserved) {
      const nn::Mat& table = f.embedding_values();
      const auto col = table.col(id);
      const double cn = col.norm();
      int best = -1;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (int tok = Vocabulary::kReserved; tok < v.size(); ++tok) {
        if (tok == id) continue;
        const double dn = table.col(tok).norm();
        if (cn == 0.0 || dn == 0.0) continue;
        const double sim = col.dot(table.col(tok)) / (cn * dn);
        if (sim > best_sim) {
          best_sim = sim;
          best = tok;
        }
      }
      if (best >= 0) add(v.token(best));
    }
  }
  return out;
}

std::string textbugger(Detector& f, const Article& article,
                       const std::vector<std::string>& existing, const std::string& seed_comment,
                       int target_label, int budget) {
  std::vector<std::string> words = tokenize(seed_comment);
  if (words.empty() || budget <= 0) return seed_comment;

  const Vocabulary& v = f.vocab();
  const int max_tokens = f.config().max_comment_tokens;
  auto loss_of = [&](const std::vector<std::string>& ws) {
    return attack_loss_value(f, article.content, existing,
                             hard_comment(v, join_words(ws), max_tokens), target_label);
  };

  double cur = loss_of(words);
  if (cur < kFlipLoss) return seed_comment;

  // Importance: attack-loss drop when the word is masked to the unknown token.
  std::vector<int> base_ids = v.encode(join_words(words));
  const int scored = std::min<int>(static_cast<int>(base_ids.size()), max_tokens);
  std::vector<std::pair<double, int>> ranked;
  for (int j = 0; j < scored; ++j) {
    std::vector<int> masked = base_ids;
    masked[std::size_t(j)] = Vocabulary::kUnk;
    const double drop = cur - attack_loss_value(f, article.content, existing,
                                                ids_comment(std::move(masked), max_tokens),
                                                target_label);
    ranked.emplace_back(-drop, j);  // sort ascending => largest drop first
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  int changed = 0;
  for (const auto& [neg_drop, j] : ranked) {
    (void)neg_drop;
    if (changed >= budget || cur < kFlipLoss) break;
    double best = cur;
    std::string best_word;
    for (const auto& cand : bug_candidates(f, words[std::size_t(j)])) {
      auto trial = words;
      trial[std::size_t(j)] = cand;
      const double l = loss_of(trial);
      if (l < best) {
        best = l;
        best_word = cand;
      }
    }
    if (!best_word.empty()) {
      words[std::size_t(j)] = best_word;
      cur = best;
      ++changed;
    }
  }
  return join_words(words);
}

}  // namespace malcom
