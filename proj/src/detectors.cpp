#include "malcom/detectors.hpp"

#include "malcom/errors.hpp"
#include "malcom/nn/optim.hpp"
#include "malcom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace malcom {

using nn::Graph;
using nn::Mat;

Arch arch_from_tag(const std::string& tag) {
  if (tag == "f_cnn") return Arch::f_cnn;
  if (tag == "f_rnn") return Arch::f_rnn;
  if (tag == "textcnn") return Arch::textcnn;
  if (tag == "csi_t") return Arch::csi_t;
  if (tag == "defend") return Arch::defend;
  throw std::invalid_argument("unknown detector architecture: " + tag);
}

std::string arch_tag(Arch a) {
  switch (a) {
    case Arch::f_cnn: return "f_cnn";
    case Arch::f_rnn: return "f_rnn";
    case Arch::textcnn: return "textcnn";
    case Arch::csi_t: return "csi_t";
    case Arch::defend: return "defend";
  }
  throw std::logic_error("bad arch enum");
}

const std::vector<Arch>& all_archs() {
  static const std::vector<Arch> kAll = {Arch::f_cnn, Arch::f_rnn, Arch::textcnn, Arch::csi_t,
                                         Arch::defend};
  return kAll;
}

Json DetectorConfig::to_json() const {
  return Json{{"embed_dim", embed_dim},
              {"hidden", hidden},
              {"content_dim", content_dim},
              {"comment_budget", comment_budget},
              {"max_comment_tokens", max_comment_tokens},
              {"conv_filters", conv_filters},
              {"conv_widths", conv_widths},
              {"defend_chunk", defend_chunk}};
}

DetectorConfig DetectorConfig::from_json(const Json& j) {
  DetectorConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.content_dim = j.at("content_dim").get<int>();
  c.comment_budget = j.at("comment_budget").get<int>();
  c.max_comment_tokens = j.at("max_comment_tokens").get<int>();
  c.conv_filters = j.at("conv_filters").get<int>();
  c.conv_widths = j.at("conv_widths").get<std::vector<int>>();
  c.defend_chunk = j.at("defend_chunk").get<int>();
  return c;
}

CommentInput hard_comment(const Vocabulary& v, const std::string& text, int max_tokens) {
  CommentInput c;
  c.ids = v.encode(text);
  if (static_cast<int>(c.ids.size()) > max_tokens) c.ids.resize(std::size_t(max_tokens));
  c.len = static_cast<int>(c.ids.size());
  return c;
}

Graph::Var bce_from_scores(Graph& g, Graph::Var scores, const std::vector<double>& labels) {
  const Eigen::Index B = g.val(scores).cols();
  if (g.val(scores).rows() != 1 || B != Eigen::Index(labels.size()))
    throw std::invalid_argument("bce_from_scores: need 1 x B scores matching labels");
  Mat y(1, B);
  for (Eigen::Index i = 0; i < B; ++i) y(0, i) = labels[std::size_t(i)];
  // -log sigmoid(s) = softplus(-s); -log(1 - sigmoid(s)) = softplus(s).
  auto yv = g.constant(y);
  auto one_minus_y = g.constant(Mat::Ones(1, B) - y);
  auto pos = g.cmul(yv, g.softplus(g.neg(scores)));
  auto neg = g.cmul(one_minus_y, g.softplus(scores));
  return g.mean_all(g.add(pos, neg));
}

Json DetectorMetrics::to_json() const {
  return Json{{"accuracy", accuracy}, {"f1", f1}, {"train_loss", train_loss}};
}

namespace {

int head_input_dim(Arch arch, const DetectorConfig& cfg, const nn::ConvBank& bank) {
  switch (arch) {
    case Arch::f_cnn: return bank.out_dim() + cfg.content_dim;
    case Arch::f_rnn: return cfg.hidden + cfg.content_dim;
    case Arch::textcnn: return bank.out_dim() + cfg.content_dim;
    case Arch::csi_t: return cfg.hidden;
    case Arch::defend: return 2 * cfg.hidden + cfg.content_dim;
  }
  throw std::logic_error("bad arch enum");
}

}  // namespace

Detector::Detector(Arch arch, DetectorConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : arch_(arch), cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  Rng root(seed);
  // Fixed derivation tags keep component inits independent of each other and
  // of the architecture tag.
  Rng r_emb = root.derive(1), r_cp = root.derive(2), r_mp = root.derive(3), r_sp = root.derive(4),
      r_gru = root.derive(5), r_bank = root.derive(6), r_head = root.derive(7);
  emb_ = nn::Embedding(cfg_.embed_dim, vocab_.size(), "emb", r_emb);
  content_proj_ = nn::Dense(cfg_.embed_dim, cfg_.content_dim, "content_proj", r_cp);
  comment_proj_ = nn::Dense(cfg_.embed_dim, cfg_.hidden, "comment_proj", r_mp);
  sent_proj_ = nn::Dense(cfg_.embed_dim, cfg_.hidden, "sent_proj", r_sp);
  gru_ = nn::GruCell(cfg_.hidden, cfg_.hidden, "gru", r_gru);
  bank_ = nn::ConvBank(cfg_.embed_dim, cfg_.conv_filters, cfg_.conv_widths, "bank", r_bank);
  head_ = nn::Dense(head_input_dim(arch_, cfg_, bank_), 1, "head", r_head);
}

std::vector<nn::Param*> Detector::params() {
  std::vector<nn::Param*> out = emb_.params();
  auto push = [&out](std::vector<nn::Param*> ps) {
    out.insert(out.end(), ps.begin(), ps.end());
  };
  switch (arch_) {
    case Arch::f_cnn:
    case Arch::textcnn:
      push(content_proj_.params());
      push(bank_.params());
      break;
    case Arch::f_rnn:
      push(content_proj_.params());
      push(comment_proj_.params());
      push(gru_.params());
      break;
    case Arch::csi_t:
      push(comment_proj_.params());
      push(gru_.params());
      break;
    case Arch::defend:
      push(content_proj_.params());
      push(comment_proj_.params());
      push(sent_proj_.params());
      break;
  }
  push(head_.params());
  return out;
}

Graph::Var Detector::mean_embedding(Graph& g, const CommentInput& c, bool frozen) {
  if (c.len <= 0) return g.constant(Mat::Zero(cfg_.embed_dim, 1));
  Graph::Var seq;
  if (c.is_relaxed()) {
    seq = emb_.lookup_soft(g, c.relaxed, frozen);
    if (int(g.val(seq).cols()) > c.len) {
      std::vector<int> idx(static_cast<std::size_t>(c.len));
      std::iota(idx.begin(), idx.end(), 0);
      seq = g.select_cols(seq, idx);
    }
  } else {
    seq = emb_.lookup(g, c.ids, frozen);
  }
  return g.scale(g.rows_sum(seq), 1.0 / double(g.val(seq).cols()));
}

Graph::Var Detector::embedding_seq(Graph& g, const CommentInput& c, bool frozen, int fixed_len) {
  Graph::Var seq = -1;
  int have = 0;
  if (c.len > 0) {
    if (c.is_relaxed()) {
      seq = emb_.lookup_soft(g, c.relaxed, frozen);
      have = std::min(c.len, int(g.val(seq).cols()));
    } else {
      seq = emb_.lookup(g, c.ids, frozen);
      have = int(c.ids.size());
    }
  }
  if (have > fixed_len) {
    std::vector<int> idx(static_cast<std::size_t>(fixed_len));
    std::iota(idx.begin(), idx.end(), 0);
    return g.select_cols(seq, idx);
  }
  if (have == fixed_len) {
    if (have < int(g.val(seq).cols())) {
      std::vector<int> idx(static_cast<std::size_t>(have));
      std::iota(idx.begin(), idx.end(), 0);
      seq = g.select_cols(seq, idx);
    }
    return seq;
  }
  auto pad = g.constant(Mat::Zero(cfg_.embed_dim, fixed_len - have));
  if (have == 0) return pad;
  if (have < int(g.val(seq).cols())) {
    std::vector<int> idx(static_cast<std::size_t>(have));
    std::iota(idx.begin(), idx.end(), 0);
    seq = g.select_cols(seq, idx);
  }
  return g.concat_cols({seq, pad});
}

Graph::Var Detector::content_encoding(Graph& g, const std::string& content, bool frozen) {
  const std::vector<int> ids = vocab_.encode(content);
  Graph::Var mean;
  if (ids.empty()) {
    mean = g.constant(Mat::Zero(cfg_.embed_dim, 1));
  } else {
    auto seq = emb_.lookup(g, ids, frozen);
    mean = g.scale(g.rows_sum(seq), 1.0 / double(ids.size()));
  }
  return g.tanh(content_proj_(g, mean, frozen));
}

Detector::Forward Detector::forward(Graph& g, const std::string& content,
                                    const std::vector<CommentInput>& comments, bool frozen,
                                    int budget_override) {
  const int budget = budget_override > 0 ? budget_override : cfg_.comment_budget;
  std::vector<CommentInput> used;
  for (const CommentInput& c : comments) {
    if (int(used.size()) >= budget) break;
    used.push_back(c);
  }
  const int m = int(used.size());

  Forward out;
  Graph::Var comment_feat;  // aggregate of the comment branch
  Graph::Var features;

  switch (arch_) {
    case Arch::f_cnn: {
      if (m == 0) {
        comment_feat = g.constant(Mat::Zero(bank_.out_dim(), 1));
      } else {
        std::vector<Graph::Var> encoded;
        for (const auto& c : used) {
          auto seq = embedding_seq(g, c, frozen, std::max(1, std::min(c.len, cfg_.max_comment_tokens)));
          encoded.push_back(bank_(g, seq, std::max(1, c.len), frozen));
        }
        Graph::Var acc = encoded[0];
        for (int i = 1; i < m; ++i) acc = g.add(acc, encoded[std::size_t(i)]);
        comment_feat = g.scale(acc, 1.0 / double(m));
      }
      features = g.concat_rows({comment_feat, content_encoding(g, content, frozen)});
      break;
    }
    case Arch::textcnn: {
      const int T = cfg_.max_comment_tokens;
      Graph::Var acc = g.constant(Mat::Zero(cfg_.embed_dim, T));
      for (const auto& c : used) acc = g.add(acc, embedding_seq(g, c, frozen, T));
      if (m > 1) acc = g.scale(acc, 1.0 / double(m));
      comment_feat = bank_(g, acc, T, frozen);
      features = g.concat_rows({comment_feat, content_encoding(g, content, frozen)});
      break;
    }
    case Arch::f_rnn:
    case Arch::csi_t: {
      Graph::Var h = g.constant(Mat::Zero(cfg_.hidden, 1));
      for (const auto& c : used) {
        auto cv = g.tanh(comment_proj_(g, mean_embedding(g, c, frozen), frozen));
        h = gru_.step(g, cv, h, frozen);
      }
      comment_feat = h;
      if (arch_ == Arch::f_rnn)
        features = g.concat_rows({comment_feat, content_encoding(g, content, frozen)});
      else
        features = comment_feat;
      break;
    }
    case Arch::defend: {
      auto cvec = content_encoding(g, content, frozen);
      if (m == 0) {
        features = g.concat_rows({g.constant(Mat::Zero(2 * cfg_.hidden, 1)), cvec});
        break;
      }
      // Content chunks stand in for sentences.
      const std::vector<int> cids = vocab_.encode(content);
      std::vector<Graph::Var> chunk_vecs;
      for (std::size_t start = 0; start < std::max<std::size_t>(cids.size(), 1);
           start += std::size_t(cfg_.defend_chunk)) {
        Graph::Var meanv;
        if (cids.empty()) {
          meanv = g.constant(Mat::Zero(cfg_.embed_dim, 1));
        } else {
          const std::size_t stop = std::min(cids.size(), start + std::size_t(cfg_.defend_chunk));
          std::vector<int> chunk(cids.begin() + long(start), cids.begin() + long(stop));
          auto seq = emb_.lookup(g, chunk, frozen);
          meanv = g.scale(g.rows_sum(seq), 1.0 / double(chunk.size()));
        }
        chunk_vecs.push_back(g.tanh(sent_proj_(g, meanv, frozen)));
        if (cids.empty()) break;
      }
      auto Qc = chunk_vecs.size() == 1 ? chunk_vecs[0] : g.concat_cols(chunk_vecs);  // H x n
      std::vector<Graph::Var> com_vecs;
      for (const auto& c : used)
        com_vecs.push_back(g.tanh(comment_proj_(g, mean_embedding(g, c, frozen), frozen)));
      auto Qm = com_vecs.size() == 1 ? com_vecs[0] : g.concat_cols(com_vecs);  // H x m
      auto A = g.scale(g.matmul(g.transpose(Qm), Qc), 1.0 / std::sqrt(double(cfg_.hidden)));
      auto attn = g.softmax_rows(A);                    // m x n, rows are simplexes
      auto context = g.matmul(attn, g.transpose(Qc));   // m x H
      auto pool_m = g.transpose(g.scale(g.cols_sum(g.transpose(Qm)), 1.0 / double(m)));
      auto pool_ctx = g.transpose(g.scale(g.cols_sum(context), 1.0 / double(m)));
      out.attention = attn;
      features = g.concat_rows({pool_m, pool_ctx, cvec});
      break;
    }
  }

  out.score = head_(g, features, frozen);
  out.p = g.sigmoid(out.score);
  return out;
}

double Detector::predict_p(const std::string& content, const std::vector<std::string>& comments,
                           int budget_override) {
  Graph g;
  std::vector<CommentInput> ins;
  ins.reserve(comments.size());
  for (const auto& c : comments) ins.push_back(hard_comment(vocab_, c, cfg_.max_comment_tokens));
  auto fwd = forward(g, content, ins, /*frozen=*/true, budget_override);
  return g.val(fwd.p)(0, 0);
}

int Detector::predict_label(const std::string& content, const std::vector<std::string>& comments,
                            int budget_override) {
  return predict_p(content, comments, budget_override) >= 0.5 ? 1 : 0;
}

Mat Detector::encode_content_values(const std::string& content) {
  Graph g;
  auto v = content_encoding(g, content, /*frozen=*/true);
  return g.val(v);
}

Json Detector::to_json() const {
  Json j = artifact_envelope("detector", 1);
  j["arch"] = arch_tag(arch_);
  j["config"] = cfg_.to_json();
  j["vocab"] = vocab_.to_json();
  j["vocab_hash"] = vocab_.hash();
  Json ps = Json::array();
  for (nn::Param* p : const_cast<Detector*>(this)->params()) ps.push_back(param_to_json(*p));
  j["params"] = ps;
  return j;
}

Detector Detector::from_json(const Json& j) {
  check_envelope(j, "detector", 1);
  Detector f(arch_from_tag(j.at("arch").get<std::string>()),
             DetectorConfig::from_json(j.at("config")), Vocabulary::from_json(j.at("vocab")), 0);
  if (j.at("vocab_hash").get<std::uint64_t>() != f.vocab_.hash())
    throw SchemaError("detector: vocabulary hash mismatch");
  auto ps = f.params();
  const Json& stored = j.at("params");
  if (stored.size() != ps.size()) throw SchemaError("detector: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) param_from_json(*ps[i], stored.at(i));
  return f;
}

DetectorMetrics train_detector(Detector& f, const Dataset& train, const Dataset& held, int epochs,
                               double lr, std::uint64_t seed, int batch_size) {
  if (train.articles.empty()) throw std::invalid_argument("train_detector: empty train set");
  bool any0 = false, any1 = false;
  for (const auto& a : train.articles) (a.label ? any1 : any0) = true;
  if (!any0 || !any1)
    throw std::invalid_argument("train_detector: train set must contain both classes");

  const auto& cfg = f.config();
  std::vector<std::vector<CommentInput>> inputs;
  inputs.reserve(train.articles.size());
  for (const auto& a : train.articles) {
    std::vector<CommentInput> ins;
    for (const auto& c : a.comments) {
      if (int(ins.size()) >= cfg.comment_budget) break;
      ins.push_back(hard_comment(f.vocab(), c, cfg.max_comment_tokens));
    }
    inputs.push_back(std::move(ins));
  }

  nn::Adam opt(f.params(), lr);
  Rng root(seed);
  DetectorMetrics metrics;
  std::vector<std::size_t> order(train.articles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int ep = 0; ep < epochs; ++ep) {
    Rng r = root.derive(std::uint64_t(ep) + 1);
    r.shuffle(order);
    double ep_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t at = 0; at < order.size(); at += std::size_t(batch_size)) {
      const std::size_t stop = std::min(order.size(), at + std::size_t(batch_size));
      Graph g;
      std::vector<Graph::Var> scores;
      std::vector<double> labels;
      for (std::size_t i = at; i < stop; ++i) {
        const Article& a = train.articles[order[i]];
        auto fwd = f.forward(g, a.content, inputs[order[i]]);
        scores.push_back(fwd.score);
        labels.push_back(double(a.label));
      }
      auto loss = bce_from_scores(g, g.concat_cols(scores), labels);
      const double lv = g.val(loss)(0, 0);
      if (!std::isfinite(lv)) throw NanError("train_detector: loss diverged");
      g.backward(loss);
      nn::clip_global_norm(opt.params(), 5.0);
      opt.step();
      opt.zero_grad();
      ep_loss += lv * double(stop - at);
      seen += stop - at;
    }
    metrics.train_loss.push_back(ep_loss / double(seen));
  }

  const DetectorMetrics held_m = evaluate_detector(f, held);
  metrics.accuracy = held_m.accuracy;
  metrics.f1 = held_m.f1;
  return metrics;
}

DetectorMetrics evaluate_detector(Detector& f, const Dataset& data) {
  if (data.articles.empty()) throw std::invalid_argument("evaluate_detector: empty dataset");
  int correct = 0, tp = 0, fp = 0, fn = 0;
  for (const auto& a : data.articles) {
    const int pred = f.predict_label(a.content, a.comments);
    correct += pred == a.label ? 1 : 0;
    if (pred == 1 && a.label == 1) ++tp;
    if (pred == 1 && a.label == 0) ++fp;
    if (pred == 0 && a.label == 1) ++fn;
  }
  DetectorMetrics m;
  m.accuracy = double(correct) / double(data.articles.size());
  const double denom = 2.0 * tp + fp + fn;
  m.f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  return m;
}

void save_detector(const std::string& path, Detector& f, const DetectorMetrics* metrics) {
  Json j = f.to_json();
  if (metrics) j["metrics"] = metrics->to_json();
  save_json_file(path, j);
}

Detector load_detector(const std::string& path, const Vocabulary& expect_vocab) {
  Detector f = Detector::from_json(load_json_file(path));
  if (f.vocab().hash() != expect_vocab.hash())
    throw SchemaError("detector: checkpoint vocabulary does not match the active vocabulary");
  return f;
}

}  // namespace malcom
