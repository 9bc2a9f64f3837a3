#include "malcom/attack.hpp"

#include "malcom/errors.hpp"
#include "malcom/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace malcom {

using nn::Graph;
using nn::Mat;

void AttackConfig::validate() const {
  if (target_label != 0 && target_label != 1) {
    throw std::invalid_argument("attack config: target label must be 0 or 1");
  }
  if (M < 1 || epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("attack config: M, epochs, batch_size must be positive");
  }
  if (n_samples < M || probe_samples < M) {
    throw std::invalid_argument("attack config: sample counts must be at least M");
  }
  if (weight_mle < 0 || weight_gan < 0 || weight_mmd < 0 || weight_attack < 0) {
    throw std::invalid_argument("attack config: negative loss weight");
  }
  if (tau <= 0.0 || lr <= 0.0) {
    throw std::invalid_argument("attack config: tau and lr must be positive");
  }
  const bool any = weight_mle > 0 || (with_style && (weight_gan > 0 || weight_mmd > 0)) ||
                   (with_attack && weight_attack > 0);
  if (!any) {
    throw std::invalid_argument("attack config: every loss is disabled");
  }
}

Json AttackConfig::to_json() const {
  return Json{{"target_label", target_label},
              {"M", M},
              {"weight_mle", weight_mle},
              {"weight_gan", weight_gan},
              {"weight_mmd", weight_mmd},
              {"weight_attack", weight_attack},
              {"with_style", with_style},
              {"with_attack", with_attack},
              {"epochs", epochs},
              {"lr", lr},
              {"seed", seed},
              {"tau", tau},
              {"batch_size", batch_size},
              {"n_samples", n_samples},
              {"probe_samples", probe_samples}};
}

AttackConfig AttackConfig::from_json(const Json& j) {
  AttackConfig c;
  c.target_label = j.at("target_label").get<int>();
  c.M = j.at("M").get<int>();
  c.weight_mle = j.at("weight_mle").get<double>();
  c.weight_gan = j.at("weight_gan").get<double>();
  c.weight_mmd = j.at("weight_mmd").get<double>();
  c.weight_attack = j.at("weight_attack").get<double>();
  c.with_style = j.at("with_style").get<bool>();
  c.with_attack = j.at("with_attack").get<bool>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tau = j.at("tau").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.n_samples = j.at("n_samples").get<int>();
  c.probe_samples = j.at("probe_samples").get<int>();
  c.validate();
  return c;
}

Graph::Var attack_loss(Graph& g, Detector& f, const std::string& content,
                       std::vector<CommentInput> existing, const CommentInput& generated,
                       int target_label) {
  if (target_label != 0 && target_label != 1) {
    throw std::invalid_argument("attack_loss: target label must be 0 or 1");
  }
  const int budget = f.config().comment_budget;
  if (static_cast<int>(existing.size()) > budget - 1) {
    existing.resize(static_cast<std::size_t>(std::max(0, budget - 1)));
  }
  existing.push_back(generated);
  auto fwd = f.forward(g, content, existing, /*frozen=*/true);
  return bce_from_scores(g, fwd.score, {static_cast<double>(target_label)});
}

Json MalcomLog::to_json() const {
  auto put = [](Json& o, const char* k, double v) {
    if (std::isfinite(v)) {
      o[k] = v;
    } else {
      o[k] = nullptr;
    }
  };
  Json arr = Json::array();
  for (const auto& e : epochs) {
    Json o;
    put(o, "mle", e.mle);
    put(o, "loss_D", e.loss_D);
    put(o, "loss_G_D", e.loss_G_D);
    put(o, "loss_G_H", e.loss_G_H);
    put(o, "attack", e.attack);
    put(o, "probe_atk", e.probe_atk);
    put(o, "probe_coherency", e.probe_coherency);
    arr.push_back(o);
  }
  return Json{{"epochs", arr}};
}

std::vector<std::string> craft_comments(Generator& G, const Article& article,
                                        const AttackConfig& cfg, const TopicSet& topics) {
  cfg.validate();
  GenerationConfig gen;
  gen.tau = cfg.tau;
  gen.n_samples = cfg.n_samples;
  gen.M = cfg.M;
  gen.seed = mix_seed(cfg.seed, fnv1a(article.id));
  return G.generate_best(article.content, gen, topics);
}

namespace {

struct Accum {
  double sum = 0.0;
  int n = 0;

  void add(double v) {
    sum += v;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : MalcomEpoch::kUnset; }
};

void fill_probe(MalcomEpoch& e, Generator& G, Detector& f,
                const std::vector<const Article*>& probe, const AttackConfig& cfg,
                const TopicSet& topics) {
  if (probe.empty()) return;
  int denom = 0, flipped = 0;
  double coh = 0.0;
  int cohn = 0;
  for (const Article* a : probe) {
    // Pre-attack prediction with no comments; only articles the detector
    // already classifies correctly (away from the target) count.
    const int pre = f.predict_label(a->content, {});
    if (pre == cfg.target_label) continue;
    ++denom;
    GenerationConfig gen;
    gen.tau = cfg.tau;
    gen.n_samples = cfg.probe_samples;
    gen.M = cfg.M;
    gen.seed = mix_seed(cfg.seed, fnv1a(a->id));
    auto crafted = G.generate_best(a->content, gen, topics);
    if (f.predict_label(a->content, crafted) == cfg.target_label) ++flipped;
    for (const auto& c : crafted) {
      if (!c.empty()) {
        coh += coherency_pair(topics, a->content, c);
        ++cohn;
      }
    }
  }
  if (denom > 0) e.probe_atk = static_cast<double>(flipped) / denom;
  if (cohn > 0) e.probe_coherency = coh / cohn;
}

std::vector<Mat> snapshot(const std::vector<nn::Param*>& ps) {
  std::vector<Mat> out;
  out.reserve(ps.size());
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

void restore(const std::vector<nn::Param*>& ps, const std::vector<Mat>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = snap[i];
}

}  // namespace

MalcomLog train_malcom(Generator& G, Discriminator& D, Detector& f, const Dataset& train,
                       const AttackConfig& cfg, const TopicSet& topics) {
  cfg.validate();
  if (G.vocab().hash() != f.vocab().hash() || G.vocab().hash() != D.vocab().hash()) {
    throw std::invalid_argument("train_malcom: generator/discriminator/detector vocabularies differ");
  }

  std::vector<const Article*> subset;
  for (const auto& a : train.articles) {
    if (a.label != cfg.target_label) subset.push_back(&a);
  }
  if (subset.empty()) {
    throw std::invalid_argument("train_malcom: no articles with truth label != target label");
  }
  std::vector<const Article*> fit, probe;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    ((i % 10 == 9) ? probe : fit).push_back(subset[i]);
  }

  const bool mle_on = cfg.weight_mle > 0;
  const bool style_on = cfg.with_style && (cfg.weight_gan > 0 || cfg.weight_mmd > 0);
  const bool attack_on = cfg.with_attack && cfg.weight_attack > 0;

  MalcomLog log;

  if (!style_on && !attack_on) {
    // Only teacher forcing remains: continue pretraining with the same
    // batching, then attach the probe to the final epoch.
    Dataset sub;
    sub.articles.reserve(subset.size());
    for (const Article* a : subset) sub.articles.push_back(*a);
    auto entry_params = G.params();
    auto entry_snap = snapshot(entry_params);
    PretrainCurve curve;
    try {
      curve = pretrain_mle(G, sub, cfg.epochs, cfg.lr, cfg.seed, cfg.batch_size);
    } catch (const NanError&) {
      restore(entry_params, entry_snap);
      throw;
    }
    for (double v : curve.train_nll) {
      MalcomEpoch e;
      e.mle = v;
      log.epochs.push_back(e);
    }
    if (!log.epochs.empty()) fill_probe(log.epochs.back(), G, f, probe, cfg, topics);
    return log;
  }

  const auto& vocab = G.vocab();
  const int T = G.config().max_len;
  const int budget = f.config().comment_budget;
  auto gps = G.params();
  auto dps = D.params();
  nn::Adam opt_G(gps, cfg.lr);
  nn::Adam opt_D(dps, cfg.lr);
  Rng root(cfg.seed);

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    auto gsnap = snapshot(gps);
    auto dsnap = snapshot(dps);
    try {
      Rng er = root.derive(static_cast<std::uint64_t>(ep) + 1);
      std::vector<int> order(fit.size());
      std::iota(order.begin(), order.end(), 0);
      er.shuffle(order);

      Accum a_mle, a_d, a_gd, a_gh, a_atk;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        struct Item {
          const Article* a;
          const std::string* comment;  // one real comment, shared by MLE and style
        };
        std::vector<Item> items;
        for (std::size_t k = start; k < end; ++k) {
          const Article* a = fit[static_cast<std::size_t>(order[k])];
          const std::string* c =
              a->comments.empty() ? nullptr : &a->comments[std::size_t(er.index(a->comments.size()))];
          items.push_back({a, c});
        }

        if (mle_on) {
          Graph g;
          Graph::Var total{};
          bool first = true;
          std::size_t tokens = 0;
          for (const auto& it : items) {
            if (it.comment == nullptr) continue;
            auto target = vocab.encode_seq(*it.comment, T + 2);
            if (target.size() < 2) continue;
            Mat z = G.sample_z(er);
            const std::size_t n = target.size() - 1;
            auto nll = g.scale(G.sequence_nll(g, it.a->content, target, z),
                               static_cast<double>(n));
            total = first ? nll : g.add(total, nll);
            first = false;
            tokens += n;
          }
          if (!first) {
            auto loss = g.scale(total, 1.0 / static_cast<double>(tokens));
            const double lv = g.val(loss)(0, 0);
            if (!std::isfinite(lv)) {
              throw NanError("train_malcom: non-finite teacher-forcing loss");
            }
            a_mle.add(lv);
            opt_G.zero_grad();
            g.backward(g.scale(loss, cfg.weight_mle));
            nn::clip_global_norm(gps, 5.0);
            opt_G.step();
          }
        }

        if (style_on) {
          std::vector<StyleExample> exs;
          for (const auto& it : items) {
            if (it.comment == nullptr) continue;
            exs.push_back({it.a->content, it.a->title, *it.comment});
          }
          if (!exs.empty()) {
            StyleOpts so;
            so.tau = cfg.tau;
            so.weight_gan = cfg.weight_gan;
            so.weight_mmd = cfg.weight_mmd;
            auto r = style_step(G, D, exs, so, opt_G, opt_D, er);
            a_d.add(r.loss_D);
            a_gd.add(r.loss_G_D);
            a_gh.add(r.loss_G_H);
          }
        }

        if (attack_on) {
          Graph g;
          std::vector<Graph::Var> losses;
          for (const auto& it : items) {
            Mat z = G.sample_z(er);
            auto s = G.generate_relaxed(g, it.a->content, z, cfg.tau, er);
            CommentInput gi;
            gi.relaxed = s.one_hots;
            gi.len = s.len;
            std::vector<CommentInput> existing;
            const std::size_t keep =
                std::min(it.a->comments.size(), static_cast<std::size_t>(std::max(0, budget - 1)));
            for (std::size_t ci = 0; ci < keep; ++ci) {
              existing.push_back(hard_comment(vocab, it.a->comments[ci],
                                              f.config().max_comment_tokens));
            }
            losses.push_back(attack_loss(g, f, it.a->content, std::move(existing), gi,
                                         cfg.target_label));
          }
          auto loss = losses.size() == 1 ? losses[0] : g.mean_all(g.concat_cols(losses));
          const double lv = g.val(loss)(0, 0);
          if (!std::isfinite(lv)) {
            throw NanError("train_malcom: non-finite attack loss");
          }
          a_atk.add(lv);
          opt_G.zero_grad();
          g.backward(g.scale(loss, cfg.weight_attack));
          nn::clip_global_norm(gps, 5.0);
          opt_G.step();
        }
      }

      MalcomEpoch e;
      e.mle = a_mle.mean();
      e.loss_D = a_d.mean();
      e.loss_G_D = a_gd.mean();
      e.loss_G_H = a_gh.mean();
      e.attack = a_atk.mean();
      fill_probe(e, G, f, probe, cfg, topics);
      log.epochs.push_back(e);
    } catch (const NanError&) {
      restore(gps, gsnap);
      restore(dps, dsnap);
      throw;
    }
  }
  return log;
}

}  // namespace malcom
