#include "malcom/corpus.hpp"

#include "malcom/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace malcom {

namespace {

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '\'' || c == '@' ||
         c == '$';
}

bool looks_like_url(const std::string& tok) {
  if (tok.rfind("http://", 0) == 0 || tok.rfind("https://", 0) == 0) return true;
  if (tok.rfind("www.", 0) == 0) return true;
  return tok.find("://") != std::string::npos;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool all_alpha(const std::string& tok) {
  if (tok.empty()) return false;
  for (char c : tok)
    if (c < 'a' || c > 'z') return false;
  return true;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (is_word_char(c)) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string clean_comment(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  std::string out;
  while (in >> tok) {
    const std::string low = to_lower(tok);
    if (low[0] == '@' || low[0] == '#') continue;
    if (looks_like_url(low)) continue;
    if (!out.empty()) out.push_back(' ');
    out += low;
  }
  return out;
}

Dataset filter_comments(const Dataset& d, int min_len, int max_len, double min_alpha_ratio) {
  if (min_len > max_len) throw std::invalid_argument("filter_comments: min_len > max_len");
  Dataset out = d;
  for (Article& a : out.articles) {
    std::vector<std::string> kept;
    for (const std::string& c : a.comments) {
      const auto toks = tokenize(c);
      const int n = static_cast<int>(toks.size());
      if (n < min_len || n > max_len) continue;
      int alpha = 0;
      for (const auto& t : toks) alpha += all_alpha(t) ? 1 : 0;
      if (n > 0 && double(alpha) / double(n) < min_alpha_ratio) continue;
      kept.push_back(c);
    }
    a.comments = std::move(kept);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double ratio, std::uint64_t seed) {
  if (d.articles.empty()) throw std::invalid_argument("split: empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split: ratio must be in (0,1)");
  std::vector<std::size_t> order(d.articles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(ratio * double(d.articles.size())));
  Dataset train, test;
  train.split_tag = SplitTag::train;
  test.split_tag = SplitTag::test;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : test).articles.push_back(d.articles[order[i]]);
  return {std::move(train), std::move(test)};
}

Vocabulary::Vocabulary() : id_to_token_{"<pad>", "<bos>", "<eos>", "<unk>"} {
  for (int i = 0; i < kReserved; ++i) token_to_id_[id_to_token_[std::size_t(i)]] = i;
}

Vocabulary Vocabulary::build(const Dataset& train, std::size_t max_size, int min_count) {
  if (train.articles.empty()) throw std::invalid_argument("build_vocab: empty train set");
  std::unordered_map<std::string, long> counts;
  auto tally = [&counts](const std::string& text) {
    for (const auto& t : tokenize(text)) ++counts[t];
  };
  for (const Article& a : train.articles) {
    tally(a.title);
    tally(a.content);
    for (const auto& c : a.comments) tally(c);
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // Frequency descending, then lexicographic so the cut is deterministic.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, cnt] : ranked) {
    if (v.id_to_token_.size() >= max_size) break;
    if (cnt < min_count) break;
    if (v.token_to_id_.count(tok)) continue;
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id out of range");
  return id_to_token_[std::size_t(id)];
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& t : tokenize(text)) out.push_back(id(t));
  return out;
}

std::vector<int> Vocabulary::encode_seq(const std::string& text, int max_len) const {
  if (max_len < 2) throw std::invalid_argument("encode_seq: max_len must be >= 2");
  std::vector<int> out{kBos};
  for (const auto& t : tokenize(text)) {
    if (static_cast<int>(out.size()) >= max_len - 1) break;
    out.push_back(id(t));
  }
  out.push_back(kEos);
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kReserved) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : id_to_token_) h = fnv1a(t + "\n", h);
  return h;
}

Json Vocabulary::to_json() const {
  Json j = artifact_envelope("vocab", 1);
  j["tokens"] = id_to_token_;
  j["hash"] = hash();
  return j;
}

Vocabulary Vocabulary::from_json(const Json& j) {
  check_envelope(j, "vocab", 1);
  const auto& toks = j.at("tokens");
  if (!toks.is_array() || toks.size() < std::size_t(kReserved))
    throw SchemaError("vocab: token list too short");
  Vocabulary v;
  for (std::size_t i = 0; i < std::size_t(kReserved); ++i)
    if (toks.at(i).get<std::string>() != v.id_to_token_[i])
      throw SchemaError("vocab: reserved tokens corrupted");
  for (std::size_t i = std::size_t(kReserved); i < toks.size(); ++i) {
    const std::string tok = toks.at(i).get<std::string>();
    if (v.token_to_id_.count(tok)) throw SchemaError("vocab: duplicate token " + tok);
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  if (j.contains("hash") && j.at("hash").get<std::uint64_t>() != v.hash())
    throw SchemaError("vocab: stored hash does not match token list");
  return v;
}

Dataset load_dataset(const std::string& path) {
  Dataset d;
  std::unordered_set<std::string> seen;
  for (const Json& row : load_jsonl(path)) {
    if (!row.is_object()) throw SchemaError(path + ": article row is not an object");
    for (const char* key : {"id", "title", "content", "label", "comments"})
      if (!row.contains(key)) throw SchemaError(path + ": article missing field " + key);
    Article a;
    a.id = row.at("id").get<std::string>();
    a.title = row.at("title").get<std::string>();
    a.content = row.at("content").get<std::string>();
    if (!row.at("label").is_number_integer()) throw SchemaError(path + ": label must be 0 or 1");
    a.label = row.at("label").get<int>();
    if (a.label != 0 && a.label != 1) throw SchemaError(path + ": label must be 0 or 1");
    if (!row.at("comments").is_array()) throw SchemaError(path + ": comments must be an array");
    for (const Json& c : row.at("comments")) a.comments.push_back(c.get<std::string>());
    if (!seen.insert(a.id).second) throw SchemaError(path + ": duplicate article id " + a.id);
    d.articles.push_back(std::move(a));
  }
  return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::vector<Json> rows;
  rows.reserve(d.articles.size());
  for (const Article& a : d.articles) {
    rows.push_back(Json{{"id", a.id},
                        {"title", a.title},
                        {"content", a.content},
                        {"label", a.label},
                        {"comments", a.comments}});
  }
  save_jsonl(path, rows);
}

}  // namespace malcom
