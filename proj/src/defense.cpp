#include "malcom/defense.hpp"

#include "malcom/errors.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace malcom {

namespace {

// Compact everyday-English dictionary backing the word recognizer; the train
// vocabulary is merged on top, so domain words never count as misspellings.
const char* const kCommonWords[] = {
    "the", "a", "an", "and", "or", "but", "if", "then", "than", "that", "this", "these", "those",
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "done", "will",
    "would", "can", "could", "should", "shall", "may", "might", "must", "not", "no", "yes", "of",
    "in", "on", "at", "by", "for", "with", "from", "to", "into", "onto", "over", "under", "about",
    "after", "before", "between", "through", "during", "above", "below", "up", "down", "out",
    "off", "again", "further", "once", "here", "there", "when", "where", "why", "how", "what",
    "which", "who", "whom", "whose", "all", "any", "both", "each", "few", "more", "most", "other",
    "some", "such", "only", "own", "same", "so", "too", "very", "just", "now", "also", "even",
    "still", "already", "always", "never", "often", "sometimes", "soon", "together", "around",
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "myself", "yourself",
    "himself", "herself", "itself", "ourselves", "themselves", "have", "has", "had", "having",
    "go", "goes", "went", "gone", "going", "get", "gets", "got", "gotten", "getting", "make",
    "makes", "made", "making", "know", "knows", "knew", "known", "knowing", "think", "thinks",
    "thought", "thinking", "take", "takes", "took", "taken", "taking", "see", "sees", "saw",
    "seen", "seeing", "come", "comes", "came", "coming", "want", "wants", "wanted", "use", "uses",
    "used", "find", "finds", "found", "give", "gives", "gave", "given", "giving", "tell", "tells",
    "told", "work", "works", "worked", "working", "call", "calls", "called", "try", "tries",
    "tried", "ask", "asks", "asked", "need", "needs", "needed", "feel", "feels", "felt", "become",
    "becomes", "became", "leave", "leaves", "left", "put", "puts", "mean", "means", "meant",
    "keep", "keeps", "kept", "let", "lets", "begin", "begins", "began", "begun", "seem", "seems",
    "seemed", "help", "helps", "helped", "talk", "talks", "talked", "turn", "turns", "turned",
    "start", "starts", "started", "show", "shows", "showed", "shown", "hear", "hears", "heard",
    "play", "plays", "played", "run", "runs", "ran", "move", "moves", "moved", "like", "likes",
    "liked", "live", "lives", "lived", "believe", "believes", "believed", "hold", "holds", "held",
    "bring", "brings", "brought", "happen", "happens", "happened", "write", "writes", "wrote",
    "written", "sit", "sits", "sat", "stand", "stands", "stood", "lose", "loses", "lost", "pay",
    "pays", "paid", "meet", "meets", "met", "include", "includes", "included", "continue",
    "continues", "continued", "set", "sets", "learn", "learns", "learned", "change", "changes",
    "changed", "lead", "leads", "led", "understand", "understands", "understood", "watch",
    "watches", "watched", "follow", "follows", "followed", "stop", "stops", "stopped", "create",
    "creates", "created", "speak", "speaks", "spoke", "spoken", "read", "reads", "spend",
    "spends", "spent", "grow", "grows", "grew", "grown", "open", "opens", "opened", "walk",
    "walks", "walked", "win", "wins", "won", "offer", "offers", "offered", "remember",
    "remembers", "remembered", "love", "loves", "loved", "consider", "considers", "considered",
    "appear", "appears", "appeared", "buy", "buys", "bought", "wait", "waits", "waited", "serve",
    "serves", "served", "die", "dies", "died", "send", "sends", "sent", "expect", "expects",
    "expected", "build", "builds", "built", "stay", "stays", "stayed", "fall", "falls", "fell",
    "fallen", "cut", "cuts", "reach", "reaches", "reached", "remain", "remains", "remained",
    "say", "says", "said", "look", "looks", "looked", "time", "times", "year", "years", "people",
    "person", "way", "ways", "day", "days", "man", "men", "woman", "women", "child", "children",
    "world", "life", "hand", "hands", "part", "parts", "eye", "eyes", "place", "places", "week",
    "weeks", "case", "cases", "point", "points", "government", "company", "companies", "number",
    "numbers", "group", "groups", "problem", "problems", "fact", "facts", "money", "night",
    "nights", "area", "areas", "water", "thing", "things", "family", "families", "head", "house",
    "houses", "country", "countries", "school", "schools", "state", "states", "student",
    "students", "friend", "friends", "news", "word", "words", "smile", "smiles", "dad", "mom",
    "home", "room", "mother", "father", "hour", "hours", "game", "games", "line", "lines", "end",
    "ends", "member", "members", "law", "car", "cars", "city", "cities", "name", "names", "team",
    "teams", "minute", "minutes", "idea", "ideas", "kid", "kids", "body", "back", "parent",
    "parents", "face", "faces", "level", "levels", "door", "doors", "health", "art", "war",
    "history", "party", "parties", "result", "results", "reason", "reasons", "research", "moment",
    "moments", "air", "force", "forces", "good", "new", "first", "last", "long", "great",
    "little", "old", "right", "big", "high", "small", "large", "next", "early", "young",
    "important", "public", "bad", "same", "able", "best", "better", "sure", "free", "true",
    "real", "whole", "certain", "clear", "recent", "late", "hard", "easy", "strong", "possible",
    "full", "special", "local", "happy", "serious", "ready", "simple", "white", "black", "red",
    "blue", "green", "nice", "huge", "popular", "hello", "thanks", "thank", "please", "wow",
    "rate", "rates", "rated", "rating",
    "really", "maybe", "actually", "probably", "definitely", "totally", "never", "ever", "lot",
    "lots", "lovely", "spot", "walks", "cannot", "dont", "cant", "wont", "didnt", "doesnt",
    "isnt", "wasnt", "im", "ive", "id", "youre", "hes", "shes", "its", "were", "theyre", "lol"};

struct LeetInverse {
  char glyph;
  const char* letters;  // candidate replacements
};

constexpr LeetInverse kInverse[] = {
    {'@', "a"}, {'3', "e"}, {'1', "li"}, {'0', "o"}, {'$', "s"}};

const char* inverse_letters(char c) {
  for (const auto& e : kInverse)
    if (e.glyph == c) return e.letters;
  return nullptr;
}

// Edge apostrophes and underscores are punctuation; leet glyphs are not.
std::string strip_edge_punct(const std::string& tok) {
  std::size_t b = 0, e = tok.size();
  while (b < e && (tok[b] == '\'' || tok[b] == '_')) ++b;
  while (e > b && (tok[e - 1] == '\'' || tok[e - 1] == '_')) --e;
  return tok.substr(b, e - b);
}

// All inverse-substituted spellings (capped); empty when the token carries no
// leet glyph.
void inverse_variants(const std::string& tok, std::size_t pos, std::string& cur,
                      std::vector<std::string>& out) {
  if (out.size() >= 32) return;
  if (pos == tok.size()) {
    if (cur != tok) out.push_back(cur);
    return;
  }
  const char* letters = inverse_letters(tok[pos]);
  if (letters == nullptr) {
    cur.push_back(tok[pos]);
    inverse_variants(tok, pos + 1, cur, out);
    cur.pop_back();
    return;
  }
  for (const char* l = letters; *l != '\0'; ++l) {
    cur.push_back(*l);
    inverse_variants(tok, pos + 1, cur, out);
    cur.pop_back();
  }
}

bool recognized_any_spelling(const std::string& tok, const WordRecognizer& recognizer) {
  if (recognizer(tok)) return true;
  std::string bare;
  for (char ch : tok)
    if (ch != '\'' && ch != '_') bare.push_back(ch);
  return bare != tok && !bare.empty() && recognizer(bare);
}

bool token_suspicious(const std::string& raw, const WordRecognizer& recognizer) {
  const std::string tok = strip_edge_punct(raw);
  if (tok.empty()) return false;
  if (std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return false;  // numerals are not misspellings
  if (!recognized_any_spelling(tok, recognizer)) return true;
  // A recognized spelling can still be a disguise when undoing the glyph map
  // lands on another known word.
  std::vector<std::string> variants;
  std::string cur;
  inverse_variants(tok, 0, cur, variants);
  return std::any_of(variants.begin(), variants.end(), recognizer);
}

}  // namespace

void DefenseConfig::validate() const {
  if (max_suspicious < 0) throw std::invalid_argument("defense: max_suspicious < 0");
  if (coherency_margin < 0.0) throw std::invalid_argument("defense: coherency_margin < 0");
}

Json DefenseConfig::to_json() const {
  return Json{{"max_suspicious", max_suspicious}, {"coherency_margin", coherency_margin}};
}

DefenseConfig DefenseConfig::from_json(const Json& j) {
  DefenseConfig c;
  if (!j.is_object()) throw SchemaError("defense config: expected object");
  c.max_suspicious = j.value("max_suspicious", c.max_suspicious);
  c.coherency_margin = j.value("coherency_margin", c.coherency_margin);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return c;
}

WordRecognizer dictionary_recognizer(const Vocabulary& train_vocab) {
  auto words = std::make_shared<std::unordered_set<std::string>>();
  for (const char* w : kCommonWords) words->insert(w);
  for (int id = Vocabulary::kReserved; id < train_vocab.size(); ++id)
    words->insert(train_vocab.token(id));
  return [words](const std::string& tok) { return words->count(tok) > 0; };
}

int count_suspicious(const std::string& comment, const WordRecognizer& recognizer) {
  int n = 0;
  for (const auto& tok : tokenize(comment))
    if (token_suspicious(tok, recognizer)) ++n;
  return n;
}

Json CommentVerdict::to_json() const {
  return Json{{"comment", comment},
              {"suspicious", suspicious},
              {"coherency", coherency},
              {"removed", removed},
              {"reason", reason}};
}

Json DefenseResult::to_json() const {
  Json j;
  j["kept"] = kept;
  j["filter_out_rate"] = filter_out_rate;
  j["title_coherency"] = title_coherency;
  j["verdicts"] = Json::array();
  for (const auto& v : verdicts) j["verdicts"].push_back(v.to_json());
  return j;
}

DefenseResult defend(const Article& article, const std::vector<std::string>& comments,
                     const TopicSet& topics, const DefenseConfig& cfg,
                     const WordRecognizer& recognizer) {
  cfg.validate();
  DefenseResult r;
  r.title_coherency = coherency_pair(topics, article.content, article.title);
  const double floor = r.title_coherency - cfg.coherency_margin;

  for (const auto& c : comments) {
    CommentVerdict v;
    v.comment = c;
    v.suspicious = count_suspicious(c, recognizer);
    v.coherency = coherency_pair(topics, article.content, c);
    const bool misspelled = v.suspicious > cfg.max_suspicious;
    const bool off_topic = v.coherency < floor;
    v.removed = misspelled || off_topic;
    if (misspelled && off_topic)
      v.reason = "misspelling+coherency";
    else if (misspelled)
      v.reason = "misspelling";
    else if (off_topic)
      v.reason = "coherency";
    if (!v.removed) r.kept.push_back(c);
    r.verdicts.push_back(std::move(v));
  }
  if (!comments.empty())
    r.filter_out_rate = static_cast<double>(comments.size() - r.kept.size()) /
                        static_cast<double>(comments.size());
  return r;
}

}  // namespace malcom
