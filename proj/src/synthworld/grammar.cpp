#include "mogen/synthworld/grammar.hpp"

#include <sstream>
#include <utility>

namespace mogen::world {

namespace {

struct PhraseEntry {
  const char* third_person;
  const char* gerund;
};

// Canonical verb phrases per primitive, third-person and gerund forms.
const PhraseEntry kPhrases[kPrimitiveCount] = {
    {"walks forward", "walking forward"},            // walk
    {"runs forward", "running forward"},             // run
    {"jumps", "jumping"},                            // jump
    {"turns left", "turning left"},                  // turn_left
    {"turns right", "turning right"},                // turn_right
    {"waves their left arm", "waving their left arm"},    // wave_left_arm
    {"waves their right arm", "waving their right arm"},  // wave_right_arm
    {"raises both arms", "raising both arms"},       // raise_both_arms
    {"crouches down", "crouching down"},             // crouch
    {"kicks forward", "kicking forward"},            // kick
    {"sits down", "sitting down"},                   // sit
    {"stands still", "standing still"},              // stand_still
};

// Accepted alternative phrasings (parser only; rendering always uses the
// canonical form).
struct AliasEntry {
  Primitive primitive;
  const char* third_person;
  const char* gerund;
};
const AliasEntry kAliases[] = {
    {Primitive::wave_left_arm, "flexes their left arm", "flexing their left arm"},
    {Primitive::wave_right_arm, "flexes their right arm", "flexing their right arm"},
};

struct LexEntry {
  const char* word;
  const char* pos;
};
const LexEntry kLexicon[] = {
    {"a", "DET"},        {"person", "NOUN"},   {"walks", "VERB"},
    {"walking", "VERB"}, {"runs", "VERB"},     {"running", "VERB"},
    {"forward", "ADV"},  {"jumps", "VERB"},    {"jumping", "VERB"},
    {"turns", "VERB"},   {"turning", "VERB"},  {"left", "ADJ"},
    {"right", "ADJ"},    {"waves", "VERB"},    {"waving", "VERB"},
    {"flexes", "VERB"},  {"flexing", "VERB"},  {"their", "PRON"},
    {"arm", "NOUN"},     {"raises", "VERB"},   {"raising", "VERB"},
    {"both", "DET"},     {"arms", "NOUN"},     {"crouches", "VERB"},
    {"crouching", "VERB"}, {"down", "ADV"},    {"kicks", "VERB"},
    {"kicking", "VERB"}, {"sits", "VERB"},     {"sitting", "VERB"},
    {"stands", "VERB"},  {"standing", "VERB"}, {"still", "ADV"},
    {"then", "ADV"},     {"while", "SCONJ"},   {",", "PUNCT"},
    {".", "PUNCT"},
};

std::vector<std::string> split_words(const std::string& phrase) {
  std::vector<std::string> out;
  std::istringstream iss(phrase);
  std::string w;
  while (iss >> w) out.push_back(w);
  return out;
}

}  // namespace

int Vocabulary::id_of(const std::string& w) const {
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i] == w) return static_cast<int>(i);
  return -1;
}

const Vocabulary& vocabulary() {
  static const Vocabulary vocab = [] {
    Vocabulary v;
    for (const auto& e : kLexicon) {
      v.words.emplace_back(e.word);
      v.pos.emplace_back(e.pos);
    }
    return v;
  }();
  return vocab;
}

std::vector<std::string> tokenize_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) tokens.push_back(std::exchange(cur, {}));
    } else if (ch == ',' || ch == '.') {
      if (!cur.empty()) tokens.push_back(std::exchange(cur, {}));
      tokens.push_back(std::string(1, ch));
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && t != "," && t != ".") out += ' ';
    out += t;
  }
  return out;
}

std::string MetaMotion::verb_phrase() const {
  return kPhrases[static_cast<int>(primitive)].third_person;
}

std::string MetaMotion::verb_phrase_gerund() const {
  return kPhrases[static_cast<int>(primitive)].gerund;
}

std::string atomic_text(const MetaMotion& a) {
  return "a person " + a.verb_phrase() + ".";
}

std::string compose_text(const MetaMotion& a, const MetaMotion& b, Connector conn) {
  switch (conn) {
    case Connector::none:
      throw std::invalid_argument("compose: connector must be 'then' or 'while'");
    case Connector::then:
      return "a person " + a.verb_phrase() + ", then " + b.verb_phrase() + ".";
    case Connector::while_:
      return "a person " + a.verb_phrase() + " while " + b.verb_phrase_gerund() + ".";
  }
  throw std::invalid_argument("compose: bad connector");
}

namespace {

// Longest-match of a verb phrase at `pos`; the phrase table is prefix-free.
bool match_phrase(const std::vector<std::string>& tokens, std::size_t& pos,
                  bool gerund, Primitive& out) {
  auto try_words = [&](const char* phrase, Primitive p) {
    const auto words = split_words(phrase);
    if (pos + words.size() > tokens.size()) return false;
    for (std::size_t i = 0; i < words.size(); ++i)
      if (tokens[pos + i] != words[i]) return false;
    pos += words.size();
    out = p;
    return true;
  };
  for (int i = 0; i < kPrimitiveCount; ++i) {
    const auto p = static_cast<Primitive>(i);
    if (try_words(gerund ? kPhrases[i].gerund : kPhrases[i].third_person, p))
      return true;
  }
  for (const auto& alias : kAliases)
    if (try_words(gerund ? alias.gerund : alias.third_person, alias.primitive))
      return true;
  return false;
}

}  // namespace

ParsedPrompt decompose(const std::string& text) {
  const auto tokens = tokenize_text(text);
  const auto& vocab = vocabulary();
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (vocab.id_of(tokens[i]) < 0)
      throw GrammarError(static_cast<int>(i), "unknown word '" + tokens[i] + "'");

  std::size_t pos = 0;
  auto expect = [&](const std::string& word) {
    if (pos >= tokens.size() || tokens[pos] != word)
      throw GrammarError(static_cast<int>(pos), "expected '" + word + "'");
    ++pos;
  };
  expect("a");
  expect("person");

  ParsedPrompt parsed;
  Primitive first;
  if (!match_phrase(tokens, pos, /*gerund=*/false, first))
    throw GrammarError(static_cast<int>(pos), "expected a verb phrase");
  parsed.metas.push_back(meta_of(first));

  if (pos < tokens.size() && tokens[pos] == ".") {
    ++pos;
  } else if (pos < tokens.size() && tokens[pos] == ",") {
    ++pos;
    expect("then");
    Primitive second;
    if (!match_phrase(tokens, pos, /*gerund=*/false, second))
      throw GrammarError(static_cast<int>(pos), "expected a verb phrase after 'then'");
    parsed.metas.push_back(meta_of(second));
    parsed.connector = Connector::then;
    expect(".");
  } else if (pos < tokens.size() && tokens[pos] == "while") {
    ++pos;
    Primitive second;
    if (!match_phrase(tokens, pos, /*gerund=*/true, second))
      throw GrammarError(static_cast<int>(pos), "expected a gerund phrase after 'while'");
    parsed.metas.push_back(meta_of(second));
    parsed.connector = Connector::while_;
    expect(".");
  } else {
    throw GrammarError(static_cast<int>(pos), "expected '.', ', then' or 'while'");
  }
  if (pos != tokens.size())
    throw GrammarError(static_cast<int>(pos), "trailing tokens after sentence end");
  return parsed;
}

PromptRecord make_prompt(const std::string& text, bool paired) {
  const auto parsed = decompose(text);
  PromptRecord rec;
  rec.text = text;
  rec.paired = paired;
  rec.connector = parsed.connector;
  for (const auto& m : parsed.metas) rec.meta_ids.push_back(m.id);
  const auto tokens = tokenize_text(text);
  const auto& vocab = vocabulary();
  for (const auto& t : tokens) {
    const int id = vocab.id_of(t);
    rec.token_ids.push_back(id);
    rec.pos_tags.push_back(vocab.pos[static_cast<std::size_t>(id)]);
  }
  return rec;
}

}  // namespace mogen::world
