#pragma once

// Closed text grammar over the motion primitives: deterministic phrase
// rendering, a fixed tagged vocabulary, and the inverse parser. Stands in
// for the LLM half of the description pipeline.

#include <string>
#include <vector>

#include "mogen/synthworld/motion.hpp"

namespace mogen::world {

struct Vocabulary {
  std::vector<std::string> words;
  std::vector<std::string> pos;  // fixed tag per word
  int id_of(const std::string& w) const;  // -1 when absent
  int size() const { return static_cast<int>(words.size()); }
};

const Vocabulary& vocabulary();

class GrammarError : public std::runtime_error {
 public:
  GrammarError(int token_position, const std::string& message)
      : std::runtime_error("token " + std::to_string(token_position) + ": " +
                           message),
        position(token_position) {}
  int position;
};

std::vector<std::string> tokenize_text(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

std::string atomic_text(const MetaMotion& a);
std::string compose_text(const MetaMotion& a, const MetaMotion& b, Connector conn);

struct ParsedPrompt {
  std::vector<MetaMotion> metas;  // singleton for atomic descriptions
  Connector connector = Connector::none;
};

// Inverse of the templating; throws GrammarError at the first token that
// cannot be parsed.
ParsedPrompt decompose(const std::string& text);

// Fills text, token ids, POS tags, meta ids and connector.
PromptRecord make_prompt(const std::string& text, bool paired);

}  // namespace mogen::world
