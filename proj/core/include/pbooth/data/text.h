#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pbooth::data {

inline constexpr std::size_t kVariantsPerContent = 8;
inline constexpr std::string_view kPlaceholderWord = "[P]";

struct PromptText {
  std::vector<std::size_t> tokens;
  std::optional<std::size_t> subject_index;
  std::optional<std::size_t> placeholder_index;
  std::string text;
};

// Closed vocabulary derived from the description templates. Index 0 is the
// persona placeholder token.
class Vocabulary {
 public:
  static const Vocabulary& Default();

  std::size_t size() const { return words_.size(); }
  std::size_t placeholder() const { return 0; }
  std::size_t Id(std::string_view word) const;  // VocabularyError if unknown
  const std::string& Word(std::size_t id) const;
  bool IsSubjectToken(std::size_t id) const;

  // Lower-cases and splits on whitespace; the subject is the first
  // subject-class token.
  PromptText Tokenize(std::string_view text) const;
  std::string Detokenize(const std::vector<std::size_t>& tokens) const;

 private:
  Vocabulary();

  std::vector<std::string> words_;
  std::vector<bool> subject_;
};

const std::string& Template(int content_id, int variant);

// Templated description of a content. With `personalized`, the placeholder
// token is inserted immediately before the subject.
PromptText Describe(int content_id, int variant, bool personalized = false);

// Inserts the placeholder before the subject of an existing prompt.
PromptText Personalize(const PromptText& prompt);

}  // namespace pbooth::data
