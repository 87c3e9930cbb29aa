#include "pbooth/data/text.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

#include "pbooth/data/motion.h"
#include "pbooth/errors.h"

namespace pbooth::data {
namespace {

const std::array<std::array<std::string, kVariantsPerContent>, kContentCount>&
Templates() {
  static const std::array<std::array<std::string, kVariantsPerContent>,
                          kContentCount>
      templates = {{
          {"a person walks forward", "a person walks straight ahead",
           "someone walks forward in a straight line",
           "the person takes steps forward", "a person is walking forward slowly",
           "someone walks ahead", "a person walks in a straight line",
           "the person strolls forward"},
          {"a person walks in a circle", "someone walks around in a circle",
           "a person is walking in a circle", "the person walks around in a circle",
           "a person circles around while walking", "someone walks in a round path",
           "a person turns while walking in a circle",
           "the person walks a full circle"},
          {"a person runs forward", "someone runs ahead quickly",
           "a person is running forward", "the person jogs forward",
           "a person runs in a straight line", "someone sprints forward",
           "a person runs ahead", "the person is jogging forward quickly"},
          {"a person hops forward", "someone jumps forward with both feet",
           "a person is hopping forward", "the person hops ahead",
           "a person jumps forward several times",
           "someone hops in place and moves forward",
           "a person bounces forward on both feet", "the person jumps ahead"},
          {"a person waves a hand", "someone waves hello",
           "a person is waving a hand", "the person raises a hand and waves",
           "a person waves", "someone waves a hand in greeting",
           "a person lifts an arm and waves", "the person waves goodbye"},
          {"a person punches", "someone throws punches",
           "a person is punching forward", "the person punches with both fists",
           "a person throws punches forward", "someone punches the air",
           "a person boxes with both hands", "the person punches forward quickly"},
      }};
  return templates;
}

const std::set<std::string>& SubjectWords() {
  static const std::set<std::string> words = {"a", "the", "someone"};
  return words;
}

std::vector<std::string> SplitWords(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lowered);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) {
    if (w == "[p]") w = std::string(kPlaceholderWord);
    words.push_back(w);
  }
  return words;
}

}  // namespace

Vocabulary::Vocabulary() {
  std::set<std::string> unique;
  for (const auto& content : Templates()) {
    for (const auto& t : content) {
      for (auto& w : SplitWords(t)) unique.insert(w);
    }
  }
  words_.push_back(std::string(kPlaceholderWord));
  words_.insert(words_.end(), unique.begin(), unique.end());
  subject_.resize(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    subject_[i] = SubjectWords().count(words_[i]) > 0;
  }
}

const Vocabulary& Vocabulary::Default() {
  static const Vocabulary vocab;
  return vocab;
}

std::size_t Vocabulary::Id(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) {
    throw VocabularyError("word '" + std::string(word) +
                          "' is not in the vocabulary");
  }
  return static_cast<std::size_t>(it - words_.begin());
}

const std::string& Vocabulary::Word(std::size_t id) const {
  if (id >= words_.size()) {
    throw VocabularyError("token id " + std::to_string(id) +
                          " is outside the vocabulary of " +
                          std::to_string(words_.size()));
  }
  return words_[id];
}

bool Vocabulary::IsSubjectToken(std::size_t id) const {
  return id < subject_.size() && subject_[id];
}

PromptText Vocabulary::Tokenize(std::string_view text) const {
  PromptText p;
  for (const auto& w : SplitWords(text)) {
    const std::size_t id = Id(w);
    if (id == placeholder() && !p.placeholder_index) {
      p.placeholder_index = p.tokens.size();
    }
    if (!p.subject_index && IsSubjectToken(id)) p.subject_index = p.tokens.size();
    p.tokens.push_back(id);
  }
  if (p.tokens.empty()) throw VocabularyError("empty prompt");
  p.text = Detokenize(p.tokens);
  return p;
}

std::string Vocabulary::Detokenize(const std::vector<std::size_t>& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += Word(tokens[i]);
  }
  return out;
}

const std::string& Template(int content_id, int variant) {
  CheckContent(content_id);
  if (variant < 0 || variant >= static_cast<int>(kVariantsPerContent)) {
    throw DataError("no description template " + std::to_string(variant) +
                    " for content " + std::string(ContentName(content_id)));
  }
  return Templates()[static_cast<std::size_t>(content_id)]
                    [static_cast<std::size_t>(variant)];
}

PromptText Describe(int content_id, int variant, bool personalized) {
  PromptText p = Vocabulary::Default().Tokenize(Template(content_id, variant));
  return personalized ? Personalize(p) : p;
}

PromptText Personalize(const PromptText& prompt) {
  if (!prompt.subject_index) {
    throw VocabularyError("prompt '" + prompt.text + "' has no subject token");
  }
  const auto& vocab = Vocabulary::Default();
  PromptText out = prompt;
  const std::size_t at = *prompt.subject_index;
  out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(at),
                    vocab.placeholder());
  out.placeholder_index = at;
  out.subject_index = at + 1;
  out.text = vocab.Detokenize(out.tokens);
  return out;
}

}  // namespace pbooth::data
