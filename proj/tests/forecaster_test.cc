#include <gtest/gtest.h>

#include <memory>
#include <sstream>

#include "cga/error.h"
#include "cga/forecaster.h"
#include "cga/pipeline.h"
#include "cga/synthetic.h"
#include "test_util.h"

namespace cga {
namespace {

using testing::make_conversation;

Lexicon lexicon(const std::string& text) {
  std::istringstream in(text);
  return read_lexicon(in);
}

TEST(ConstantForecaster, AlwaysReturnsValue) {
  const ConstantForecaster f(0.5);
  const Conversation c = make_conversation("c", 6, Label::kDerailing);
  for (std::size_t t = 1; t <= 5; ++t) EXPECT_EQ(f.score(prefix(c, t)), 0.5);
  EXPECT_THROW(ConstantForecaster(1.5), ValidationError);
  EXPECT_THROW(ConstantForecaster(-0.1), ValidationError);
}

TEST(Lexicon, ReadSkipsCommentsAndNormalizes) {
  const Lexicon lex = lexicon("# header\n\nIdiot\n  stupid  \n");
  EXPECT_EQ(lex, (Lexicon{"idiot", "stupid"}));
}

TEST(Lexicon, ShippedListLoads) {
  const Lexicon lex = load_lexicon(default_lexicon_path());
  EXPECT_TRUE(lex.contains("idiot"));
  for (std::string_view w : synthetic::hostile_words()) EXPECT_TRUE(lex.contains(w)) << w;
}

TEST(LexiconScore, Examples) {
  const Lexicon lex = lexicon("bad\nworse\n");
  const Conversation all = make_conversation("all", 3, Label::kCivil, {"bad worse", "bad"});
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(all, 2), lex, LexiconMode::kDensity), 1.0);

  const Conversation none = make_conversation("none", 3, Label::kCivil, {"fine day", "good"});
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(none, 2), lex, LexiconMode::kDensity), 0.0);

  // 2 hits among 10 tokens.
  const Conversation some =
      make_conversation("some", 3, Label::kCivil, {"one two bad four five", "six worse eight nine ten"});
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(some, 2), lex, LexiconMode::kDensity), 0.2);
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(some, 2), lex, LexiconMode::kMaxUtterance), 0.2);

  const Conversation uneven = make_conversation("uneven", 3, Label::kCivil, {"bad", "a b c"});
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(uneven, 2), lex, LexiconMode::kDensity), 0.25);
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(uneven, 2), lex, LexiconMode::kMaxUtterance), 1.0);

  const Conversation punct = make_conversation("punct", 2, Label::kCivil, {"..."});
  EXPECT_DOUBLE_EQ(lexicon_score(prefix(punct, 1), lex, LexiconMode::kDensity), 0.0);
}

TEST(LexiconForecaster, RejectsEmptyLexicon) {
  EXPECT_THROW(LexiconForecaster(Lexicon{}, LexiconMode::kDensity), ValidationError);
}

TEST(LastOnly, EqualsInnerOnSingleUtteranceView) {
  auto inner = std::make_shared<LexiconForecaster>(load_lexicon(default_lexicon_path()), LexiconMode::kDensity);
  const LastOnlyForecaster wrapped(inner);
  EXPECT_EQ(wrapped.descriptor().context_mode, ContextMode::kLastOnly);
  EXPECT_EQ(wrapped.descriptor().name, inner->descriptor().name);
  const Corpus corpus = generate_synthetic(5, 20);
  for (const Conversation& c : corpus.conversations()) {
    for (std::size_t t = 1; t <= c.forecastable(); ++t) {
      const PrefixView p = prefix(c, t);
      EXPECT_EQ(wrapped.score(p), inner->score(p.most_recent_only()));
      // The single-utterance view is the conversation made of utterance t only.
      Conversation alone = c;
      alone.utterances = {c.utterances[t - 1], c.utterances.back()};
      EXPECT_EQ(wrapped.score(p), inner->score(prefix(alone, 1)));
    }
  }
}

TEST(Forecasters, ScoresStayInUnitInterval) {
  const Corpus corpus = generate_synthetic(6, 30);
  auto lex = std::make_shared<LexiconForecaster>(load_lexicon(default_lexicon_path()), LexiconMode::kMaxUtterance);
  const LastOnlyForecaster last(lex);
  for (const Conversation& c : corpus.conversations()) {
    for (std::size_t t = 1; t <= c.forecastable(); ++t) {
      for (const Forecaster* f : {static_cast<const Forecaster*>(lex.get()), static_cast<const Forecaster*>(&last)}) {
        const double s = f->score(prefix(c, t));
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
      }
    }
  }
}

TEST(ContextMode, Parse) {
  EXPECT_EQ(parse_context_mode("full"), ContextMode::kFull);
  EXPECT_EQ(parse_context_mode("last_only"), ContextMode::kLastOnly);
  EXPECT_FALSE(parse_context_mode("none"));
  EXPECT_EQ(to_string(ContextMode::kLastOnly), "last_only");
}

}  // namespace
}  // namespace cga
