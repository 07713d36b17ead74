#include <doctest.h>

#include <random>

#include "scriptalign/text_similarity.hpp"

using namespace scriptalign;

TEST_CASE("fuzzy_similarity examples") {
  CHECK(fuzzy_similarity("How are you today?", "How are you today?") == 1.0);
  CHECK(fuzzy_similarity("apples and pears", "rainy weather outside") == 0.0);
  CHECK(fuzzy_similarity("how confident are you today", "how confident do you feel today") ==
        doctest::Approx(4.0 / 7.0));
  CHECK(fuzzy_similarity("", "") == 1.0);
  CHECK(fuzzy_similarity("?!", "...") == 1.0);
  CHECK(fuzzy_similarity("", "word") == 0.0);
}

TEST_CASE("normalization ignores case, punctuation and spacing") {
  CHECK(fuzzy_similarity("What, exactly, helps YOU?", "what exactly   helps you") == 1.0);
  CHECK(normalized_tokens("Don't stop!") == std::set<std::string>{"dont", "stop"});
  CHECK(token_sequence("a b a") == std::vector<std::string>{"a", "b", "a"});
}

TEST_CASE("two synonyms swapped in a twelve-token question still match") {
  const std::string node = "What small step could you take this week to move more often";
  const std::string bot = "What little step could you take this week to walk more often";
  CHECK(normalized_tokens(node).size() == 12);
  CHECK(fuzzy_similarity(node, bot) == doctest::Approx(10.0 / 14.0));
  CHECK(fuzzy_similarity(node, bot) >= kDefaultMatchThreshold);
}

TEST_CASE("symmetry on random strings") {
  std::mt19937 rng(7);
  const char* words[] = {"walk", "Run", "swim,", "TODAY", "you", "feel", "how", "?"};
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    for (int k = rng() % 6; k > 0; --k) a += std::string(words[rng() % 8]) + " ";
    for (int k = rng() % 6; k > 0; --k) b += std::string(words[rng() % 8]) + " ";
    CHECK(fuzzy_similarity(a, b) == fuzzy_similarity(b, a));
    CHECK(fuzzy_similarity(a, b) >= 0.0);
    CHECK(fuzzy_similarity(a, b) <= 1.0);
    CHECK((fuzzy_similarity(a, b) == 1.0) == (normalized_tokens(a) == normalized_tokens(b)));
  }
}
