#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "../random_text.hpp"
#include "numlm/errors.hpp"
#include "numlm/numtext.hpp"

using namespace numlm;
using namespace numlm::text;

TEST(Extract, ReplacesNumbersInOrder) {
  const auto enc = extract_numbers("Speed 12.5 m/s, yaw -3 deg, accel 0.25.", policy_by_id("none"));
  ASSERT_EQ(enc.numbers, (std::vector<double>{12.5, -3.0, 0.25}));
  EXPECT_EQ(enc.turns[0].tmpl, "Speed <number_token> m/s, yaw <number_token> deg, accel <number_token>.");
  EXPECT_EQ(enc.spans[1].original_literal, "-3");
  EXPECT_EQ(enc.placeholder_count(), 3u);
}

TEST(Extract, SkipsNumbersInsideWords) {
  const auto enc = extract_numbers("v2x A4 x1.5 3rd 7_a 2.5km", policy_by_id("none"));
  EXPECT_TRUE(enc.numbers.empty());
  EXPECT_EQ(enc.turns[0].tmpl, "v2x A4 x1.5 3rd 7_a 2.5km");
}

TEST(Extract, MalformedLiteralsStayTextual) {
  const auto enc = extract_numbers("at 10. then 1.2.3 and 4", policy_by_id("none"));
  EXPECT_EQ(enc.numbers, (std::vector<double>{4.0}));
  EXPECT_EQ(enc.turns[0].tmpl, "at 10. then 1.2.3 and <number_token>");
  ASSERT_EQ(enc.diagnostics.size(), 2u);
  EXPECT_EQ(enc.diagnostics[0].kind, Diagnostic::Kind::malformed_literal);
}

TEST(Extract, DrivePolicyKeepsSceneConstants) {
  const auto p = policy_by_id("drive-v1");
  const auto enc = extract_numbers("The video length is 8 s and 6 camera views. Plan 3 waypoints at 4.5 m/s.", p);
  EXPECT_EQ(enc.numbers, (std::vector<double>{4.5}));
  const auto e2 = extract_numbers("Predict 2 steps ahead using 3 frames; speed 2", p);
  EXPECT_EQ(e2.numbers, (std::vector<double>{2.0}));
  EXPECT_EQ(e2.turns[0].tmpl, "Predict 2 steps ahead using 3 frames; speed <number_token>");
}

TEST(Extract, ExcludedRangesArePerTurn) {
  ConversionPolicy p;
  p.excluded_ranges.push_back({1, 0, 4});
  const std::vector<Turn> turns{{Role::user, "12 34"}, {Role::assistant, "12 34"}};
  const auto enc = extract_dialogue(turns, p);
  EXPECT_EQ(enc.numbers, (std::vector<double>{12.0, 34.0, 34.0}));
  EXPECT_EQ(enc.turns[1].tmpl, "12 <number_token>");
}

TEST(Extract, PlaceholderCollisionIsRejected) {
  EXPECT_THROW(extract_numbers("value <number_token> 3", policy_by_id("none")), PlaceholderCollision);
  EXPECT_THROW(extract_numbers("value <number_token> 3", policy_by_id("none")), AlignmentError);
}

TEST(Extract, UnknownPolicyIsAnInputError) { EXPECT_THROW(policy_by_id("nope"), InputError); }

TEST(Restore, LiteralRoundTripAndFixedFormatting) {
  const std::vector<Turn> turns{{Role::user, "go 007 at -0.50"}, {Role::assistant, "ok 3.14159"}};
  const auto enc = extract_dialogue(turns, policy_by_id("none"));
  const auto back = restore_numbers(enc, FormatPolicy::literal());
  EXPECT_EQ(back[0].text, turns[0].text);
  EXPECT_EQ(back[1].text, turns[1].text);
  const auto fixed = restore_numbers(enc, FormatPolicy::fixed(2));
  EXPECT_EQ(fixed[0].text, "go 7.00 at -0.50");
  EXPECT_EQ(fixed[1].text, "ok 3.14");
}

TEST(Restore, CountMismatchRaises) {
  auto enc = extract_numbers("a 1 b 2", policy_by_id("none"));
  enc.numbers.pop_back();
  EXPECT_THROW(restore_numbers(enc, FormatPolicy::fixed(2)), AlignmentError);
  auto enc2 = extract_numbers("a 1 b 2", policy_by_id("none"));
  enc2.numbers.push_back(3.0);
  EXPECT_THROW(restore_text(enc2, FormatPolicy::fixed(2)), AlignmentError);
  auto enc3 = extract_numbers("a 1 b 2", policy_by_id("none"));
  enc3.spans.clear();
  EXPECT_THROW(restore_numbers(enc3, FormatPolicy::literal()), AlignmentError);
  EXPECT_NO_THROW(restore_numbers(enc3, FormatPolicy::fixed(1)));
}

TEST(Restore, RoundTripPropertyOverRandomDialogues) {
  std::mt19937_64 rng(20240601);
  const auto policies = {policy_by_id("none"), policy_by_id("drive-v1")};
  for (int i = 0; i < 1000; ++i) {
    const auto turns = oracle::random_dialogue(rng);
    for (const auto& policy : policies) {
      const auto enc = extract_dialogue(turns, policy);
      ASSERT_EQ(enc.placeholder_count(), enc.numbers.size());
      const auto back = restore_numbers(enc, FormatPolicy::literal());
      ASSERT_EQ(back.size(), turns.size());
      for (std::size_t t = 0; t < turns.size(); ++t) {
        ASSERT_EQ(back[t].text, turns[t].text) << "dialogue " << i;
        ASSERT_EQ(back[t].role, turns[t].role);
      }
    }
  }
}

TEST(Restore, ExtractedLiteralsMatchTheNumberGrammar) {
  std::mt19937_64 rng(77);
  const std::regex grammar(R"(-?\d+(\.\d+)?)");
  for (int i = 0; i < 300; ++i) {
    const auto enc = extract_numbers(oracle::random_text(rng), policy_by_id("none"));
    for (const auto& s : enc.spans) {
      ASSERT_TRUE(std::regex_match(s.original_literal, grammar)) << s.original_literal;
      ASSERT_EQ(s.value, std::stod(s.original_literal));
    }
  }
}

TEST(FormatFixed, RoundsHalfAwayFromZero) {
  EXPECT_EQ(format_fixed(10.5, 2), "10.50");
  EXPECT_EQ(format_fixed(-3.256, 2), "-3.26");
  EXPECT_EQ(format_fixed(0.0, 2), "0.00");
  EXPECT_EQ(format_fixed(0.125, 2), "0.13");
  EXPECT_EQ(format_fixed(-0.125, 2), "-0.13");
  EXPECT_EQ(format_fixed(-0.001, 2), "0.00");
  EXPECT_EQ(format_fixed(2.5, 0), "3");
  EXPECT_THROW(format_fixed(std::nan(""), 2), InputError);
}

TEST(RenderRoles, KeepsRemainingPlaceholdersAligned) {
  const std::vector<Turn> turns{{Role::user, "a 1.5 b 2"}, {Role::assistant, "c 3"}};
  const auto enc = extract_dialogue(turns, policy_by_id("none"));
  const std::array<Role, 1> user{Role::user};
  const auto r = render_roles_as_text(enc, user, 2);
  EXPECT_EQ(r.turns[0].tmpl, "a 1.50 b 2.00");
  EXPECT_EQ(r.turns[1].tmpl, "c <number_token>");
  EXPECT_EQ(r.numbers, (std::vector<double>{3.0}));
  EXPECT_EQ(r.placeholder_count(), r.numbers.size());
}

TEST(Vocab, LayoutAndPieces) {
  const CharVocab v;
  EXPECT_EQ(v.size(), 104);
  EXPECT_EQ(v.id_of(' '), CharVocab::kFirstPrintable);
  EXPECT_EQ(v.id_of('~'), v.size() - 1);
  EXPECT_EQ(v.id_of('\n'), CharVocab::kNewline);
  EXPECT_EQ(v.id_of('\t'), CharVocab::kUnk);
  for (char c = 32; c < 127; ++c) EXPECT_EQ(v.piece(v.id_of(c)), std::string(1, c));
}

TEST(Tokenize, SequenceLayoutAndSentinels) {
  const std::vector<Turn> turns{{Role::user, "<image> v 2"}, {Role::assistant, "3"}};
  const auto enc = extract_dialogue(turns, policy_by_id("none"));
  const CharVocab v;
  const auto seq = tokenize(enc, v);
  const std::vector<int> want{CharVocab::kBos,    CharVocab::kUser, kImageTokenIndex,
                              v.id_of(' '),       v.id_of('v'),     v.id_of(' '),
                              kNumberTokenIndex,  CharVocab::kAssistant, kNumberTokenIndex,
                              CharVocab::kEos};
  EXPECT_EQ(seq.ids, want);
  EXPECT_EQ(seq.numeric_positions, (std::vector<std::size_t>{6, 8}));
  EXPECT_EQ(seq.obs_positions, (std::vector<std::size_t>{2}));
  for (int id : seq.labels) EXPECT_EQ(id, kIgnoreIndex);

  const auto mask = assistant_mask(seq, v);
  const auto lab = build_labels(seq, mask);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(lab.labels[i], i >= 8 ? seq.ids[i] : kIgnoreIndex);
  EXPECT_THROW(build_labels(seq, std::vector<bool>(3, true)), ContractError);
}

TEST(Tokenize, CountsUnknownCharacters) {
  const auto enc = extract_numbers("a\tb\x01", policy_by_id("none"));
  const auto seq = tokenize(enc, CharVocab{});
  EXPECT_EQ(seq.unknown_chars, 2u);
}
