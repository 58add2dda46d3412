#pragma once

// Number extraction and placeholder alignment for dialogue text.
//
// A dialogue is turned into per-turn templates in which every converted
// number is replaced by "<number_token>", plus one ordered list of values
// shared by the whole dialogue. The k-th placeholder (reading turns in
// order, left to right) always corresponds to numbers[k].

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "numlm/errors.hpp"

namespace numlm::text {

// Input-side sentinels. They never collide with vocabulary ids (>= 0).
inline constexpr int kIgnoreIndex = -100;
inline constexpr int kImageTokenIndex = -200;
inline constexpr int kNumberTokenIndex = -300;

inline constexpr std::string_view kNumberPlaceholder = "<number_token>";
inline constexpr std::string_view kImagePlaceholder = "<image>";

enum class Role : std::uint8_t { system, user, assistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct Turn {
  Role role = Role::user;
  std::string text;
};

struct NumberSpan {
  std::size_t turn = 0;
  std::size_t start = 0;  // byte offsets into the source turn text
  std::size_t end = 0;
  double value = 0.0;
  std::string original_literal;
};

struct Diagnostic {
  enum class Kind : std::uint8_t { malformed_literal, unknown_character, placeholder_collision };
  Kind kind;
  std::size_t turn = 0;
  std::size_t offset = 0;
  std::string detail;
};

struct EncodedTurn {
  Role role = Role::user;
  std::string tmpl;
};

struct EncodedDialogue {
  std::vector<EncodedTurn> turns;
  std::vector<double> numbers;
  std::vector<NumberSpan> spans;  // empty for numbers that never had a source literal
  std::vector<Diagnostic> diagnostics;

  std::size_t placeholder_count() const;
  std::vector<Role> role_tags() const;
};

// Context predicates that keep a number textual.
//  - prefix keyword: occurs between the previous sentence boundary and the number
//  - suffix keyword: the word right after the number (after spaces) starts with it
//  - excluded range: byte range of one turn fully containing the number
struct ConversionPolicy {
  std::string id = "none";
  std::vector<std::string> prefix_keywords;
  std::vector<std::string> suffix_keywords;
  struct Range {
    std::size_t turn = 0;
    std::size_t first = 0;
    std::size_t last = 0;  // exclusive
  };
  std::vector<Range> excluded_ranges;
};

// "none" (convert everything) and "drive-v1" (keeps scene constants such as
// video length, camera views and horizon counts textual).
ConversionPolicy policy_by_id(std::string_view id);

// Raw text already containing the literal placeholder string is rejected.
class PlaceholderCollision : public AlignmentError {
 public:
  explicit PlaceholderCollision(Diagnostic diag);
  const Diagnostic& diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

EncodedDialogue extract_numbers(std::string_view text, const ConversionPolicy& policy);
EncodedDialogue extract_dialogue(std::span<const Turn> turns, const ConversionPolicy& policy);

struct FormatPolicy {
  enum class Mode : std::uint8_t { literal, fixed };
  Mode mode = Mode::literal;
  int decimals = 2;

  static FormatPolicy literal() { return {Mode::literal, 2}; }
  static FormatPolicy fixed(int decimals) { return {Mode::fixed, decimals}; }
};

// Round half away from zero to `decimals` places and render with exactly
// that many fractional digits ("-3.26", "10.50", "0.00").
std::string format_fixed(double value, int decimals);

std::vector<Turn> restore_numbers(const EncodedDialogue& dialogue, const FormatPolicy& format);
// Single-turn convenience.
std::string restore_text(const EncodedDialogue& dialogue, const FormatPolicy& format);

// Renders the placeholders of the selected roles back into text using fixed
// formatting and drops them from the number list; the rest stay aligned.
EncodedDialogue render_roles_as_text(const EncodedDialogue& dialogue, std::span<const Role> roles, int decimals);

// Character vocabulary: control markers, '\n' and printable ASCII.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSystem = 4;
  static constexpr int kUser = 5;
  static constexpr int kAssistant = 6;
  // Reserved class the LM head predicts where a number placeholder follows.
  static constexpr int kNumber = 7;
  static constexpr int kNewline = 8;
  static constexpr int kFirstPrintable = 9;

  int size() const { return kFirstPrintable + 95; }
  int id_of(char c) const;  // kUnk when not covered
  bool covers(char c) const;
  std::string piece(int id) const;
  int role_marker(Role role) const;
  bool is_role_marker(int id) const { return id == kSystem || id == kUser || id == kAssistant; }
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> labels;
  std::vector<Role> roles;  // role of the turn each position belongs to (bos: system)
  std::vector<std::size_t> numeric_positions;
  std::vector<std::size_t> obs_positions;
  std::size_t unknown_chars = 0;

  std::size_t size() const { return ids.size(); }
};

// [bos] then per turn: role marker, template characters, and [eos] after
// each assistant turn. Placeholders become the negative sentinels.
TokenSequence tokenize(const EncodedDialogue& dialogue, const CharVocab& vocab);

// Positions inside assistant turns, excluding the role marker itself.
std::vector<bool> assistant_mask(const TokenSequence& seq, const CharVocab& vocab);

// labels[i] = ids[i] where supervised, kIgnoreIndex elsewhere.
TokenSequence build_labels(const TokenSequence& seq, const std::vector<bool>& supervise);

}  // namespace numlm::text
