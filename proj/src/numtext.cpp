#include "numlm/numtext.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace numlm::text {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return is_digit(c) || is_alpha(c) || c == '_'; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) { return lower(a) == lower(b); });
  return it != haystack.end();
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (prefix.empty() || prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (lower(s[i]) != lower(prefix[i])) return false;
  return true;
}

// Start of the sentence that contains `pos`.
std::size_t sentence_start(std::string_view text, std::size_t pos) {
  for (std::size_t i = pos; i > 0; --i) {
    const char c = text[i - 1];
    if (c == '\n') return i;
    if ((c == ' ' || c == '\t') && i >= 2) {
      const char p = text[i - 2];
      if (p == '.' || p == '?' || p == '!' || p == ';') return i;
    }
  }
  return 0;
}

bool excluded(std::string_view text, std::size_t turn, std::size_t start, std::size_t end,
              const ConversionPolicy& policy) {
  const auto context = text.substr(sentence_start(text, start), start - sentence_start(text, start));
  for (const auto& kw : policy.prefix_keywords)
    if (contains_ci(context, kw)) return true;
  std::size_t after = end;
  while (after < text.size() && text[after] == ' ') ++after;
  for (const auto& kw : policy.suffix_keywords)
    if (starts_with_ci(text.substr(after), kw)) return true;
  for (const auto& r : policy.excluded_ranges)
    if (r.turn == turn && r.first <= start && end <= r.last) return true;
  return false;
}

// Advance past a run of word characters and dots.
std::size_t skip_run(std::string_view text, std::size_t i) {
  while (i < text.size() && (is_word(text[i]) || text[i] == '.')) ++i;
  return i;
}

void encode_turn(std::string_view text, std::size_t turn, const ConversionPolicy& policy, EncodedDialogue& out,
                 std::string& tmpl) {
  if (auto at = text.find(kNumberPlaceholder); at != std::string_view::npos) {
    throw PlaceholderCollision(Diagnostic{Diagnostic::Kind::placeholder_collision, turn, at,
                                          "input already contains the number placeholder"});
  }
  tmpl.clear();
  std::size_t copied = 0;
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const char c = text[i];
    const bool neg = c == '-' && i + 1 < n && is_digit(text[i + 1]);
    if (!is_digit(c) && !neg) {
      ++i;
      continue;
    }
    const char prev = i > 0 ? text[i - 1] : ' ';
    if (is_word(prev) || prev == '.') {
      i = skip_run(text, i + 1);
      continue;
    }
    std::size_t j = i + (neg ? 1 : 0);
    while (j < n && is_digit(text[j])) ++j;
    if (j < n && text[j] == '.') {
      if (j + 1 < n && is_digit(text[j + 1])) {
        j += 1;
        while (j < n && is_digit(text[j])) ++j;
        if (j < n && text[j] == '.' && j + 1 < n && is_digit(text[j + 1])) {
          const auto stop = skip_run(text, j);
          out.diagnostics.push_back({Diagnostic::Kind::malformed_literal, turn, i,
                                     "malformed literal '" + std::string(text.substr(i, stop - i)) + "'"});
          i = stop;
          continue;
        }
      } else {
        out.diagnostics.push_back({Diagnostic::Kind::malformed_literal, turn, i,
                                   "malformed literal '" + std::string(text.substr(i, j + 1 - i)) + "'"});
        i = j + 1;
        continue;
      }
    }
    if (j < n && (is_alpha(text[j]) || text[j] == '_')) {
      i = skip_run(text, j);
      continue;
    }

    if (!excluded(text, turn, i, j, policy)) {
      NumberSpan span;
      span.turn = turn;
      span.start = i;
      span.end = j;
      span.original_literal = std::string(text.substr(i, j - i));
      span.value = std::strtod(span.original_literal.c_str(), nullptr);
      tmpl.append(text.substr(copied, i - copied));
      tmpl.append(kNumberPlaceholder);
      copied = j;
      out.numbers.push_back(span.value);
      out.spans.push_back(std::move(span));
    }
    i = j;
  }
  tmpl.append(text.substr(copied));
}

std::size_t count_placeholders(std::string_view s) {
  std::size_t count = 0;
  for (auto at = s.find(kNumberPlaceholder); at != std::string_view::npos;
       at = s.find(kNumberPlaceholder, at + kNumberPlaceholder.size()))
    ++count;
  return count;
}

}  // namespace

PlaceholderCollision::PlaceholderCollision(Diagnostic diag)
    : AlignmentError("turn " + std::to_string(diag.turn) + " offset " + std::to_string(diag.offset) + ": " +
                     diag.detail),
      diag_(std::move(diag)) {}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw InputError("unknown role '" + std::string(name) + "'");
}

std::size_t EncodedDialogue::placeholder_count() const {
  std::size_t n = 0;
  for (const auto& t : turns) n += count_placeholders(t.tmpl);
  return n;
}

std::vector<Role> EncodedDialogue::role_tags() const {
  std::vector<Role> tags;
  for (const auto& t : turns) tags.push_back(t.role);
  return tags;
}

ConversionPolicy policy_by_id(std::string_view id) {
  ConversionPolicy p;
  p.id = std::string(id);
  if (id == "none") return p;
  if (id == "drive-v1") {
    p.prefix_keywords = {"video length", "frame rate", "camera views"};
    p.suffix_keywords = {"waypoint", "camera", "view", "frames", "steps ahead"};
    return p;
  }
  throw InputError("unknown numbers_policy_id '" + std::string(id) + "'");
}

EncodedDialogue extract_numbers(std::string_view text, const ConversionPolicy& policy) {
  const Turn turn{Role::user, std::string(text)};
  return extract_dialogue(std::span<const Turn>(&turn, 1), policy);
}

EncodedDialogue extract_dialogue(std::span<const Turn> turns, const ConversionPolicy& policy) {
  EncodedDialogue out;
  out.turns.reserve(turns.size());
  for (std::size_t t = 0; t < turns.size(); ++t) {
    EncodedTurn et;
    et.role = turns[t].role;
    encode_turn(turns[t].text, t, policy, out, et.tmpl);
    out.turns.push_back(std::move(et));
  }
  return out;
}

std::string format_fixed(double value, int decimals) {
  if (decimals < 0 || decimals > 9) throw InputError("format_fixed: decimals must be in [0, 9]");
  if (!std::isfinite(value)) throw InputError("format_fixed: non-finite value");
  const double scaled = std::round(value * std::pow(10.0, decimals));
  if (std::abs(scaled) >= 9.0e18) throw InputError("format_fixed: value out of range");
  const long long units = std::llround(scaled);
  std::string digits = std::to_string(units < 0 ? -units : units);
  if (digits.size() < static_cast<std::size_t>(decimals) + 1) {
    digits.insert(0, static_cast<std::size_t>(decimals) + 1 - digits.size(), '0');
  }
  std::string out = units < 0 ? "-" : "";
  out += digits.substr(0, digits.size() - static_cast<std::size_t>(decimals));
  if (decimals > 0) {
    out += '.';
    out += digits.substr(digits.size() - static_cast<std::size_t>(decimals));
  }
  return out;
}

std::vector<Turn> restore_numbers(const EncodedDialogue& dialogue, const FormatPolicy& format) {
  const auto placeholders = dialogue.placeholder_count();
  if (placeholders != dialogue.numbers.size()) {
    throw AlignmentError("dialogue has " + std::to_string(placeholders) + " placeholders but " +
                         std::to_string(dialogue.numbers.size()) + " numbers");
  }
  if (format.mode == FormatPolicy::Mode::literal && dialogue.spans.size() != dialogue.numbers.size()) {
    throw AlignmentError("literal restore needs one source span per number");
  }
  std::vector<Turn> out;
  std::size_t k = 0;
  for (const auto& turn : dialogue.turns) {
    Turn restored{turn.role, {}};
    std::string_view tmpl = turn.tmpl;
    std::size_t from = 0;
    for (auto at = tmpl.find(kNumberPlaceholder); at != std::string_view::npos;
         at = tmpl.find(kNumberPlaceholder, from)) {
      restored.text.append(tmpl.substr(from, at - from));
      restored.text += format.mode == FormatPolicy::Mode::literal ? dialogue.spans[k].original_literal
                                                                  : format_fixed(dialogue.numbers[k], format.decimals);
      ++k;
      from = at + kNumberPlaceholder.size();
    }
    restored.text.append(tmpl.substr(from));
    out.push_back(std::move(restored));
  }
  return out;
}

std::string restore_text(const EncodedDialogue& dialogue, const FormatPolicy& format) {
  auto turns = restore_numbers(dialogue, format);
  std::string out;
  for (auto& t : turns) out += t.text;
  return out;
}

EncodedDialogue render_roles_as_text(const EncodedDialogue& dialogue, std::span<const Role> roles, int decimals) {
  const auto placeholders = dialogue.placeholder_count();
  if (placeholders != dialogue.numbers.size()) {
    throw AlignmentError("dialogue has " + std::to_string(placeholders) + " placeholders but " +
                         std::to_string(dialogue.numbers.size()) + " numbers");
  }
  const bool has_spans = dialogue.spans.size() == dialogue.numbers.size();
  EncodedDialogue out;
  out.diagnostics = dialogue.diagnostics;
  std::size_t k = 0;
  for (const auto& turn : dialogue.turns) {
    const bool render = std::find(roles.begin(), roles.end(), turn.role) != roles.end();
    EncodedTurn et{turn.role, {}};
    std::string_view tmpl = turn.tmpl;
    std::size_t from = 0;
    for (auto at = tmpl.find(kNumberPlaceholder); at != std::string_view::npos;
         at = tmpl.find(kNumberPlaceholder, from)) {
      et.tmpl.append(tmpl.substr(from, at - from));
      if (render) {
        et.tmpl += format_fixed(dialogue.numbers[k], decimals);
      } else {
        et.tmpl += kNumberPlaceholder;
        out.numbers.push_back(dialogue.numbers[k]);
        if (has_spans) out.spans.push_back(dialogue.spans[k]);
      }
      ++k;
      from = at + kNumberPlaceholder.size();
    }
    et.tmpl.append(tmpl.substr(from));
    out.turns.push_back(std::move(et));
  }
  return out;
}

int CharVocab::id_of(char c) const {
  if (c == '\n') return kNewline;
  const auto u = static_cast<unsigned char>(c);
  if (u >= 32 && u <= 126) return kFirstPrintable + (u - 32);
  return kUnk;
}

bool CharVocab::covers(char c) const { return id_of(c) != kUnk; }

std::string CharVocab::piece(int id) const {
  switch (id) {
    case kPad:
      return "<pad>";
    case kUnk:
      return "<unk>";
    case kBos:
      return "<bos>";
    case kEos:
      return "<eos>";
    case kSystem:
      return "<|system|>";
    case kUser:
      return "<|user|>";
    case kAssistant:
      return "<|assistant|>";
    case kNumber:
      return std::string(kNumberPlaceholder);
    case kNewline:
      return "\n";
    default:
      break;
  }
  if (id >= kFirstPrintable && id < size()) return std::string(1, static_cast<char>(32 + id - kFirstPrintable));
  if (id == kNumberTokenIndex) return std::string(kNumberPlaceholder);
  if (id == kImageTokenIndex) return std::string(kImagePlaceholder);
  return "<unk>";
}

int CharVocab::role_marker(Role role) const {
  switch (role) {
    case Role::system:
      return kSystem;
    case Role::user:
      return kUser;
    case Role::assistant:
      return kAssistant;
  }
  return kUser;
}

TokenSequence tokenize(const EncodedDialogue& dialogue, const CharVocab& vocab) {
  TokenSequence seq;
  auto push = [&](int id, Role role) {
    if (id == kNumberTokenIndex) seq.numeric_positions.push_back(seq.ids.size());
    if (id == kImageTokenIndex) seq.obs_positions.push_back(seq.ids.size());
    seq.ids.push_back(id);
    seq.roles.push_back(role);
  };
  push(CharVocab::kBos, Role::system);
  for (const auto& turn : dialogue.turns) {
    push(vocab.role_marker(turn.role), turn.role);
    std::string_view t = turn.tmpl;
    std::size_t i = 0;
    while (i < t.size()) {
      if (t[i] == '<') {
        if (t.substr(i).starts_with(kNumberPlaceholder)) {
          push(kNumberTokenIndex, turn.role);
          i += kNumberPlaceholder.size();
          continue;
        }
        if (t.substr(i).starts_with(kImagePlaceholder)) {
          push(kImageTokenIndex, turn.role);
          i += kImagePlaceholder.size();
          continue;
        }
      }
      const int id = vocab.id_of(t[i]);
      if (id == CharVocab::kUnk) ++seq.unknown_chars;
      push(id, turn.role);
      ++i;
    }
    if (turn.role == Role::assistant) push(CharVocab::kEos, turn.role);
  }
  seq.labels.assign(seq.ids.size(), kIgnoreIndex);
  return seq;
}

std::vector<bool> assistant_mask(const TokenSequence& seq, const CharVocab& vocab) {
  std::vector<bool> mask(seq.size(), false);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    mask[i] = seq.roles[i] == Role::assistant && !vocab.is_role_marker(seq.ids[i]);
  }
  return mask;
}

TokenSequence build_labels(const TokenSequence& seq, const std::vector<bool>& supervise) {
  if (supervise.size() != seq.size()) {
    throw ContractError("build_labels: mask of length " + std::to_string(supervise.size()) + " for sequence of " +
                        std::to_string(seq.size()));
  }
  TokenSequence out = seq;
  for (std::size_t i = 0; i < seq.size(); ++i) out.labels[i] = supervise[i] ? seq.ids[i] : kIgnoreIndex;
  return out;
}

}  // namespace numlm::text
