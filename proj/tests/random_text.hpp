#pragma once

#include <random>
#include <string>
#include <vector>

#include "numlm/numtext.hpp"

namespace oracle {

// Random prose mixing numbers (plain, negative, decimal), identifiers with
// digits, malformed literals, keywords and sentence punctuation.
inline std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> words{"speed", "the",     "car",    "yaw",   "rate",     "video length",
                                              "frames", "waypoint", "camera", "view",  "steps ahead", "m/s",
                                              "x1",     "v2x",      "A4",     "ok",    "(",        ")",
                                              ",",      ".",        "?",      ";",     "\n",       "-",
                                              "km",     "e.g.",     "10.",    "1.2.3", "frame rate", "camera views"};
  std::uniform_int_distribution<int> len(0, 25), pick(0, static_cast<int>(words.size()) - 1), kind(0, 9);
  std::uniform_int_distribution<int> digits(1, 5), dec(0, 3);
  std::uniform_int_distribution<int> dig(0, 9);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (!s.empty() && kind(rng) < 8) s += ' ';
    if (kind(rng) < 4) {
      if (kind(rng) < 3) s += '-';
      const int nd = digits(rng);
      for (int d = 0; d < nd; ++d) s += static_cast<char>('0' + dig(rng));
      const int nf = dec(rng);
      if (nf > 0) {
        s += '.';
        for (int d = 0; d < nf; ++d) s += static_cast<char>('0' + dig(rng));
      }
    } else {
      s += words[static_cast<std::size_t>(pick(rng))];
    }
  }
  return s;
}

inline std::vector<numlm::text::Turn> random_dialogue(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> turns(1, 4), role(0, 2);
  std::vector<numlm::text::Turn> out;
  const int n = turns(rng);
  for (int i = 0; i < n; ++i) {
    out.push_back({static_cast<numlm::text::Role>(role(rng)), random_text(rng)});
  }
  return out;
}

}  // namespace oracle
