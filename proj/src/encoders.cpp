#include "numlm/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "numlm/errors.hpp"

namespace numlm::enc {

namespace {

void require_finite(double x, const char* who) {
  if (!std::isfinite(x)) throw InputError(std::string(who) + ": non-finite input");
}

}  // namespace

std::string_view encoding_name(Encoding e) {
  switch (e) {
    case Encoding::drivecode:
      return "drivecode";
    case Encoding::xval:
      return "xval";
    case Encoding::digits:
      return "digits";
  }
  return "digits";
}

Encoding parse_encoding(std::string_view name) {
  if (name == "drivecode") return Encoding::drivecode;
  if (name == "xval") return Encoding::xval;
  if (name == "digits") return Encoding::digits;
  throw ConfigError("unknown encoding '" + std::string(name) + "' (expected drivecode|xval|digits)");
}

Normalizer Normalizer::fit(std::span<const double> values) {
  Normalizer n;
  if (values.empty()) return n;
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  var /= static_cast<double>(values.size());
  n.offset = mu;
  n.scale = var > 1e-12 ? std::sqrt(var) : 1.0;
  return n;
}

ad::Tensor project_number(const NumberProjector& p, double x) {
  require_finite(x, "project_number");
  const auto z = ad::Tensor::from({1, 1}, {p.norm.apply(x)});
  auto hidden = ad::gelu(ad::add_bias(ad::matmul(z, p.w1), p.b1));
  return ad::add_bias(ad::matmul(hidden, p.w2), p.b2);
}

ad::Tensor xval_embed(const XValEncoder& e, double x) {
  require_finite(x, "xval_embed");
  const double z = std::clamp(e.norm.apply(x), -e.clamp, e.clamp);
  return ad::scale(ad::reshape(e.num_embedding, {1, e.num_embedding.numel()}), z);
}

std::string DigitCodec::format(double x) const {
  require_finite(x, "digit_encode");
  if (std::abs(x) >= 1e9) throw InputError("digit_encode: |x| must be below 1e9");
  return text::format_fixed(x, decimals);
}

std::vector<int> DigitCodec::encode(double x, const text::CharVocab& vocab) const {
  std::vector<int> ids;
  for (char c : format(x)) ids.push_back(vocab.id_of(c));
  return ids;
}

double DigitCodec::decode(std::span<const int> ids, const text::CharVocab& vocab) const {
  std::string s;
  for (int id : ids) {
    const auto piece = vocab.piece(id);
    if (piece.size() != 1) throw ParseError("digit_decode: non-character token " + std::to_string(id));
    s += piece;
  }
  return parse(s);
}

double DigitCodec::parse(std::string_view s) const {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  const auto int_start = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  bool ok = i > int_start;
  if (ok && i < s.size() && s[i] == '.') {
    const auto frac_start = ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    ok = i > frac_start;
  }
  if (!ok || i != s.size()) throw ParseError("digit_decode: malformed number '" + std::string(s) + "'");
  return std::strtod(std::string(s).c_str(), nullptr);
}

ad::Tensor DigitTextEncoder::embed(double) const {
  throw ContractError("digit encoding has no numeric placeholders to embed");
}

}  // namespace numlm::enc
