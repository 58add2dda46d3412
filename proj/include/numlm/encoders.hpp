#pragma once

// Numeric encoding strategies: the number projector (continuous embedding
// through a two-layer GELU MLP), xVal (one shared embedding scaled by the
// value) and plain digit text.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "numlm/gradcore.hpp"
#include "numlm/numtext.hpp"

namespace numlm::enc {

enum class Encoding { drivecode, xval, digits };

std::string_view encoding_name(Encoding e);
Encoding parse_encoding(std::string_view name);

// z = (x - offset) / scale
struct Normalizer {
  double offset = 0.0;
  double scale = 1.0;

  double apply(double x) const { return (x - offset) / scale; }
  double invert(double z) const { return z * scale + offset; }

  // z-score fit; a degenerate sample keeps unit scale.
  static Normalizer fit(std::span<const double> values);
};

struct NumberProjector {
  ad::Tensor w1;  // [1, d]
  ad::Tensor b1;  // [d]
  ad::Tensor w2;  // [d, d]
  ad::Tensor b2;  // [d]
  Normalizer norm;

  std::size_t dim() const { return w2.cols(); }
};

// w2 . gelu(w1 . normalize(x) + b1) + b2 as a [1, d] tensor.
ad::Tensor project_number(const NumberProjector& p, double x);

struct XValEncoder {
  ad::Tensor num_embedding;  // [1, d], the reserved number token's row
  Normalizer norm;
  double clamp = 5.0;
};

// clamp(normalize(x)) * num_embedding as a [1, d] tensor.
ad::Tensor xval_embed(const XValEncoder& e, double x);

struct DigitCodec {
  int decimals = 2;

  std::string format(double x) const;
  std::vector<int> encode(double x, const text::CharVocab& vocab) const;
  double decode(std::span<const int> ids, const text::CharVocab& vocab) const;
  // Accepts -?digits(.digits)?; anything else is a ParseError.
  double parse(std::string_view s) const;
};

// Common face of the embedding strategies used at placeholder positions.
class NumberEncoder {
 public:
  virtual ~NumberEncoder() = default;
  virtual Encoding kind() const = 0;
  virtual ad::Tensor embed(double x) const = 0;
};

class ProjectorEncoder final : public NumberEncoder {
 public:
  explicit ProjectorEncoder(NumberProjector p) : p_(std::move(p)) {}
  Encoding kind() const override { return Encoding::drivecode; }
  ad::Tensor embed(double x) const override { return project_number(p_, x); }

 private:
  NumberProjector p_;
};

class XValNumberEncoder final : public NumberEncoder {
 public:
  explicit XValNumberEncoder(XValEncoder e) : e_(std::move(e)) {}
  Encoding kind() const override { return Encoding::xval; }
  ad::Tensor embed(double x) const override { return xval_embed(e_, x); }

 private:
  XValEncoder e_;
};

// Numbers stay in the text stream, so there is never a placeholder to embed.
class DigitTextEncoder final : public NumberEncoder {
 public:
  Encoding kind() const override { return Encoding::digits; }
  ad::Tensor embed(double x) const override;
};

}  // namespace numlm::enc
