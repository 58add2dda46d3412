#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "../oracle.hpp"
#include "numlm/encoders.hpp"
#include "numlm/errors.hpp"

using namespace numlm;
using ad::Tensor;

namespace {

enc::NumberProjector random_projector(std::uint64_t seed, std::size_t d) {
  std::mt19937_64 rng(seed);
  enc::NumberProjector p;
  p.w1 = oracle::random_tensor(rng, 1, d, 0.5);
  p.b1 = ad::reshape(oracle::random_tensor(rng, 1, d, 0.5), {d});
  p.w2 = oracle::random_tensor(rng, d, d, 0.5);
  p.b2 = ad::reshape(oracle::random_tensor(rng, 1, d, 0.5), {d});
  p.norm = {3.0, 2.0};
  return p;
}

}  // namespace

TEST(Normalizer, FitIsZScore) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto n = enc::Normalizer::fit(v);
  EXPECT_DOUBLE_EQ(n.offset, 2.5);
  EXPECT_DOUBLE_EQ(n.scale, std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(n.invert(n.apply(7.25)), 7.25);
  const std::vector<double> flat{5.0, 5.0};
  EXPECT_EQ(enc::Normalizer::fit(flat).scale, 1.0);
}

TEST(Projector, MatchesHandComposedAlgebra) {
  const std::size_t d = 8;
  const auto p = random_projector(1, d);
  const double x = 10.5;
  const double z = (x - 3.0) / 2.0;
  std::vector<double> hidden(d);
  for (std::size_t j = 0; j < d; ++j) hidden[j] = oracle::gelu(z * p.w1.at(j) + p.b1.at(j));
  const auto out = enc::project_number(p, x);
  ASSERT_EQ(out.rows(), 1u);
  ASSERT_EQ(out.cols(), d);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = p.b2.at(j);
    for (std::size_t i = 0; i < d; ++i) acc += hidden[i] * p.w2.at(i, j);
    EXPECT_NEAR(out.at(j), acc, 1e-12);
  }
}

TEST(Projector, ZeroBiasesAtNormalizedZeroGiveZero) {
  auto p = random_projector(2, 6);
  for (auto& v : p.b1.mutable_data()) v = 0.0;
  for (auto& v : p.b2.mutable_data()) v = 0.0;
  const auto out = enc::project_number(p, 3.0);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Projector, RejectsNonFinite) {
  const auto p = random_projector(3, 4);
  EXPECT_THROW(enc::project_number(p, std::numeric_limits<double>::infinity()), InputError);
  EXPECT_THROW(enc::project_number(p, std::nan("")), InputError);
}

TEST(Projector, GradientWrtInputMatchesFiniteDifferences) {
  const auto p = random_projector(4, 6);
  std::mt19937_64 rng(5);
  const auto w = oracle::random_tensor(rng, 1, 6, 1.0, false);
  auto f = [&](double x) { return ad::sum(ad::mul(enc::project_number(p, x), w)).item(); };
  for (double x : {-4.0, 0.3, 3.0, 12.0}) {
    // d/dx through the normalizer: chain rule by hand on the hidden layer.
    const double z = (x - 3.0) / 2.0;
    double analytic = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      const double a = z * p.w1.at(i) + p.b1.at(i);
      const double dgelu = 0.5 * (1.0 + std::erf(a / std::sqrt(2.0))) + a * std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
      double dout = 0.0;
      for (std::size_t j = 0; j < 6; ++j) dout += p.w2.at(i, j) * w.at(j);
      analytic += dout * dgelu * p.w1.at(i) / 2.0;
    }
    const double h = 1e-4;
    const double fd = (f(x + h) - f(x - h)) / (2.0 * h);
    EXPECT_LT(std::abs(analytic - fd) / std::max(1.0, std::abs(fd)), 1e-3);
  }
}

TEST(XVal, ScalesTheNumberEmbedding) {
  std::mt19937_64 rng(6);
  enc::XValEncoder e;
  e.num_embedding = oracle::random_tensor(rng, 1, 8);
  e.norm = {1.0, 4.0};
  const auto zero = enc::xval_embed(e, 1.0);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  const auto one = enc::xval_embed(e, 5.0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(one.at(i), e.num_embedding.at(i));
  const auto big = enc::xval_embed(e, 1e6);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(big.at(i), 5.0 * e.num_embedding.at(i));
  EXPECT_THROW(enc::xval_embed(e, std::nan("")), InputError);
}

TEST(XVal, CollinearWithNumberEmbedding) {
  std::mt19937_64 rng(7);
  enc::XValEncoder e;
  e.num_embedding = oracle::random_tensor(rng, 1, 16);
  e.norm = {0.5, 3.0};
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  double nn = 0.0;
  for (double v : e.num_embedding.data()) nn += v * v;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    if (x == 0.5) continue;
    const auto y = enc::xval_embed(e, x);
    double dot = 0.0, yy = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      dot += y.at(j) * e.num_embedding.at(j);
      yy += y.at(j) * y.at(j);
    }
    EXPECT_NEAR(std::abs(dot / std::sqrt(yy * nn)), 1.0, 1e-12);
  }
}

TEST(DigitCodec, Examples) {
  const enc::DigitCodec c;
  const text::CharVocab v;
  EXPECT_EQ(c.format(10.5), "10.50");
  EXPECT_EQ(c.encode(10.5, v).size(), 5u);
  EXPECT_EQ(c.decode(c.encode(10.5, v), v), 10.5);
  EXPECT_EQ(c.format(-3.256), "-3.26");
  EXPECT_EQ(c.decode(c.encode(-3.256, v), v), -3.26);
  EXPECT_EQ(c.format(0.0), "0.00");
  EXPECT_EQ(c.decode(c.encode(0.0, v), v), 0.0);
  EXPECT_THROW(c.format(1e9), InputError);
}

TEST(DigitCodec, MalformedStringsAreParseErrors) {
  const enc::DigitCodec c;
  for (const char* s : {"", "-", "1.", ".5", "1.2.3", "1e5", "--1", "1 "}) EXPECT_THROW(c.parse(s), ParseError) << s;
  const text::CharVocab v;
  const std::vector<int> ids{v.id_of('1'), text::CharVocab::kEos};
  EXPECT_THROW(c.decode(ids, v), ParseError);
}

TEST(DigitCodec, RoundTripProperty) {
  const enc::DigitCodec c;
  const text::CharVocab v;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> wide(-1e8, 1e8), narrow(-20.0, 20.0);
  for (int i = 0; i < 100000; ++i) {
    const double x = i % 2 ? wide(rng) : narrow(rng);
    const auto ids = c.encode(x, v);
    const double expected = std::round(x * 100.0) / 100.0;
    ASSERT_EQ(c.decode(ids, v), expected) << x;
    ASSERT_EQ(ids.size(), c.format(x).size());
  }
}

TEST(NumberEncoders, StrategiesDispatch) {
  const auto p = random_projector(9, 4);
  const enc::ProjectorEncoder pe(p);
  EXPECT_EQ(pe.kind(), enc::Encoding::drivecode);
  EXPECT_EQ(oracle::values(pe.embed(2.0)), oracle::values(enc::project_number(p, 2.0)));
  const enc::DigitTextEncoder de;
  EXPECT_ANY_THROW(de.embed(1.0));
  EXPECT_EQ(enc::parse_encoding("xval"), enc::Encoding::xval);
  EXPECT_THROW(enc::parse_encoding("bits"), ConfigError);
}
