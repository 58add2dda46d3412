#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "../oracle.hpp"
#include "numlm/errors.hpp"
#include "numlm/seqmodel.hpp"

using namespace numlm;
using ad::Tensor;
using text::CharVocab;

namespace {

model::ModelConfig small(std::size_t layers = 2, std::size_t heads = 2) {
  model::ModelConfig c;
  c.d = 16;
  c.n_layers = layers;
  c.n_heads = heads;
  c.max_seq_len = 32;
  return c;
}

// [bos] [user] N x N [image] [assistant] N
text::TokenSequence mixed_sequence() {
  const CharVocab v;
  text::TokenSequence s;
  s.ids = {CharVocab::kBos, CharVocab::kUser, text::kNumberTokenIndex, v.id_of('x'),
           text::kNumberTokenIndex, text::kImageTokenIndex, CharVocab::kAssistant, text::kNumberTokenIndex};
  s.labels.assign(s.ids.size(), text::kIgnoreIndex);
  s.roles.assign(s.ids.size(), text::Role::user);
  s.numeric_positions = {2, 4, 7};
  s.obs_positions = {5};
  return s;
}

// Perturb every parameter away from its init so biases and LN params matter.
void jitter(model::Model& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& [name, t] : m.params().entries())
    for (auto& v : t.mutable_data()) v += n(rng);
}

std::vector<double> row(const Tensor& t, std::size_t r) { return t.row_values(r); }

}  // namespace

TEST(Config, Validation) {
  auto c = small();
  c.n_heads = 3;
  EXPECT_THROW(model::Model(c, enc::Encoding::drivecode, true, 1), ConfigError);
}

TEST(Assemble, RowsComeFromTheRightSource) {
  model::Model m(small(), enc::Encoding::drivecode, true, 1);
  jitter(m, 2);
  m.set_normalizer({4.0, 3.0});
  const auto seq = mixed_sequence();
  const std::vector<double> nums{1.5, -2.0, 9.0};
  const std::vector<std::vector<double>> obs{{0.1, 0.2, 0.3, 0.4}};
  const auto in = m.assemble_input(seq, nums, obs);
  ASSERT_EQ(in.length(), seq.size());
  const auto p = m.projector();
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(row(in.embeddings, seq.numeric_positions[k]), oracle::values(enc::project_number(p, nums[k])));
  }
  std::vector<double> o(16);
  const auto& w = m.params().get("obs_proj.w");
  const auto& b = m.params().get("obs_proj.b");
  for (std::size_t j = 0; j < 16; ++j) {
    o[j] = b.at(j);
    for (std::size_t i = 0; i < 4; ++i) o[j] += obs[0][i] * w.at(i, j);
    EXPECT_NEAR(in.embeddings.at(5, j), o[j], 1e-12);
  }
  const auto& table = m.params().get("tok_emb");
  for (std::size_t i : {0u, 1u, 3u, 6u}) EXPECT_EQ(row(in.embeddings, i), table.row_values(seq.ids[i]));
}

TEST(Assemble, XValRowsAreScaledNumberEmbedding) {
  model::Model m(small(), enc::Encoding::xval, true, 3);
  m.set_normalizer({1.0, 2.0});
  const auto in = m.assemble_input(mixed_sequence(), std::vector<double>{3.0, 1.0, 2.0},
                                   std::vector<std::vector<double>>{{0, 0, 0, 0}});
  const auto e = m.params().get("tok_emb").row_values(CharVocab::kNumber);
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_EQ(in.embeddings.at(2, j), e[j]);
    EXPECT_EQ(in.embeddings.at(4, j), 0.0);
    EXPECT_EQ(in.embeddings.at(7, j), 0.5 * e[j]);
  }
}

TEST(Assemble, SwappingNumbersChangesOnlyTheirRows) {
  model::Model m(small(), enc::Encoding::drivecode, true, 4);
  jitter(m, 5);
  const auto seq = mixed_sequence();
  const std::vector<std::vector<double>> obs{{1, 2, 3, 4}};
  const auto a = m.assemble_input(seq, std::vector<double>{1.0, 2.0, 3.0}, obs);
  const auto b = m.assemble_input(seq, std::vector<double>{2.0, 1.0, 3.0}, obs);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i == 2 || i == 4) {
      EXPECT_NE(row(a.embeddings, i), row(b.embeddings, i));
    } else {
      EXPECT_EQ(row(a.embeddings, i), row(b.embeddings, i));
    }
  }
  EXPECT_EQ(row(a.embeddings, 2), row(b.embeddings, 4));
}

TEST(Assemble, CountMismatchIsAnAlignmentError) {
  model::Model m(small(), enc::Encoding::drivecode, true, 6);
  const auto seq = mixed_sequence();
  const std::vector<std::vector<double>> obs{{1, 2, 3, 4}};
  EXPECT_THROW(m.assemble_input(seq, std::vector<double>{1.0, 2.0}, obs), AlignmentError);
  EXPECT_THROW(m.assemble_input(seq, std::vector<double>{1.0, 2.0, 3.0}, {}), AlignmentError);
}

TEST(Forward, ShapeCausalityAndLength) {
  model::Model m(small(), enc::Encoding::drivecode, true, 7);
  jitter(m, 8);
  std::mt19937_64 rng(9);
  auto x = oracle::random_tensor(rng, 10, 16, 1.0, false);
  const auto h = m.forward(x);
  ASSERT_EQ(h.rows(), 10u);
  ASSERT_EQ(h.cols(), 16u);
  x.mutable_data()[9 * 16 + 3] += 1.0;
  const auto h2 = m.forward(x);
  for (std::size_t i = 0; i < 9 * 16; ++i) ASSERT_EQ(h.at(i), h2.at(i));
  EXPECT_NE(h.at(9 * 16), h2.at(9 * 16));
  auto too_long = oracle::random_tensor(rng, 33, 16, 1.0, false);
  EXPECT_THROW(m.forward(too_long), LengthError);
}

TEST(Forward, SingleLayerSingleHeadMatchesHandRolled) {
  model::Model m(small(1, 1), enc::Encoding::drivecode, true, 10);
  jitter(m, 11);
  std::mt19937_64 rng(12);
  const auto x = oracle::random_tensor(rng, 3, 16, 1.0, false);
  const auto h = m.forward(x);
  const auto& P = m.params();
  const std::size_t d = 16;
  auto vec = [&](const char* n) { return P.get(n).row_values(0).size() == d ? oracle::values(P.get(n)) : oracle::values(P.get(n)); };
  auto lin = [&](const std::vector<double>& in, const std::string& prefix, std::size_t out) {
    const auto& w = P.get(prefix + ".w");
    const auto& b = P.get(prefix + ".b");
    std::vector<double> y(out);
    for (std::size_t j = 0; j < out; ++j) {
      y[j] = b.at(j);
      for (std::size_t i = 0; i < in.size(); ++i) y[j] += in[i] * w.at(i, j);
    }
    return y;
  };
  const double ps = m.config().position_scale;
  std::vector<std::vector<double>> h0(3, std::vector<double>(d));
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < d; i += 2) {
      const double f = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      h0[p][i] = x.at(p, i) + ps * std::sin(static_cast<double>(p) * f);
      h0[p][i + 1] = x.at(p, i + 1) + ps * std::cos(static_cast<double>(p) * f);
    }
  std::vector<std::vector<double>> q(3), k(3), v(3);
  for (std::size_t p = 0; p < 3; ++p) {
    const auto a = oracle::layer_norm(h0[p], vec("blocks.0.ln1.gamma"), vec("blocks.0.ln1.beta"));
    q[p] = lin(a, "blocks.0.attn.q", d);
    k[p] = lin(a, "blocks.0.attn.k", d);
    v[p] = lin(a, "blocks.0.attn.v", d);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> s(i + 1);
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      s[j] = std::exp(dot / 4.0);
      z += s[j];
    }
    std::vector<double> att(d, 0.0);
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t c = 0; c < d; ++c) att[c] += s[j] / z * v[j][c];
    auto h1 = lin(att, "blocks.0.attn.o", d);
    for (std::size_t c = 0; c < d; ++c) h1[c] += h0[i][c];
    auto mm = lin(oracle::layer_norm(h1, vec("blocks.0.ln2.gamma"), vec("blocks.0.ln2.beta")), "blocks.0.mlp.fc", 4 * d);
    for (auto& e : mm) e = oracle::gelu(e);
    auto ff = lin(mm, "blocks.0.mlp.proj", d);
    for (std::size_t c = 0; c < d; ++c) h1[c] += ff[c];
    const auto out = oracle::layer_norm(h1, vec("ln_f.gamma"), vec("ln_f.beta"));
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(h.at(i, c), out[c], 1e-10);
  }
}

TEST(Heads, LmLogitsAndNumberHeadMatchDenseAlgebra) {
  model::Model m(small(), enc::Encoding::drivecode, true, 13);
  jitter(m, 14);
  m.set_normalizer({2.0, 5.0});
  std::mt19937_64 rng(15);
  const auto h = oracle::random_tensor(rng, 1, 16, 1.0, false);
  const auto logits = m.lm_logits(h.data());
  ASSERT_EQ(logits.size(), 104u);
  const auto& w = m.params().get("lm_head.w");
  const auto& b = m.params().get("lm_head.b");
  for (std::size_t j = 0; j < 104; ++j) {
    double acc = b.at(j);
    for (std::size_t i = 0; i < 16; ++i) acc += h.at(i) * w.at(i, j);
    EXPECT_NEAR(logits[j], acc, 1e-12);
  }
  const auto head = m.number_head();
  std::vector<double> a(8);
  for (std::size_t j = 0; j < 8; ++j) {
    a[j] = head.b1.at(j);
    for (std::size_t i = 0; i < 16; ++i) a[j] += h.at(i) * head.w1.at(i, j);
  }
  a = oracle::layer_norm(a, oracle::values(head.ln_gamma), oracle::values(head.ln_beta));
  double y = head.b2.at(0);
  for (std::size_t j = 0; j < 8; ++j) y += oracle::gelu(a[j]) * head.w2.at(j);
  EXPECT_NEAR(model::regress_number(head, h.data()), y * 5.0 + 2.0, 1e-10);
}

TEST(Heads, ZeroHiddenAtInitGivesFinalBias) {
  model::Model m(small(), enc::Encoding::drivecode, true, 16);
  const std::vector<double> zero(16, 0.0);
  EXPECT_EQ(model::regress_number(m.number_head(), zero), 0.0);
}

TEST(Checkpoint, SaveLoadReproducesModel) {
  model::Model m(small(), enc::Encoding::xval, true, 17);
  jitter(m, 18);
  m.set_normalizer({0.1, 3.0 / 7.0});
  const auto path = std::filesystem::temp_directory_path() / "numlm_model_test.ckpt";
  const auto id = m.save(path, {{"note", "x"}});
  ckpt::Metadata meta;
  const auto back = model::Model::load(path, &meta);
  EXPECT_EQ(meta.at("note"), "x");
  EXPECT_EQ(back.normalizer().offset, 0.1);
  EXPECT_EQ(back.normalizer().scale, 3.0 / 7.0);
  EXPECT_EQ(back.number_encoding(), enc::Encoding::xval);
  EXPECT_EQ(back.save(path), id);
  std::mt19937_64 rng(19);
  const auto x = oracle::random_tensor(rng, 5, 16, 1.0, false);
  EXPECT_EQ(oracle::values(m.forward(x)), oracle::values(back.forward(x)));
  std::filesystem::remove(path);
}
