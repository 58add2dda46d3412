#include "numlm/seqmodel.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>

#include "numlm/errors.hpp"

namespace numlm::model {

namespace {

using ad::ParamStore;
using ad::Tensor;

constexpr double kLayerNormEps = 1e-5;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

std::string block(std::size_t layer, const char* leaf) { return "blocks." + std::to_string(layer) + "." + leaf; }

Tensor sinusoidal_table(std::size_t len, std::size_t d, double amplitude) {
  std::vector<double> table(len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      table[pos * d + i] = amplitude * std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) table[pos * d + i + 1] = amplitude * std::cos(static_cast<double>(pos) * freq);
    }
  }
  return Tensor::from({len, d}, std::move(table));
}

const std::string& meta_at(const ckpt::Metadata& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || n_layers == 0 || n_heads == 0 || vocab_size == 0 || max_seq_len == 0) {
    throw ConfigError("model config extents must be positive");
  }
  if (d % n_heads != 0) throw ConfigError("d must be divisible by n_heads");
  if (d % 2 != 0) throw ConfigError("d must be even (number head halves it)");
  if (!(position_scale >= 0.0) || !std::isfinite(position_scale)) {
    throw ConfigError("position_scale must be finite and non-negative");
  }
}

Tensor regress_normalized(const NumberHead& head, const Tensor& hidden) {
  auto x = ad::add_bias(ad::matmul(hidden, head.w1), head.b1);
  x = ad::gelu(ad::layer_norm(x, head.ln_gamma, head.ln_beta, kLayerNormEps));
  return ad::add_bias(ad::matmul(x, head.w2), head.b2);
}

double regress_number(const NumberHead& head, std::span<const double> h) {
  ad::NoGradGuard guard;
  const auto z = regress_normalized(head, Tensor::row(h)).item();
  return head.norm.invert(z);
}

Model::Model(ModelConfig config, enc::Encoding number_encoding, bool numeric_output, std::uint64_t seed)
    : config_(config), number_encoding_(number_encoding), numeric_output_(numeric_output) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto d = config_.d;
  const auto V = config_.vocab_size;
  using Init = ParamStore::Init;

  params_.add("tok_emb", {V, d}, Init::normal, rng);
  params_.add("obs_proj.w", {config_.obs_dim, d}, Init::normal, rng);
  params_.add("obs_proj.b", {d}, Init::zeros, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    params_.add(block(l, "ln1.gamma"), {d}, Init::ones, rng);
    params_.add(block(l, "ln1.beta"), {d}, Init::zeros, rng);
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      params_.add(block(l, proj) + ".w", {d, d}, Init::normal, rng);
      params_.add(block(l, proj) + ".b", {d}, Init::zeros, rng);
    }
    params_.add(block(l, "ln2.gamma"), {d}, Init::ones, rng);
    params_.add(block(l, "ln2.beta"), {d}, Init::zeros, rng);
    params_.add(block(l, "mlp.fc") + ".w", {d, 4 * d}, Init::normal, rng);
    params_.add(block(l, "mlp.fc") + ".b", {4 * d}, Init::zeros, rng);
    params_.add(block(l, "mlp.proj") + ".w", {4 * d, d}, Init::normal, rng);
    params_.add(block(l, "mlp.proj") + ".b", {d}, Init::zeros, rng);
  }
  params_.add("ln_f.gamma", {d}, Init::ones, rng);
  params_.add("ln_f.beta", {d}, Init::zeros, rng);
  params_.add("lm_head.w", {d, V}, Init::normal, rng);
  params_.add("lm_head.b", {V}, Init::zeros, rng);

  params_.add("num_proj.w1", {1, d}, Init::normal, rng);
  params_.add("num_proj.b1", {d}, Init::zeros, rng);
  params_.add("num_proj.w2", {d, d}, Init::normal, rng);
  params_.add("num_proj.b2", {d}, Init::zeros, rng);

  params_.add("num_head.w1", {d, d / 2}, Init::normal, rng);
  params_.add("num_head.b1", {d / 2}, Init::zeros, rng);
  params_.add("num_head.ln.gamma", {d / 2}, Init::ones, rng);
  params_.add("num_head.ln.beta", {d / 2}, Init::zeros, rng);
  params_.add("num_head.w2", {d / 2, 1}, Init::normal, rng);
  params_.add("num_head.b2", {1}, Init::zeros, rng);

  positions_ = sinusoidal_table(config_.max_seq_len, d, config_.position_scale);
}

enc::NumberProjector Model::projector() const {
  return {params_.get("num_proj.w1"), params_.get("num_proj.b1"), params_.get("num_proj.w2"),
          params_.get("num_proj.b2"), norm_};
}

enc::XValEncoder Model::xval() const {
  return {ad::select_row(params_.get("tok_emb"), text::CharVocab::kNumber), norm_, 5.0};
}

NumberHead Model::number_head() const {
  return {params_.get("num_head.w1"), params_.get("num_head.b1"), params_.get("num_head.ln.gamma"),
          params_.get("num_head.ln.beta"), params_.get("num_head.w2"), params_.get("num_head.b2"), norm_};
}

std::unique_ptr<enc::NumberEncoder> Model::number_encoder() const {
  switch (number_encoding_) {
    case enc::Encoding::drivecode:
      return std::make_unique<enc::ProjectorEncoder>(projector());
    case enc::Encoding::xval:
      return std::make_unique<enc::XValNumberEncoder>(xval());
    case enc::Encoding::digits:
      break;
  }
  return std::make_unique<enc::DigitTextEncoder>();
}

Tensor Model::embed_number(double x) const {
  switch (number_encoding_) {
    case enc::Encoding::drivecode:
      return enc::project_number(projector(), x);
    case enc::Encoding::xval:
      return enc::xval_embed(xval(), x);
    case enc::Encoding::digits:
      break;
  }
  return enc::DigitTextEncoder{}.embed(x);
}

Tensor Model::embed_token(int id) const {
  const int ids[1] = {id};
  return ad::gather_rows(params_.get("tok_emb"), std::span<const int>(ids));
}

Tensor Model::embed_observation(std::span<const double> obs) const {
  if (obs.size() != config_.obs_dim) {
    throw DimensionError("observation of width " + std::to_string(obs.size()) + ", model expects " +
                         std::to_string(config_.obs_dim));
  }
  return ad::add_bias(ad::matmul(Tensor::row(obs), params_.get("obs_proj.w")), params_.get("obs_proj.b"));
}

AssembledInput Model::assemble_input(const text::TokenSequence& seq, std::span<const double> numbers,
                                     std::span<const std::vector<double>> obs) const {
  if (numbers.size() != seq.numeric_positions.size()) {
    throw AlignmentError("sequence has " + std::to_string(seq.numeric_positions.size()) +
                         " number placeholders but " + std::to_string(numbers.size()) + " numbers were supplied");
  }
  if (obs.size() != seq.obs_positions.size()) {
    throw AlignmentError("sequence has " + std::to_string(seq.obs_positions.size()) +
                         " observation placeholders but " + std::to_string(obs.size()) + " observations");
  }
  if (seq.size() == 0) throw LengthError("cannot assemble an empty sequence");

  const auto& table = params_.get("tok_emb");
  std::vector<Tensor> parts;
  std::vector<int> run;
  auto flush = [&] {
    if (run.empty()) return;
    parts.push_back(ad::gather_rows(table, std::span<const int>(run)));
    run.clear();
  };
  std::size_t k = 0, j = 0;
  for (int id : seq.ids) {
    if (id == text::kNumberTokenIndex) {
      flush();
      parts.push_back(embed_number(numbers[k++]));
    } else if (id == text::kImageTokenIndex) {
      flush();
      parts.push_back(embed_observation(obs[j++]));
    } else {
      run.push_back(id);
    }
  }
  flush();

  AssembledInput out;
  out.embeddings = ad::concat_rows(parts);
  out.numeric_positions = seq.numeric_positions;
  out.obs_positions = seq.obs_positions;
  return out;
}

Tensor Model::linear(const Tensor& x, const char* prefix) const {
  const std::string p(prefix);
  return ad::add_bias(ad::matmul(x, params_.get(p + ".w")), params_.get(p + ".b"));
}

Tensor Model::forward(const AssembledInput& input) const { return forward(input.embeddings); }

Tensor Model::forward(const Tensor& embeddings) const {
  const auto len = embeddings.rows();
  if (len > config_.max_seq_len) {
    throw LengthError("sequence of length " + std::to_string(len) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  if (embeddings.cols() != config_.d) throw DimensionError("embedding width does not match model d");

  std::vector<std::size_t> rows(len);
  for (std::size_t i = 0; i < len; ++i) rows[i] = i;
  Tensor h = ad::add(embeddings, ad::gather_rows(positions_, std::span<const std::size_t>(rows)));

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto prefix = "blocks." + std::to_string(l) + ".";
    auto a = ad::layer_norm(h, params_.get(prefix + "ln1.gamma"), params_.get(prefix + "ln1.beta"), kLayerNormEps);
    auto q = linear(a, (prefix + "attn.q").c_str());
    auto k = linear(a, (prefix + "attn.k").c_str());
    auto v = linear(a, (prefix + "attn.v").c_str());
    auto att = ad::causal_attention(q, k, v, config_.n_heads);
    h = ad::add(h, linear(att, (prefix + "attn.o").c_str()));
    auto m = ad::layer_norm(h, params_.get(prefix + "ln2.gamma"), params_.get(prefix + "ln2.beta"), kLayerNormEps);
    auto ff = linear(ad::gelu(linear(m, (prefix + "mlp.fc").c_str())), (prefix + "mlp.proj").c_str());
    h = ad::add(h, ff);
  }
  return ad::layer_norm(h, params_.get("ln_f.gamma"), params_.get("ln_f.beta"), kLayerNormEps);
}

Tensor Model::lm_logits(const Tensor& hidden) const { return linear(hidden, "lm_head"); }

std::vector<double> Model::lm_logits(std::span<const double> h) const {
  ad::NoGradGuard guard;
  const auto logits = lm_logits(Tensor::row(h));
  return {logits.data().begin(), logits.data().end()};
}

ckpt::Metadata Model::metadata() const {
  return {
      {"d", std::to_string(config_.d)},
      {"n_layers", std::to_string(config_.n_layers)},
      {"n_heads", std::to_string(config_.n_heads)},
      {"vocab_size", std::to_string(config_.vocab_size)},
      {"max_seq_len", std::to_string(config_.max_seq_len)},
      {"obs_dim", std::to_string(config_.obs_dim)},
      {"position_scale", hexfloat(config_.position_scale)},
      {"number_encoding", std::string(enc::encoding_name(number_encoding_))},
      {"numeric_output", numeric_output_ ? "1" : "0"},
      {"norm.offset", hexfloat(norm_.offset)},
      {"norm.scale", hexfloat(norm_.scale)},
  };
}

std::uint64_t Model::save(const std::filesystem::path& path, ckpt::Metadata extra) const {
  auto meta = metadata();
  meta.merge(extra);
  return ckpt::save(path, params_, meta);
}

Model Model::load(const std::filesystem::path& path, ckpt::Metadata* meta_out) {
  auto ck = ckpt::load(path);
  const auto& meta = ck.meta;
  auto num = [&](const char* key) { return static_cast<std::size_t>(std::stoull(meta_at(meta, key))); };
  ModelConfig cfg;
  cfg.d = num("d");
  cfg.n_layers = num("n_layers");
  cfg.n_heads = num("n_heads");
  cfg.vocab_size = num("vocab_size");
  cfg.max_seq_len = num("max_seq_len");
  cfg.obs_dim = num("obs_dim");
  cfg.position_scale = std::strtod(meta_at(meta, "position_scale").c_str(), nullptr);
  Model m(cfg, enc::parse_encoding(meta_at(meta, "number_encoding")), meta_at(meta, "numeric_output") == "1", 0);
  m.norm_.offset = std::strtod(meta_at(meta, "norm.offset").c_str(), nullptr);
  m.norm_.scale = std::strtod(meta_at(meta, "norm.scale").c_str(), nullptr);
  ckpt::assign(m.params_, ck.params);
  if (meta_out) *meta_out = ck.meta;
  return m;
}

}  // namespace numlm::model
