#pragma once

// Compact pre-norm causal transformer with three-way input assembly
// (text, number, observation) and two heads over the shared hidden state.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "numlm/checkpoint.hpp"
#include "numlm/encoders.hpp"
#include "numlm/gradcore.hpp"
#include "numlm/numtext.hpp"

namespace numlm::model {

struct ModelConfig {
  std::size_t d = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 104;
  std::size_t max_seq_len = 256;
  std::size_t obs_dim = 4;
  // amplitude of the sinusoidal position table
  double position_scale = 0.1;

  void validate() const;
};

// Linear d -> d/2, LayerNorm, GELU, linear d/2 -> 1.
struct NumberHead {
  ad::Tensor w1, b1;
  ad::Tensor ln_gamma, ln_beta;
  ad::Tensor w2, b2;
  enc::Normalizer norm;
};

// Head output in normalized units for each row of `hidden` ([m, d] -> [m, 1]).
ad::Tensor regress_normalized(const NumberHead& head, const ad::Tensor& hidden);
// Single hidden row, de-normalized to physical units.
double regress_number(const NumberHead& head, std::span<const double> h);

struct AssembledInput {
  ad::Tensor embeddings;  // [L', d]
  std::vector<std::size_t> numeric_positions;
  std::vector<std::size_t> obs_positions;

  std::size_t length() const { return embeddings.defined() ? embeddings.rows() : 0; }
};

class Model {
 public:
  Model(ModelConfig config, enc::Encoding number_encoding, bool numeric_output, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  enc::Encoding number_encoding() const { return number_encoding_; }
  bool numeric_output() const { return numeric_output_; }
  const enc::Normalizer& normalizer() const { return norm_; }
  void set_normalizer(enc::Normalizer norm) { norm_ = norm; }

  enc::NumberProjector projector() const;
  enc::XValEncoder xval() const;
  NumberHead number_head() const;
  std::unique_ptr<enc::NumberEncoder> number_encoder() const;

  // Embedding for a placeholder under the active strategy, [1, d].
  ad::Tensor embed_number(double x) const;
  ad::Tensor embed_token(int id) const;
  ad::Tensor embed_observation(std::span<const double> obs) const;

  AssembledInput assemble_input(const text::TokenSequence& seq, std::span<const double> numbers,
                                std::span<const std::vector<double>> obs) const;

  // Hidden states [L', d] after the final LayerNorm.
  ad::Tensor forward(const AssembledInput& input) const;
  ad::Tensor forward(const ad::Tensor& embeddings) const;

  ad::Tensor lm_logits(const ad::Tensor& hidden) const;  // [L', V]
  std::vector<double> lm_logits(std::span<const double> h) const;

  ckpt::Metadata metadata() const;
  std::uint64_t save(const std::filesystem::path& path, ckpt::Metadata extra = {}) const;
  static Model load(const std::filesystem::path& path, ckpt::Metadata* meta_out = nullptr);

 private:
  ad::Tensor linear(const ad::Tensor& x, const char* prefix) const;

  ModelConfig config_;
  enc::Encoding number_encoding_;
  bool numeric_output_;
  enc::Normalizer norm_;
  ad::ParamStore params_;
  ad::Tensor positions_;  // [max_seq_len, d] sinusoidal table
};

}  // namespace numlm::model
