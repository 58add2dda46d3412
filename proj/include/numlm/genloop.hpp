#pragma once

// Greedy dual-head decoding. Each step reads the last hidden state with
// both heads; a placeholder emission records the regressed number and feeds
// its number embedding (never a text embedding) into the next step.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "numlm/encoders.hpp"
#include "numlm/numtext.hpp"
#include "numlm/seqmodel.hpp"

namespace numlm::gen {

class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual std::size_t hidden_size() const = 0;
  virtual std::size_t max_seq_len() const = 0;
  // Whether the placeholder class may be emitted (a number head exists).
  virtual bool numeric_output() const = 0;
  // Last-position hidden state for input rows [L, d].
  virtual std::vector<double> last_hidden(const ad::Tensor& inputs) const = 0;
  virtual std::vector<double> lm_logits(std::span<const double> h) const = 0;
  virtual double regress_number(std::span<const double> h) const = 0;
  virtual std::vector<double> embed_token(int id) const = 0;
  virtual std::vector<double> embed_number(double x) const = 0;
};

class ModelDecoder final : public Decoder {
 public:
  explicit ModelDecoder(const model::Model& m) : m_(m), head_(m.number_head()) {}
  std::size_t hidden_size() const override { return m_.config().d; }
  std::size_t max_seq_len() const override { return m_.config().max_seq_len; }
  bool numeric_output() const override { return m_.numeric_output(); }
  std::vector<double> last_hidden(const ad::Tensor& inputs) const override;
  std::vector<double> lm_logits(std::span<const double> h) const override { return m_.lm_logits(h); }
  double regress_number(std::span<const double> h) const override { return model::regress_number(head_, h); }
  std::vector<double> embed_token(int id) const override;
  std::vector<double> embed_number(double x) const override;

 private:
  const model::Model& m_;
  model::NumberHead head_;
};

struct StepTrace {
  std::size_t step = 0;
  int token = 0;                 // emitted vocabulary id
  bool is_number = false;
  double number = 0.0;           // regressed value when is_number
  std::vector<double> fed_embedding;  // row appended as the next input
};

struct GenerationResult {
  std::string text;              // numbers rendered with the display codec
  std::vector<double> numbers;
  std::vector<int> tokens;       // emitted ids; placeholders as CharVocab::kNumber
  std::size_t step_count = 0;
  std::size_t per_number_steps = 0;
  bool truncated = false;
};

using StepObserver = std::function<void(const StepTrace&)>;

GenerationResult generate(const Decoder& decoder, const model::AssembledInput& prompt, std::size_t max_steps,
                          const enc::DigitCodec& display = {}, const StepObserver& observer = {});

// Decoding steps a digit-level model spends on one rendered number.
std::size_t count_digit_steps(std::string_view rendered_number);

// Steps spent on numeric content in free text: summed length of the number
// literals the extractor finds (no exclusions).
std::size_t numeric_text_steps(std::string_view text);

}  // namespace numlm::gen
