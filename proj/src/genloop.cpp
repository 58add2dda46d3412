#include "numlm/genloop.hpp"

#include <algorithm>
#include <limits>

#include "numlm/errors.hpp"

namespace numlm::gen {

using ad::Tensor;
using text::CharVocab;

std::vector<double> ModelDecoder::last_hidden(const Tensor& inputs) const {
  ad::NoGradGuard guard;
  const auto hidden = m_.forward(inputs);
  return hidden.row_values(hidden.rows() - 1);
}

std::vector<double> ModelDecoder::embed_token(int id) const {
  ad::NoGradGuard guard;
  const auto row = m_.embed_token(id);
  return {row.data().begin(), row.data().end()};
}

std::vector<double> ModelDecoder::embed_number(double x) const {
  ad::NoGradGuard guard;
  const auto row = m_.embed_number(x);
  return {row.data().begin(), row.data().end()};
}

GenerationResult generate(const Decoder& decoder, const model::AssembledInput& prompt, std::size_t max_steps,
                          const enc::DigitCodec& display, const StepObserver& observer) {
  const auto d = decoder.hidden_size();
  if (prompt.length() == 0) throw ContractError("generate: empty prompt");
  if (prompt.embeddings.cols() != d) throw DimensionError("generate: prompt width does not match decoder");
  if (prompt.length() + max_steps > decoder.max_seq_len()) {
    throw ContractError("generate: prompt length " + std::to_string(prompt.length()) + " + max_steps " +
                        std::to_string(max_steps) + " exceeds max_seq_len " + std::to_string(decoder.max_seq_len()));
  }

  const CharVocab vocab;
  std::vector<double> rows(prompt.embeddings.data().begin(), prompt.embeddings.data().end());
  std::size_t len = prompt.length();

  GenerationResult out;
  bool finished = false;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const auto h = decoder.last_hidden(Tensor::from({len, d}, rows));
    auto logits = decoder.lm_logits(h);
    if (!decoder.numeric_output() && static_cast<std::size_t>(CharVocab::kNumber) < logits.size()) {
      logits[CharVocab::kNumber] = -std::numeric_limits<double>::infinity();
    }
    const int token = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ++out.step_count;
    out.tokens.push_back(token);

    StepTrace trace;
    trace.step = step;
    trace.token = token;
    if (token == CharVocab::kEos) {
      if (observer) observer(trace);
      finished = true;
      break;
    }
    if (token == CharVocab::kNumber) {
      const double x = decoder.regress_number(h);
      out.numbers.push_back(x);
      ++out.per_number_steps;
      out.text += display.format(x);
      trace.is_number = true;
      trace.number = x;
      trace.fed_embedding = decoder.embed_number(x);
    } else {
      out.text += vocab.piece(token);
      trace.fed_embedding = decoder.embed_token(token);
    }
    if (trace.fed_embedding.size() != d) throw DimensionError("generate: decoder embedding width mismatch");
    rows.insert(rows.end(), trace.fed_embedding.begin(), trace.fed_embedding.end());
    ++len;
    if (observer) observer(trace);
  }
  out.truncated = !finished;
  if (!decoder.numeric_output()) out.per_number_steps = numeric_text_steps(out.text);
  return out;
}

std::size_t count_digit_steps(std::string_view rendered_number) { return rendered_number.size(); }

std::size_t numeric_text_steps(std::string_view text) {
  const auto enc = text::extract_numbers(text, text::ConversionPolicy{});
  std::size_t steps = 0;
  for (const auto& s : enc.spans) steps += count_digit_steps(s.original_literal);
  return steps;
}

}  // namespace numlm::gen
