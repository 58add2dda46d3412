#pragma once

#include <vector>

#include "numlm/genloop.hpp"

namespace oracle {

// Emits a fixed token script; hidden state encodes the step index.
class StubDecoder final : public numlm::gen::Decoder {
 public:
  StubDecoder(const numlm::model::Model& m, std::vector<int> script, std::vector<double> regress, std::size_t prompt,
              bool numeric = true)
      : m_(m), script_(std::move(script)), regress_(std::move(regress)), prompt_(prompt), numeric_(numeric) {}

  std::size_t hidden_size() const override { return m_.config().d; }
  std::size_t max_seq_len() const override { return m_.config().max_seq_len; }
  bool numeric_output() const override { return numeric_; }
  std::vector<double> last_hidden(const numlm::ad::Tensor& inputs) const override {
    std::vector<double> h(hidden_size(), 0.0);
    h[0] = static_cast<double>(inputs.rows() - prompt_);
    return h;
  }
  std::vector<double> lm_logits(std::span<const double> h) const override {
    std::vector<double> l(m_.config().vocab_size, 0.0);
    const auto step = static_cast<std::size_t>(h[0]);
    l[static_cast<std::size_t>(step < script_.size() ? script_[step] : script_.back())] = 1.0;
    // the placeholder class always scores high; masking must remove it
    if (!numeric_) l[numlm::text::CharVocab::kNumber] = 10.0;
    return l;
  }
  double regress_number(std::span<const double> h) const override {
    return regress_.at(static_cast<std::size_t>(h[0]) % regress_.size());
  }
  std::vector<double> embed_token(int id) const override {
    numlm::ad::NoGradGuard g;
    const auto t = m_.embed_token(id);
    return {t.data().begin(), t.data().end()};
  }
  std::vector<double> embed_number(double x) const override {
    numlm::ad::NoGradGuard g;
    const auto t = numlm::enc::project_number(m_.projector(), x);
    return {t.data().begin(), t.data().end()};
  }

 private:
  const numlm::model::Model& m_;
  std::vector<int> script_;
  std::vector<double> regress_;
  std::size_t prompt_;
  bool numeric_;
};

}  // namespace oracle
