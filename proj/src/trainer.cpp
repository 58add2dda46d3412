#include "numlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "numlm/errors.hpp"

namespace numlm::train {

using ad::Tensor;

std::string_view task_kind_name(TaskKind k) { return k == TaskKind::scalar ? "scalar" : "trajectory"; }

TaskKind parse_task_kind(std::string_view s) {
  if (s == "scalar") return TaskKind::scalar;
  if (s == "trajectory" || s == "traj") return TaskKind::trajectory;
  throw ConfigError("unknown task_kind '" + std::string(s) + "'");
}

NumericTargets numeric_targets(const text::TokenSequence& labelled, std::span<const double> numbers) {
  if (numbers.size() != labelled.numeric_positions.size()) {
    throw AlignmentError("numeric_targets: " + std::to_string(labelled.numeric_positions.size()) +
                         " placeholders vs " + std::to_string(numbers.size()) + " numbers");
  }
  NumericTargets t;
  for (std::size_t k = 0; k < labelled.numeric_positions.size(); ++k) {
    const auto pos = labelled.numeric_positions[k];
    if (labelled.labels[pos] == text::kNumberTokenIndex) {
      t.positions.push_back(pos);
      t.values.push_back(numbers[k]);
    }
  }
  return t;
}

LossTerm text_loss(const Tensor& logits, std::span<const int> labels, int number_class) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("text_loss: " + std::to_string(logits.rows()) + " logit rows vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<int> targets(labels.size(), text::kIgnoreIndex);
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    const int next = labels[i + 1];
    targets[i] = next == text::kNumberTokenIndex ? number_class : next;
  }
  auto ce = ad::softmax_cross_entropy(logits, targets, text::kIgnoreIndex, ad::Reduction::sum);
  return {ce.loss, ce.all_ignored};
}

Tensor numeric_predictions(const Tensor& hidden, const NumericTargets& targets, const model::NumberHead& head) {
  if (targets.positions.empty()) return Tensor::zeros({0, 1});
  std::vector<std::size_t> rows;
  rows.reserve(targets.positions.size());
  for (auto pos : targets.positions) {
    if (pos == 0) throw ContractError("numeric target at position 0 has no preceding hidden state");
    rows.push_back(pos - 1);
  }
  return model::regress_normalized(head, ad::gather_rows(hidden, std::span<const std::size_t>(rows)));
}

LossTerm scalar_loss(const Tensor& preds, std::span<const double> targets) {
  if (targets.empty() && preds.numel() == 0) return {Tensor::scalar(0.0), true};
  return {ad::l1_loss(preds, targets), false};
}

LossTerm traj_loss(const Tensor& preds, std::span<const double> targets) {
  if (preds.numel() != targets.size()) {
    throw DimensionError("traj_loss: " + std::to_string(preds.numel()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (targets.size() % 2 != 0) throw ContractError("traj_loss: waypoint values must come in (x, y) pairs");
  if (targets.empty()) return {Tensor::scalar(0.0), true};
  const auto T = targets.size() / 2;
  auto diff = ad::sub(ad::reshape(preds, {T, 2}),
                      Tensor::from({T, 2}, std::vector<double>(targets.begin(), targets.end())));
  return {ad::mean(ad::l2_norm_rows(diff)), false};
}

Tensor total_loss(const Tensor& text_l, const Tensor& num_l, const LossConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  return ad::add(text_l, ad::scale(num_l, cfg.lambda));
}

ExampleLoss example_loss(const model::Model& m, const TrainingExample& ex, const LossConfig& cfg) {
  const auto input = m.assemble_input(ex.seq, ex.numbers, ex.obs);
  const auto hidden = m.forward(input);
  const auto logits = m.lm_logits(hidden);
  ExampleLoss out;
  out.text = text_loss(logits, ex.seq.labels).value;

  std::vector<double> targets(ex.targets.values.size());
  std::transform(ex.targets.values.begin(), ex.targets.values.end(), targets.begin(),
                 [&](double v) { return m.normalizer().apply(v); });
  const auto preds = numeric_predictions(hidden, ex.targets, m.number_head());
  out.num = cfg.task_kind == TaskKind::scalar ? scalar_loss(preds, targets).value : traj_loss(preds, targets).value;
  out.total = total_loss(out.text, out.num, cfg);
  return out;
}

double lr_at(const OptimConfig& cfg, std::size_t step) {
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(cfg.steps)));
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const auto span = std::max<std::size_t>(1, cfg.steps - warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

AdamW::AdamW(ad::ParamStore& params, const OptimConfig& cfg) : params_(params), cfg_(cfg) {
  for (const auto& [_, t] : params_.entries()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& entries = params_.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& t = entries[p].second;
    if (!t.has_grad()) continue;
    const double decay = t.rank() >= 2 ? cfg_.weight_decay : 0.0;
    auto w = t.mutable_data();
    auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps) + decay * w[i];
      w[i] -= lr * update;
    }
  }
}

TrainResult train(model::Model& m, std::span<const TrainingExample> data, const OptimConfig& opt,
                  const LossConfig& loss_cfg, const StepCallback& on_step) {
  if (data.empty()) throw InputError("train: empty dataset");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (loss_cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  AdamW optimizer(m.params(), opt);
  TrainResult result;
  double initial = 0.0;
  std::size_t above = 0;
  const double inv_batch = 1.0 / static_cast<double>(opt.batch_size);

  for (std::size_t step = 0; step < opt.steps; ++step) {
    m.params().zero_grad();
    LossRecord rec;
    rec.step = step;
    rec.lr = lr_at(opt, step);
    for (std::size_t b = 0; b < opt.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& ex = data[order[cursor++]];
      const auto loss = example_loss(m, ex, loss_cfg);
      ad::backward(ad::scale(loss.total, inv_batch));
      rec.text += loss.text.item() * inv_batch;
      rec.num += loss.num.item() * inv_batch;
      rec.total += loss.total.item() * inv_batch;
    }
    if (!std::isfinite(rec.total)) throw TrainingDiverged("non-finite loss at step " + std::to_string(step));
    if (step == 0) initial = rec.total;
    above = rec.total > opt.divergence_factor * initial ? above + 1 : 0;
    if (above >= opt.divergence_patience) {
      throw TrainingDiverged("loss above " + std::to_string(opt.divergence_factor) + "x initial (" +
                             std::to_string(initial) + ") for " + std::to_string(above) + " steps at step " +
                             std::to_string(step));
    }
    optimizer.step(rec.lr);
    result.curve.push_back(rec);
    if (on_step) on_step(rec);
    if (opt.checkpoint_every > 0 && (step + 1) % opt.checkpoint_every == 0 && !opt.checkpoint_dir.empty()) {
      auto path = opt.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".ckpt");
      m.save(path, {{"step", std::to_string(step + 1)}});
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const LossRecord> curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "step,text_loss,num_loss,total\n";
  char buf[160];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.step, r.text, r.num, r.total);
    out << buf;
  }
}

}  // namespace numlm::train
