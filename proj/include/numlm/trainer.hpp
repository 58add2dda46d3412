#pragma once

// Joint objective: next-token cross-entropy over the text stream plus a
// weighted regression term on the numbers the assistant emits.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "numlm/gradcore.hpp"
#include "numlm/numtext.hpp"
#include "numlm/seqmodel.hpp"

namespace numlm::train {

enum class TaskKind { scalar, trajectory };

std::string_view task_kind_name(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

struct LossConfig {
  double lambda = 1.0;
  TaskKind task_kind = TaskKind::scalar;
};

// Label-stream positions of the supervised number placeholders and their
// ground-truth values (physical units). For trajectories consecutive values
// pair up into waypoints.
struct NumericTargets {
  std::vector<std::size_t> positions;
  std::vector<double> values;
};

NumericTargets numeric_targets(const text::TokenSequence& labelled, std::span<const double> numbers);

struct LossTerm {
  ad::Tensor value;  // scalar
  bool empty = false;
};

// Summed cross-entropy where logits[i] predicts labels[i + 1]. Placeholder
// labels are supervised as `number_class`.
LossTerm text_loss(const ad::Tensor& logits, std::span<const int> labels, int number_class = text::CharVocab::kNumber);

// Head output at hidden row i_m - 1 for every target position, [M, 1].
ad::Tensor numeric_predictions(const ad::Tensor& hidden, const NumericTargets& targets, const model::NumberHead& head);

LossTerm scalar_loss(const ad::Tensor& preds, std::span<const double> targets);
LossTerm traj_loss(const ad::Tensor& preds, std::span<const double> targets);
ad::Tensor total_loss(const ad::Tensor& text_l, const ad::Tensor& num_l, const LossConfig& cfg);

struct TrainingExample {
  text::TokenSequence seq;  // labels filled
  std::vector<double> numbers;
  std::vector<std::vector<double>> obs;
  NumericTargets targets;
};

struct ExampleLoss {
  ad::Tensor text;
  ad::Tensor num;  // normalized units
  ad::Tensor total;
};

ExampleLoss example_loss(const model::Model& m, const TrainingExample& ex, const LossConfig& cfg);

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_ratio = 0.03;
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: none
  std::filesystem::path checkpoint_dir;
  double divergence_factor = 10.0;
  std::size_t divergence_patience = 100;
};

// Linear warmup then cosine decay to zero.
double lr_at(const OptimConfig& cfg, std::size_t step);

// Decoupled weight decay on rank-2 parameters.
class AdamW {
 public:
  AdamW(ad::ParamStore& params, const OptimConfig& cfg);
  void step(double lr);
  std::size_t t() const { return t_; }

 private:
  ad::ParamStore& params_;
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct LossRecord {
  std::size_t step = 0;
  double text = 0.0;
  double num = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::vector<std::filesystem::path> checkpoints;
};

using StepCallback = std::function<void(const LossRecord&)>;

TrainResult train(model::Model& m, std::span<const TrainingExample> data, const OptimConfig& opt,
                  const LossConfig& loss_cfg, const StepCallback& on_step = {});

void write_curve_csv(const std::filesystem::path& path, std::span<const LossRecord> curve);

}  // namespace numlm::train
