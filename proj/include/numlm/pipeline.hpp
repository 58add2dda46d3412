#pragma once

// Experiment plumbing shared by the CLI and the acceptance suite: variant
// definitions, dataset -> example conversion, training runs, prediction,
// evaluation, ablation comparison and step-count benchmarking.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "numlm/dataset.hpp"
#include "numlm/evalkit.hpp"
#include "numlm/genloop.hpp"
#include "numlm/seqmodel.hpp"
#include "numlm/synthdrive.hpp"
#include "numlm/trainer.hpp"

namespace numlm::pipeline {

// drivecode: numbers in and out through the projector and number head
// variant:   digit text in, number head out
// text:      digit text both sides
// xval:      scaled [NUM] embedding in, number head out
enum class Variant { drivecode, variant, text, xval };

struct VariantSpec {
  Variant id;
  std::string_view name;
  enc::Encoding number_encoding;  // embedding used at placeholder positions
  bool numeric_input;
  bool numeric_output;
};

VariantSpec variant_spec(Variant v);
Variant parse_variant(std::string_view name);
Variant variant_for_encoding(enc::Encoding e);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::drivecode, Variant::variant, Variant::text,
                                                        Variant::xval};

struct RunConfig {
  std::string task = "speed";
  std::string variant = "drivecode";
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;
  std::size_t steps = 2000;
  double lambda = 1.0;
  double lr = 1e-3;
  std::size_t batch_size = 8;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t eval_limit = 0;  // 0: whole test split
  std::size_t max_steps = 64;
  std::size_t d = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t checkpoint_every = 0;
  std::size_t seeds = 3;  // compare
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path data_dir;  // default: <out_dir>/data

  // Sorted key=value lines of every field; hashed into manifests.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::filesystem::path resolved_data_dir() const;
};

// key=value assignment shared by the config file and flag layers.
void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

train::TaskKind task_kind_of(synth::Task task);

// Encoded dialogue after the variant's rendering policy.
text::EncodedDialogue variant_dialogue(const data::DialogueRecord& record, const VariantSpec& spec);

train::TrainingExample build_example(const data::DialogueRecord& record, const VariantSpec& spec);

struct PromptCase {
  std::string id;
  text::TokenSequence prompt;  // up to and including the assistant marker
  std::vector<double> numbers;
  std::vector<std::vector<double>> obs;
  std::vector<double> truth;  // assistant-side numbers
};

PromptCase build_prompt(const data::DialogueRecord& record, const VariantSpec& spec);

// z-score over every placeholder value the variant feeds or regresses.
enc::Normalizer fit_normalizer(const std::vector<train::TrainingExample>& examples);

struct Prediction {
  std::string id;
  std::string text;
  std::vector<double> numbers;
  std::size_t steps = 0;
  std::size_t numeric_steps = 0;
  bool truncated = false;
  double millis = 0.0;
};

std::string prediction_json(const Prediction& p);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

// Numbers a prediction carries: regressed values, or parsed from its text.
std::vector<double> predicted_numbers(const Prediction& p);

std::vector<Prediction> predict(const model::Model& m, const std::vector<data::DialogueRecord>& records,
                                const VariantSpec& spec, std::size_t max_steps, std::size_t limit = 0);

eval::MetricReport evaluate(synth::Task task, const std::vector<Prediction>& preds,
                            const std::vector<data::DialogueRecord>& truth);

struct Dataset {
  std::vector<data::DialogueRecord> train;
  std::vector<data::DialogueRecord> test;
};

// Loads <data_dir>/{train,test}.jsonl, generating them first if absent.
Dataset ensure_data(const RunConfig& cfg);

struct TrainOutcome {
  model::Model model;
  train::TrainResult result;
  std::filesystem::path checkpoint;
  std::uint64_t checkpoint_id = 0;
};

TrainOutcome train_variant(const RunConfig& cfg, const Dataset& data, const VariantSpec& spec,
                           const std::filesystem::path& run_dir);

struct RunSummary {
  std::string variant;
  std::uint64_t seed = 0;
  eval::MetricReport report;
  double primary_mae = 0.0;  // speed/value MAE or mean point error
  std::uint64_t checkpoint_id = 0;
};

// Trains, predicts and evaluates one variant under cfg; writes artifacts and
// a manifest under run_dir.
RunSummary run_variant(const RunConfig& cfg, const Dataset& data, Variant v, const std::filesystem::path& run_dir);

struct CompareRow {
  std::string variant;
  std::vector<double> maes;  // one per seed
  double median_mae = 0.0;
  eval::MetricReport median_report;  // report of the median seed
};

std::vector<CompareRow> compare(const RunConfig& cfg);
void write_compare(const std::filesystem::path& dir, const std::vector<CompareRow>& rows, synth::Task task);

struct BenchRow {
  std::string variant;
  std::string source;  // "checkpoint" or "replay"
  std::size_t samples = 0;
  std::size_t total_steps = 0;
  std::size_t numeric_steps = 0;
  std::size_t text_steps = 0;
  std::size_t numbers = 0;
  bool identity_holds = false;
  double avg_ms = 0.0;
};

// Decoder that replays a fixed token script (emitting the placeholder class
// for numbers); used for exact step accounting against ground truth.
class ScriptedDecoder final : public gen::Decoder {
 public:
  // Step i emits script[i]; the k-th placeholder regresses numbers[k].
  ScriptedDecoder(std::vector<int> script, std::vector<double> numbers, const model::Model& embedder,
                  std::size_t prompt_len);
  std::size_t hidden_size() const override;
  std::size_t max_seq_len() const override;
  bool numeric_output() const override { return numeric_; }
  std::vector<double> last_hidden(const ad::Tensor& inputs) const override;
  std::vector<double> lm_logits(std::span<const double> h) const override;
  double regress_number(std::span<const double> h) const override;
  std::vector<double> embed_token(int id) const override;
  std::vector<double> embed_number(double x) const override;

 private:
  std::vector<int> script_;
  std::vector<double> numbers_;
  const model::Model& embedder_;
  std::size_t prompt_len_ = 0;
  bool numeric_;
};

// Token script of a ground-truth answer turn under a variant (ends with EOS).
std::vector<int> answer_script(const data::DialogueRecord& record, const VariantSpec& spec);

std::vector<BenchRow> bench(const RunConfig& cfg);
void write_bench(const std::filesystem::path& dir, const std::vector<BenchRow>& rows);

// Writes <dir>/<command>_manifest.json.
void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command,
                    const std::map<std::string, std::string>& extra);

}  // namespace numlm::pipeline
