#include "numlm/cli.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "numlm/errors.hpp"
#include "numlm/pipeline.hpp"

namespace numlm::cli {

namespace fs = std::filesystem;
using pipeline::RunConfig;

namespace {

struct Flags {
  std::map<std::string, std::string> values;
  std::string config_file;
};

void add_common(CLI::App* app, Flags& flags) {
  app->add_option("--config", flags.config_file, "key=value config file (flags override)");
  auto opt = [&](const char* flag, const char* key, const char* help) {
    app->add_option_function<std::string>(
        flag, [&flags, key](const std::string& v) { flags.values[key] = v; }, help);
  };
  opt("--encoding", "encoding", "drivecode|xval|digits (selects the matching variant)");
  opt("--variant", "variant", "drivecode|variant|text|xval");
  opt("--task", "task", "speed|traj|copy");
  opt("--seed", "seed", "model / shuffling seed");
  opt("--data-seed", "data_seed", "synthetic data seed");
  opt("--steps", "steps", "optimizer steps");
  opt("--lambda", "lambda", "numeric loss weight");
  opt("--lr", "lr", "peak learning rate");
  opt("--batch-size", "batch_size", "sequences per step");
  opt("--n-train", "n_train", "training dialogues");
  opt("--n-test", "n_test", "test dialogues");
  opt("--eval-limit", "eval_limit", "evaluate the first N test dialogues (0: all)");
  opt("--max-steps", "max_steps", "generation step budget");
  opt("--seeds", "seeds", "seeds per variant in compare");
  opt("--checkpoint-every", "checkpoint_every", "intermediate checkpoint period");
  opt("--out-dir", "out_dir", "output directory");
  opt("--data-dir", "data_dir", "dataset directory (default <out-dir>/data)");
}

RunConfig resolve(const Flags& flags) {
  RunConfig cfg;
  if (!flags.config_file.empty()) {
    for (const auto& [k, v] : pipeline::read_config_file(flags.config_file)) {
      try {
        pipeline::apply_key(cfg, k, v);
      } catch (const ConfigError& e) {
        throw ConfigError(flags.config_file + ": " + e.what());
      }
    }
  }
  // encoding first so an explicit --variant wins over it
  if (auto it = flags.values.find("encoding"); it != flags.values.end()) pipeline::apply_key(cfg, it->first, it->second);
  for (const auto& [k, v] : flags.values)
    if (k != "encoding") pipeline::apply_key(cfg, k, v);
  return cfg;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_gen_data(const RunConfig& cfg) {
  const auto dir = cfg.resolved_data_dir();
  fs::create_directories(dir);
  const auto info = synth::make_split(synth::parse_task(cfg.task), cfg.n_train, cfg.n_test, cfg.data_seed, dir);
  std::cout << "wrote " << info.train_path.string() << " (" << info.train_seeds.size() << "), "
            << info.test_path.string() << " (" << info.test_seeds.size() << ")\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto data = pipeline::ensure_data(cfg);
  const auto spec = pipeline::variant_spec(pipeline::parse_variant(cfg.variant));
  const auto out = pipeline::train_variant(cfg, data, spec, cfg.out_dir);
  pipeline::write_manifest(cfg.out_dir, cfg, "train",
                           {{"checkpoint", out.checkpoint.string()}, {"checkpoint_id", hex(out.checkpoint_id)}});
  const auto& last = out.result.curve.back();
  std::printf("trained %s for %zu steps: text %.6f num %.6f total %.6f\ncheckpoint %s (%s)\n",
              std::string(spec.name).c_str(), out.result.curve.size(), last.text, last.num, last.total,
              out.checkpoint.string().c_str(), hex(out.checkpoint_id).c_str());
  return 0;
}

int cmd_generate(const RunConfig& cfg, const Flags& flags, const std::string& checkpoint, const std::string& data_path,
                 const std::string& output) {
  const fs::path ck = checkpoint.empty() ? cfg.out_dir / "model.ckpt" : fs::path(checkpoint);
  ckpt::Metadata meta;
  const auto m = model::Model::load(ck, &meta);
  std::string variant = flags.values.count("variant") || flags.values.count("encoding") || !meta.count("variant")
                            ? cfg.variant
                            : meta.at("variant");
  const auto spec = pipeline::variant_spec(pipeline::parse_variant(variant));
  if (spec.number_encoding != m.number_encoding() || spec.numeric_output != m.numeric_output()) {
    throw ConfigError("variant '" + variant + "' does not match the checkpoint's encoding");
  }
  const fs::path in = data_path.empty() ? cfg.resolved_data_dir() / "test.jsonl" : fs::path(data_path);
  const fs::path out = output.empty() ? cfg.out_dir / "predictions.jsonl" : fs::path(output);
  const auto records = data::read_jsonl(in);
  const auto preds = pipeline::predict(m, records, spec, cfg.max_steps, cfg.eval_limit);
  pipeline::write_predictions(out, preds);
  pipeline::write_manifest(cfg.out_dir, cfg, "generate",
                           {{"checkpoint", ck.string()}, {"data", in.string()}, {"predictions", out.string()}});
  std::cout << "wrote " << preds.size() << " predictions to " << out.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& predictions, const std::string& data_path) {
  const fs::path pp = predictions.empty() ? cfg.out_dir / "predictions.jsonl" : fs::path(predictions);
  const fs::path in = data_path.empty() ? cfg.resolved_data_dir() / "test.jsonl" : fs::path(data_path);
  const auto report = pipeline::evaluate(synth::parse_task(cfg.task), pipeline::read_predictions(pp),
                                         data::read_jsonl(in));
  eval::write_report_csv(cfg.out_dir / "metrics.csv", report);
  eval::write_report_json(cfg.out_dir / "metrics.json", report);
  pipeline::write_manifest(cfg.out_dir, cfg, "eval", {{"predictions", pp.string()}, {"data", in.string()}});
  std::cout << eval::report_table(report);
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  const auto rows = pipeline::compare(cfg);
  std::printf("%-10s %12s %10s %10s %8s %8s %8s %8s\n", "variant", "median_MAE", "RMSE", "nL2", "A_0.1", "A_0.5",
              "A_1", "A_5");
  for (const auto& r : rows) {
    const auto& f = r.median_report.fields.front();
    std::printf("%-10s %12.5f %10.5f %10.7f %8.2f %8.2f %8.2f %8.2f\n", r.variant.c_str(), r.median_mae, f.rmse,
                f.normalized_l2, f.threshold_acc.at(0.1), f.threshold_acc.at(0.5), f.threshold_acc.at(1.0),
                f.threshold_acc.at(5.0));
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const auto rows = pipeline::bench(cfg);
  std::printf("%-10s %-10s %7s %7s %8s %8s %8s %9s %9s\n", "variant", "source", "samples", "numbers", "total",
              "text", "numeric", "identity", "avg_ms");
  for (const auto& r : rows) {
    std::printf("%-10s %-10s %7zu %7zu %8zu %8zu %8zu %9s %9.3f\n", r.variant.c_str(), r.source.c_str(), r.samples,
                r.numbers, r.total_steps, r.text_steps, r.numeric_steps, r.identity_holds ? "yes" : "no", r.avg_ms);
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"numlm: numeric-modality sequence model toolkit"};
  app.require_subcommand(1);
  Flags flags;
  std::string checkpoint, data_path, output, predictions;

  auto* gen_data = app.add_subcommand("gen-data", "generate synthetic train/test splits");
  auto* train = app.add_subcommand("train", "train one variant");
  auto* generate = app.add_subcommand("generate", "decode predictions from a checkpoint");
  auto* evaluate = app.add_subcommand("eval", "score predictions against ground truth");
  auto* compare = app.add_subcommand("compare", "train and score all four variants over several seeds");
  auto* bench = app.add_subcommand("bench", "decoding step counts and latency per variant");
  for (auto* sub : {gen_data, train, generate, evaluate, compare, bench}) add_common(sub, flags);
  generate->add_option("--checkpoint", checkpoint, "checkpoint file (default <out-dir>/model.ckpt)");
  generate->add_option("--data", data_path, "dialogues to prompt (default test split)");
  generate->add_option("--output", output, "predictions file (default <out-dir>/predictions.jsonl)");
  evaluate->add_option("--predictions", predictions, "predictions JSONL (default <out-dir>/predictions.jsonl)");
  evaluate->add_option("--data", data_path, "ground-truth dialogues (default test split)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto cfg = resolve(flags);
    if (*gen_data) return cmd_gen_data(cfg);
    if (*train) return cmd_train(cfg);
    if (*generate) return cmd_generate(cfg, flags, checkpoint, data_path, output);
    if (*evaluate) return cmd_eval(cfg, predictions, data_path);
    if (*compare) return cmd_compare(cfg);
    if (*bench) return cmd_bench(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace numlm::cli
