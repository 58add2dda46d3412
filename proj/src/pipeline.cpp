#include "numlm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "numlm/checkpoint.hpp"
#include "numlm/errors.hpp"

namespace numlm::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using text::CharVocab;
using text::Role;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected a non-negative integer)");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected a number)");
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const text::EncodedDialogue& encoded_of(const data::DialogueRecord& record, text::EncodedDialogue& scratch) {
  if (record.encoded) return *record.encoded;
  scratch = text::extract_dialogue(record.turns, text::policy_by_id(record.policy_id));
  return scratch;
}

// Index of the last assistant marker in a token sequence.
std::size_t last_assistant_marker(const text::TokenSequence& seq, const std::string& id) {
  for (std::size_t i = seq.ids.size(); i-- > 0;)
    if (seq.ids[i] == CharVocab::kAssistant) return i;
  throw InputError("record '" + id + "' has no assistant turn");
}

std::vector<double> assistant_numbers(const data::DialogueRecord& record) {
  text::EncodedDialogue scratch;
  const auto& enc = encoded_of(record, scratch);
  std::vector<double> out;
  std::size_t k = 0;
  for (const auto& turn : enc.turns) {
    for (auto pos = turn.tmpl.find(text::kNumberPlaceholder); pos != std::string::npos;
         pos = turn.tmpl.find(text::kNumberPlaceholder, pos + text::kNumberPlaceholder.size())) {
      if (k >= enc.numbers.size()) throw AlignmentError("record '" + record.id + "': more placeholders than numbers");
      if (turn.role == Role::assistant) out.push_back(enc.numbers[k]);
      ++k;
    }
  }
  if (k != enc.numbers.size()) throw AlignmentError("record '" + record.id + "': fewer placeholders than numbers");
  return out;
}

double field_mae(const eval::MetricReport& r, synth::Task task) {
  const char* name = task == synth::Task::traj ? "point" : task == synth::Task::speed ? "speed" : "value";
  const auto* f = r.field(name);
  return f ? f->mae : 0.0;
}

fs::path seed_dir(const fs::path& out, std::string_view variant, std::uint64_t seed) {
  return out / std::string(variant) / ("seed_" + std::to_string(seed));
}

// Prefixes errors raised while handling records[i] with its JSONL line.
template <class F>
auto at_record(const std::vector<data::DialogueRecord>& records, std::size_t i, F&& f) {
  try {
    return f(records[i]);
  } catch (const AlignmentError& e) {
    throw AlignmentError("line " + std::to_string(i + 1) + " (" + records[i].id + "): " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << body;
}

}  // namespace

// --- variants ---------------------------------------------------------------

VariantSpec variant_spec(Variant v) {
  switch (v) {
    case Variant::drivecode:
      return {v, "drivecode", enc::Encoding::drivecode, true, true};
    case Variant::variant:
      return {v, "variant", enc::Encoding::drivecode, false, true};
    case Variant::text:
      return {v, "text", enc::Encoding::digits, false, false};
    case Variant::xval:
      return {v, "xval", enc::Encoding::xval, true, true};
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (variant_spec(v).name == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected drivecode|variant|text|xval)");
}

Variant variant_for_encoding(enc::Encoding e) {
  switch (e) {
    case enc::Encoding::drivecode:
      return Variant::drivecode;
    case enc::Encoding::xval:
      return Variant::xval;
    case enc::Encoding::digits:
      return Variant::text;
  }
  return Variant::drivecode;
}

// --- config -----------------------------------------------------------------

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv{
      {"batch_size", std::to_string(batch_size)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"d", std::to_string(d)},
      {"data_seed", std::to_string(data_seed)},
      {"eval_limit", std::to_string(eval_limit)},
      {"lambda", fmt17(lambda)},
      {"lr", fmt17(lr)},
      {"max_steps", std::to_string(max_steps)},
      {"n_heads", std::to_string(n_heads)},
      {"n_layers", std::to_string(n_layers)},
      {"n_test", std::to_string(n_test)},
      {"n_train", std::to_string(n_train)},
      {"seed", std::to_string(seed)},
      {"seeds", std::to_string(seeds)},
      {"steps", std::to_string(steps)},
      {"task", task},
      {"variant", variant},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  const auto s = canonical();
  return ckpt::fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

fs::path RunConfig::resolved_data_dir() const { return data_dir.empty() ? out_dir / "data" : data_dir; }

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "task") {
    synth::parse_task(value);
    cfg.task = value;
  } else if (key == "variant") {
    parse_variant(value);
    cfg.variant = value;
  } else if (key == "encoding") {
    cfg.variant = std::string(variant_spec(variant_for_encoding(enc::parse_encoding(value))).name);
  } else if (key == "seed") {
    cfg.seed = to_size(key, value);
  } else if (key == "data_seed") {
    cfg.data_seed = to_size(key, value);
  } else if (key == "steps") {
    cfg.steps = to_size(key, value);
  } else if (key == "lambda") {
    cfg.lambda = to_double(key, value);
    if (!(cfg.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  } else if (key == "lr") {
    cfg.lr = to_double(key, value);
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  } else if (key == "batch_size") {
    cfg.batch_size = to_size(key, value);
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  } else if (key == "n_train") {
    cfg.n_train = to_size(key, value);
  } else if (key == "n_test") {
    cfg.n_test = to_size(key, value);
  } else if (key == "eval_limit") {
    cfg.eval_limit = to_size(key, value);
  } else if (key == "max_steps") {
    cfg.max_steps = to_size(key, value);
  } else if (key == "d") {
    cfg.d = to_size(key, value);
  } else if (key == "n_layers") {
    cfg.n_layers = to_size(key, value);
  } else if (key == "n_heads") {
    cfg.n_heads = to_size(key, value);
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = to_size(key, value);
  } else if (key == "seeds") {
    cfg.seeds = to_size(key, value);
    if (cfg.seeds == 0) throw ConfigError("seeds must be positive");
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "data_dir") {
    cfg.data_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

train::TaskKind task_kind_of(synth::Task task) {
  return task == synth::Task::traj ? train::TaskKind::trajectory : train::TaskKind::scalar;
}

// --- examples ---------------------------------------------------------------

text::EncodedDialogue variant_dialogue(const data::DialogueRecord& record, const VariantSpec& spec) {
  text::EncodedDialogue scratch;
  const auto& enc = encoded_of(record, scratch);
  if (!spec.numeric_output) {
    const std::array<Role, 3> all{Role::system, Role::user, Role::assistant};
    return text::render_roles_as_text(enc, all, 2);
  }
  if (!spec.numeric_input) {
    const std::array<Role, 2> inputs{Role::system, Role::user};
    return text::render_roles_as_text(enc, inputs, 2);
  }
  return enc;
}

train::TrainingExample build_example(const data::DialogueRecord& record, const VariantSpec& spec) {
  const CharVocab vocab;
  const auto dlg = variant_dialogue(record, spec);
  const auto seq = text::tokenize(dlg, vocab);
  train::TrainingExample ex;
  ex.seq = text::build_labels(seq, text::assistant_mask(seq, vocab));
  ex.numbers = dlg.numbers;
  ex.obs = record.obs;
  ex.targets = train::numeric_targets(ex.seq, ex.numbers);
  return ex;
}

PromptCase build_prompt(const data::DialogueRecord& record, const VariantSpec& spec) {
  const CharVocab vocab;
  const auto dlg = variant_dialogue(record, spec);
  const auto full = text::tokenize(dlg, vocab);
  const auto cut = last_assistant_marker(full, record.id) + 1;

  PromptCase pc;
  pc.id = record.id;
  pc.prompt.ids.assign(full.ids.begin(), full.ids.begin() + static_cast<std::ptrdiff_t>(cut));
  pc.prompt.roles.assign(full.roles.begin(), full.roles.begin() + static_cast<std::ptrdiff_t>(cut));
  pc.prompt.labels.assign(cut, text::kIgnoreIndex);
  for (auto p : full.numeric_positions)
    if (p < cut) pc.prompt.numeric_positions.push_back(p);
  for (auto p : full.obs_positions)
    if (p < cut) pc.prompt.obs_positions.push_back(p);
  pc.numbers.assign(dlg.numbers.begin(),
                    dlg.numbers.begin() + static_cast<std::ptrdiff_t>(pc.prompt.numeric_positions.size()));
  pc.obs.assign(record.obs.begin(),
                record.obs.begin() +
                    static_cast<std::ptrdiff_t>(std::min(record.obs.size(), pc.prompt.obs_positions.size())));
  pc.truth = assistant_numbers(record);
  return pc;
}

enc::Normalizer fit_normalizer(const std::vector<train::TrainingExample>& examples) {
  std::vector<double> values;
  for (const auto& ex : examples) values.insert(values.end(), ex.numbers.begin(), ex.numbers.end());
  if (values.empty()) return {};
  return enc::Normalizer::fit(values);
}

// --- predictions ------------------------------------------------------------

std::string prediction_json(const Prediction& p) {
  json j{{"id", p.id},
         {"text", p.text},
         {"numbers", p.numbers},
         {"steps", p.steps},
         {"numeric_steps", p.numeric_steps},
         {"truncated", p.truncated},
         {"millis", p.millis}};
  return j.dump();
}

void write_predictions(const fs::path& path, const std::vector<Prediction>& preds) {
  std::string body;
  for (const auto& p : preds) body += prediction_json(p) + "\n";
  write_text(path, body);
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open predictions '" + path.string() + "'");
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      Prediction p;
      p.id = j.at("id").get<std::string>();
      p.text = j.value("text", std::string{});
      p.numbers = j.value("numbers", std::vector<double>{});
      p.steps = j.value("steps", std::size_t{0});
      p.numeric_steps = j.value("numeric_steps", std::size_t{0});
      p.truncated = j.value("truncated", false);
      p.millis = j.value("millis", 0.0);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> predicted_numbers(const Prediction& p) {
  if (!p.numbers.empty()) return p.numbers;
  return text::extract_numbers(p.text, text::ConversionPolicy{}).numbers;
}

std::vector<Prediction> predict(const model::Model& m, const std::vector<data::DialogueRecord>& records,
                                const VariantSpec& spec, std::size_t max_steps, std::size_t limit) {
  ad::NoGradGuard guard;
  const gen::ModelDecoder decoder(m);
  const std::size_t n = limit == 0 ? records.size() : std::min(limit, records.size());
  std::vector<Prediction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pc = at_record(records, i, [&](const auto& r) { return build_prompt(r, spec); });
    const auto input = m.assemble_input(pc.prompt, pc.numbers, pc.obs);
    if (input.length() >= m.config().max_seq_len) {
      throw LengthError("prompt of '" + pc.id + "' does not fit max_seq_len");
    }
    const auto budget = std::min(max_steps, m.config().max_seq_len - input.length());
    const auto res = gen::generate(decoder, input, budget);
    Prediction p;
    p.id = pc.id;
    p.text = res.text;
    p.numbers = res.numbers;
    p.steps = res.step_count;
    p.numeric_steps = res.per_number_steps;
    p.truncated = res.truncated;
    p.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(p));
  }
  return out;
}

eval::MetricReport evaluate(synth::Task task, const std::vector<Prediction>& preds,
                            const std::vector<data::DialogueRecord>& truth) {
  std::map<std::string, const data::DialogueRecord*> by_id;
  for (const auto& r : truth) by_id[r.id] = &r;

  eval::MetricReport report;
  std::vector<double> scalar_err, point_err, heading_err;
  for (const auto& p : preds) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) throw AlignmentError("prediction '" + p.id + "' has no ground-truth record");
    const auto gt = assistant_numbers(*it->second);
    auto got = predicted_numbers(p);
    if (got.size() != gt.size()) {
      ++report.invalid;
      got.resize(gt.size(), 0.0);
    }
    ++report.samples;
    if (task == synth::Task::traj) {
      if (gt.size() % 2 != 0 || gt.empty()) throw AlignmentError("record '" + p.id + "': odd waypoint count");
      std::vector<eval::Point> pp, gp;
      for (std::size_t k = 0; k + 1 < gt.size(); k += 2) {
        pp.push_back({got[k], got[k + 1]});
        gp.push_back({gt[k], gt[k + 1]});
      }
      point_err.push_back(eval::mean_point_error(pp, gp));
      const auto& pl = pp.back();
      const auto& gl = gp.back();
      if ((pl[0] == 0.0 && pl[1] == 0.0) || (gl[0] == 0.0 && gl[1] == 0.0)) {
        ++report.undefined_heading;
      } else {
        heading_err.push_back(eval::heading(pl) - eval::heading(gl));
      }
    } else {
      if (gt.size() != 1) throw AlignmentError("record '" + p.id + "': expected one answer number");
      scalar_err.push_back(got[0] - gt[0]);
    }
  }
  switch (task) {
    case synth::Task::speed:
      report.fields.push_back(eval::field_metrics("speed", "m/s", scalar_err));
      break;
    case synth::Task::copy:
      report.fields.push_back(eval::field_metrics("value", "-", scalar_err));
      break;
    case synth::Task::traj:
      report.fields.push_back(eval::field_metrics("point", "m", point_err));
      report.fields.push_back(eval::field_metrics("heading", "deg", heading_err));
      break;
  }
  return report;
}

// --- data and training --------------------------------------------------------

Dataset ensure_data(const RunConfig& cfg) {
  const auto task = synth::parse_task(cfg.task);
  const auto dir = cfg.resolved_data_dir();
  const auto train_path = dir / "train.jsonl";
  const auto test_path = dir / "test.jsonl";
  const auto manifest_path = dir / "data_manifest.json";

  bool fresh = fs::exists(train_path) && fs::exists(test_path) && fs::exists(manifest_path);
  if (fresh) {
    std::ifstream in(manifest_path);
    try {
      const auto m = json::parse(in);
      fresh = m.at("task").get<std::string>() == cfg.task && m.at("n_train").get<std::size_t>() == cfg.n_train &&
              m.at("n_test").get<std::size_t>() == cfg.n_test &&
              m.at("base_seed").get<std::uint64_t>() == cfg.data_seed;
    } catch (const json::exception&) {
      fresh = false;
    }
  }
  if (!fresh) {
    fs::create_directories(dir);
    synth::make_split(task, cfg.n_train, cfg.n_test, cfg.data_seed, dir);
  }
  return {data::read_jsonl(train_path), data::read_jsonl(test_path)};
}

TrainOutcome train_variant(const RunConfig& cfg, const Dataset& data, const VariantSpec& spec,
                           const fs::path& run_dir) {
  const auto task = synth::parse_task(cfg.task);
  std::vector<train::TrainingExample> examples;
  examples.reserve(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    examples.push_back(at_record(data.train, i, [&](const auto& r) { return build_example(r, spec); }));
  }

  model::ModelConfig mc;
  mc.d = cfg.d;
  mc.n_layers = cfg.n_layers;
  mc.n_heads = cfg.n_heads;
  model::Model m(mc, spec.number_encoding, spec.numeric_output, cfg.seed);
  m.set_normalizer(fit_normalizer(examples));

  train::OptimConfig opt;
  opt.lr = cfg.lr;
  opt.steps = cfg.steps;
  opt.batch_size = cfg.batch_size;
  opt.seed = cfg.seed;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.checkpoint_dir = run_dir / "checkpoints";
  if (cfg.checkpoint_every > 0) fs::create_directories(opt.checkpoint_dir);
  train::LossConfig lc;
  lc.lambda = cfg.lambda;
  lc.task_kind = task_kind_of(task);

  fs::create_directories(run_dir);
  auto result = train::train(m, examples, opt, lc);
  train::write_curve_csv(run_dir / "loss.csv", result.curve);
  const auto path = run_dir / "model.ckpt";
  const auto id = m.save(path, {{"variant", std::string(spec.name)},
                                {"task", cfg.task},
                                {"config_hash", hex64(cfg.hash())},
                                {"seed", std::to_string(cfg.seed)}});
  return TrainOutcome{std::move(m), std::move(result), path, id};
}

RunSummary run_variant(const RunConfig& cfg, const Dataset& data, Variant v, const fs::path& run_dir) {
  const auto spec = variant_spec(v);
  const auto task = synth::parse_task(cfg.task);
  RunConfig c = cfg;
  c.variant = std::string(spec.name);
  auto outcome = train_variant(c, data, spec, run_dir);
  const auto preds = predict(outcome.model, data.test, spec, c.max_steps, c.eval_limit);
  write_predictions(run_dir / "predictions.jsonl", preds);

  RunSummary s;
  s.variant = std::string(spec.name);
  s.seed = c.seed;
  s.report = evaluate(task, preds, data.test);
  s.primary_mae = field_mae(s.report, task);
  s.checkpoint_id = outcome.checkpoint_id;
  eval::write_report_csv(run_dir / "metrics.csv", s.report);
  eval::write_report_json(run_dir / "metrics.json", s.report);
  write_manifest(run_dir, c, "run",
                 {{"checkpoint_id", hex64(s.checkpoint_id)}, {"primary_mae", fmt17(s.primary_mae)}});
  return s;
}

// --- comparison ---------------------------------------------------------------

std::vector<CompareRow> compare(const RunConfig& cfg) {
  const auto data = ensure_data(cfg);
  std::vector<CompareRow> rows;
  for (auto v : kAllVariants) {
    const auto spec = variant_spec(v);
    std::vector<RunSummary> runs;
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      RunConfig c = cfg;
      c.seed = cfg.seed + s;
      runs.push_back(run_variant(c, data, v, seed_dir(cfg.out_dir, spec.name, c.seed)));
    }
    std::vector<std::size_t> order(runs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return runs[a].primary_mae < runs[b].primary_mae; });
    CompareRow row;
    row.variant = std::string(spec.name);
    for (const auto& r : runs) row.maes.push_back(r.primary_mae);
    const auto n = order.size();
    row.median_mae = n % 2 ? runs[order[n / 2]].primary_mae
                           : 0.5 * (runs[order[n / 2 - 1]].primary_mae + runs[order[n / 2]].primary_mae);
    row.median_report = runs[order[(n - 1) / 2]].report;
    rows.push_back(std::move(row));
  }
  write_compare(cfg.out_dir, rows, synth::parse_task(cfg.task));
  write_manifest(cfg.out_dir, cfg, "compare", {});
  return rows;
}

void write_compare(const fs::path& dir, const std::vector<CompareRow>& rows, synth::Task task) {
  std::ostringstream csv;
  csv << "variant,seeds,median_MAE,RMSE,normalized_L2";
  for (double t : eval::kDefaultThresholds) csv << ",A_" << t;
  csv << ",per_seed_MAE\n";
  json j = json::array();
  const char* field = task == synth::Task::traj ? "point" : task == synth::Task::speed ? "speed" : "value";
  for (const auto& r : rows) {
    const auto* f = r.median_report.field(field);
    csv << r.variant << ',' << r.maes.size() << ',' << fmt17(r.median_mae) << ',' << fmt17(f ? f->rmse : 0.0) << ','
        << fmt17(f ? f->normalized_l2 : 0.0);
    json acc = json::object();
    for (double t : eval::kDefaultThresholds) {
      double a = 0.0;
      if (f) {
        const auto it = f->threshold_acc.find(t);
        if (it != f->threshold_acc.end()) a = it->second;
      }
      csv << ',' << fmt17(a);
      std::ostringstream key;
      key << "A_" << t;
      acc[key.str()] = a;
    }
    csv << ',';
    for (std::size_t i = 0; i < r.maes.size(); ++i) csv << (i ? ";" : "") << fmt17(r.maes[i]);
    csv << '\n';
    j.push_back({{"variant", r.variant},
                 {"field", field},
                 {"per_seed_mae", r.maes},
                 {"median_mae", r.median_mae},
                 {"rmse", f ? f->rmse : 0.0},
                 {"normalized_l2", f ? f->normalized_l2 : 0.0},
                 {"threshold_acc", acc}});
  }
  write_text(dir / "compare.csv", csv.str());
  write_text(dir / "compare.json", j.dump(2) + "\n");
}

// --- step accounting ------------------------------------------------------------

ScriptedDecoder::ScriptedDecoder(std::vector<int> script, std::vector<double> numbers, const model::Model& embedder,
                                 std::size_t prompt_len)
    : script_(std::move(script)),
      numbers_(std::move(numbers)),
      embedder_(embedder),
      prompt_len_(prompt_len),
      numeric_(embedder.numeric_output()) {}

std::size_t ScriptedDecoder::hidden_size() const { return embedder_.config().d; }
std::size_t ScriptedDecoder::max_seq_len() const { return embedder_.config().max_seq_len; }

std::vector<double> ScriptedDecoder::last_hidden(const ad::Tensor& inputs) const {
  if (inputs.rows() < prompt_len_) throw ContractError("scripted decoder: input shorter than its prompt");
  std::vector<double> h(hidden_size(), 0.0);
  h[0] = static_cast<double>(inputs.rows() - prompt_len_);
  return h;
}

std::vector<double> ScriptedDecoder::lm_logits(std::span<const double> h) const {
  const auto step = static_cast<std::size_t>(h[0]);
  std::vector<double> logits(embedder_.config().vocab_size, 0.0);
  logits[step < script_.size() ? static_cast<std::size_t>(script_[step]) : CharVocab::kEos] = 1.0;
  return logits;
}

double ScriptedDecoder::regress_number(std::span<const double> h) const {
  const auto step = std::min(static_cast<std::size_t>(h[0]), script_.size());
  const auto k = static_cast<std::size_t>(
      std::count(script_.begin(), script_.begin() + static_cast<std::ptrdiff_t>(step), CharVocab::kNumber));
  if (k >= numbers_.size()) throw AlignmentError("scripted decoder: more placeholders than numbers");
  return numbers_[k];
}

std::vector<double> ScriptedDecoder::embed_token(int id) const {
  ad::NoGradGuard guard;
  const auto t = embedder_.embed_token(id);
  return {t.data().begin(), t.data().end()};
}

std::vector<double> ScriptedDecoder::embed_number(double x) const {
  ad::NoGradGuard guard;
  const auto t = embedder_.embed_number(x);
  return {t.data().begin(), t.data().end()};
}

std::vector<int> answer_script(const data::DialogueRecord& record, const VariantSpec& spec) {
  const CharVocab vocab;
  const auto seq = text::tokenize(variant_dialogue(record, spec), vocab);
  const auto cut = last_assistant_marker(seq, record.id) + 1;
  std::vector<int> script;
  for (std::size_t i = cut; i < seq.ids.size(); ++i) {
    script.push_back(seq.ids[i] == text::kNumberTokenIndex ? CharVocab::kNumber : seq.ids[i]);
  }
  if (script.empty() || script.back() != CharVocab::kEos) {
    throw ContractError("answer of '" + record.id + "' does not end with EOS");
  }
  return script;
}

std::vector<BenchRow> bench(const RunConfig& cfg) {
  const auto data = ensure_data(cfg);
  const std::size_t n = cfg.eval_limit == 0 ? data.test.size() : std::min(cfg.eval_limit, data.test.size());
  std::vector<BenchRow> rows;
  for (auto v : kAllVariants) {
    const auto spec = variant_spec(v);
    BenchRow row;
    row.variant = std::string(spec.name);
    const auto ckpt_path = seed_dir(cfg.out_dir, spec.name, cfg.seed) / "model.ckpt";
    std::vector<Prediction> preds;
    if (fs::exists(ckpt_path)) {
      row.source = "checkpoint";
      const auto m = model::Model::load(ckpt_path);
      preds = predict(m, data.test, spec, cfg.max_steps, n);
    } else {
      row.source = "replay";
      model::ModelConfig mc;
      mc.d = cfg.d;
      mc.n_layers = cfg.n_layers;
      mc.n_heads = cfg.n_heads;
      model::Model m(mc, spec.number_encoding, spec.numeric_output, cfg.seed);
      ad::NoGradGuard guard;
      for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto pc = build_prompt(data.test[i], spec);
        const auto input = m.assemble_input(pc.prompt, pc.numbers, pc.obs);
        auto script = answer_script(data.test[i], spec);
        const ScriptedDecoder dec(script, pc.truth, m, input.length());
        const auto res = gen::generate(dec, input, script.size());
        Prediction p;
        p.id = pc.id;
        p.text = res.text;
        p.numbers = res.numbers;
        p.steps = res.step_count;
        p.numeric_steps = res.per_number_steps;
        p.truncated = res.truncated;
        p.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        preds.push_back(std::move(p));
      }
    }
    row.identity_holds = true;
    double ms = 0.0;
    for (const auto& p : preds) {
      const auto nums = predicted_numbers(p);
      ++row.samples;
      row.total_steps += p.steps;
      row.numeric_steps += p.numeric_steps;
      row.numbers += nums.size();
      ms += p.millis;
      if (spec.numeric_output) {
        if (p.numeric_steps != p.numbers.size()) row.identity_holds = false;
      } else if (p.numeric_steps < nums.size()) {
        row.identity_holds = false;
      }
    }
    row.text_steps = row.total_steps - row.numeric_steps;
    row.avg_ms = row.samples ? ms / static_cast<double>(row.samples) : 0.0;
    rows.push_back(std::move(row));
  }
  write_bench(cfg.out_dir, rows);
  return rows;
}

void write_bench(const fs::path& dir, const std::vector<BenchRow>& rows) {
  std::ostringstream csv;
  csv << "variant,source,samples,numbers,total_steps,text_steps,numeric_steps,numeric_steps_per_number,"
         "identity_holds,avg_ms\n";
  json j = json::array();
  for (const auto& r : rows) {
    const double per = r.numbers ? static_cast<double>(r.numeric_steps) / static_cast<double>(r.numbers) : 0.0;
    csv << r.variant << ',' << r.source << ',' << r.samples << ',' << r.numbers << ',' << r.total_steps << ','
        << r.text_steps << ',' << r.numeric_steps << ',' << fmt17(per) << ',' << (r.identity_holds ? 1 : 0) << ','
        << fmt17(r.avg_ms) << '\n';
    j.push_back({{"variant", r.variant},
                 {"source", r.source},
                 {"samples", r.samples},
                 {"numbers", r.numbers},
                 {"total_steps", r.total_steps},
                 {"text_steps", r.text_steps},
                 {"numeric_steps", r.numeric_steps},
                 {"numeric_steps_per_number", per},
                 {"identity_holds", r.identity_holds},
                 {"avg_ms", r.avg_ms}});
  }
  write_text(dir / "bench.csv", csv.str());
  write_text(dir / "bench.json", j.dump(2) + "\n");
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& command,
                    const std::map<std::string, std::string>& extra) {
  json config = json::object();
  std::istringstream lines(cfg.canonical());
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  json j{{"command", command},
         {"config", config},
         {"config_hash", hex64(cfg.hash())},
         {"seed", cfg.seed},
         {"data_dir", cfg.resolved_data_dir().string()}};
  for (const auto& [k, v] : extra) j[k] = v;
  write_text(dir / (command + "_manifest.json"), j.dump(2) + "\n");
}

}  // namespace numlm::pipeline
