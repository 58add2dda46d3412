#include "numlm/dataset.hpp"

#include <fstream>

#include "json.hpp"
#include "numlm/errors.hpp"

namespace numlm::data {

using nlohmann::json;

std::string to_json_line(const DialogueRecord& record) {
  json j;
  j["id"] = record.id;
  j["task"] = record.task;
  j["numbers_policy_id"] = record.policy_id;
  j["turns"] = json::array();
  for (const auto& t : record.turns) j["turns"].push_back({{"role", text::role_name(t.role)}, {"text", t.text}});
  j["obs"] = record.obs;
  if (record.encoded) {
    j["template"] = json::array();
    for (const auto& t : record.encoded->turns) j["template"].push_back(t.tmpl);
    j["numbers"] = record.encoded->numbers;
  }
  return j.dump();
}

DialogueRecord from_json_line(const std::string& line) {
  const json j = json::parse(line);
  DialogueRecord r;
  r.id = j.value("id", "");
  r.task = j.value("task", "");
  r.policy_id = j.value("numbers_policy_id", "none");
  for (const auto& t : j.at("turns")) {
    r.turns.push_back({text::parse_role(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
  }
  if (j.contains("obs")) r.obs = j.at("obs").get<std::vector<std::vector<double>>>();
  if (j.contains("template") && j.contains("numbers")) {
    text::EncodedDialogue enc;
    const auto templates = j.at("template").get<std::vector<std::string>>();
    if (templates.size() != r.turns.size()) throw AlignmentError("template/turn count mismatch");
    for (std::size_t i = 0; i < templates.size(); ++i) enc.turns.push_back({r.turns[i].role, templates[i]});
    enc.numbers = j.at("numbers").get<std::vector<double>>();
    if (enc.placeholder_count() != enc.numbers.size()) {
      throw AlignmentError("encoded record has " + std::to_string(enc.placeholder_count()) + " placeholders but " +
                           std::to_string(enc.numbers.size()) + " numbers");
    }
    r.encoded = std::move(enc);
  }
  return r;
}

std::vector<DialogueRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  std::vector<DialogueRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const AlignmentError& e) {
      throw AlignmentError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<DialogueRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

DialogueRecord with_encoding(DialogueRecord record) {
  record.encoded = text::extract_dialogue(record.turns, text::policy_by_id(record.policy_id));
  return record;
}

}  // namespace numlm::data
