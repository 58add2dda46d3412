#pragma once

// JSON Lines dialogue files. One record per line:
//   {"id": "...", "task": "speed", "numbers_policy_id": "drive-v1",
//    "turns": [{"role": "user", "text": "..."}, ...],
//    "obs": [[...], ...]}
// The encoded form additionally carries "template" (one string per turn)
// and "numbers".

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "numlm/numtext.hpp"

namespace numlm::data {

struct DialogueRecord {
  std::string id;
  std::string task;
  std::string policy_id = "none";
  std::vector<text::Turn> turns;
  std::vector<std::vector<double>> obs;
  std::optional<text::EncodedDialogue> encoded;
};

std::string to_json_line(const DialogueRecord& record);
DialogueRecord from_json_line(const std::string& line);

// Parse failures report the 1-based line number.
std::vector<DialogueRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<DialogueRecord>& records);

// Runs extraction with the record's policy and stores the encoded form.
DialogueRecord with_encoding(DialogueRecord record);

}  // namespace numlm::data
