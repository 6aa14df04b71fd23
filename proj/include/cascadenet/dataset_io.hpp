#pragma once

// JSON Lines cascade datasets and the on-disk dataset directory layout:
//   global.tsv, train.jsonl, val.jsonl, test.jsonl, meta.json

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cascadenet/cascade_gen.hpp"
#include "cascadenet/graph.hpp"

namespace cascadenet {

nlohmann::json record_to_json(const CascadeRecord& r);
// Validates ids, duplicate adopters and roots; fills `y` from `growth` when absent.
CascadeRecord record_from_json(const nlohmann::json& j);

void write_jsonl(const std::vector<CascadeRecord>& records, std::ostream& out);
std::vector<CascadeRecord> read_jsonl(std::istream& in);
std::vector<CascadeRecord> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::vector<CascadeRecord>& records, const std::filesystem::path& path);

struct Dataset {
  GlobalGraph graph;
  std::vector<CascadeRecord> train;
  std::vector<CascadeRecord> val;
  std::vector<CascadeRecord> test;
  nlohmann::json meta;

  const std::vector<CascadeRecord>& split(const std::string& name) const;
};

// Throws ParseError on missing or malformed files.
Dataset load_dataset(const std::filesystem::path& dir);

void save_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cascadenet
