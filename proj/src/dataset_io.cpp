#include "cascadenet/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "cascadenet/errors.hpp"

namespace cascadenet {

using nlohmann::json;

json record_to_json(const CascadeRecord& r) {
  json j;
  j["id"] = r.id;
  j["roots"] = r.roots;
  j["adopters"] = r.adopters;
  json growth = json::object();
  for (const auto& [h, ds] : r.growth) growth[std::to_string(h)] = ds;
  json y = json::object();
  for (const auto& [h, v] : r.y) y[std::to_string(h)] = v;
  j["growth"] = std::move(growth);
  j["y"] = std::move(y);
  return j;
}

CascadeRecord record_from_json(const json& j) {
  CascadeRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.roots = j.at("roots").get<std::vector<NodeId>>();
    r.adopters = j.at("adopters").get<std::vector<NodeId>>();
    for (const auto& [k, v] : j.at("growth").items()) r.growth[std::stoi(k)] = v.get<std::int64_t>();
    if (j.contains("y")) {
      for (const auto& [k, v] : j.at("y").items()) r.y[std::stoi(k)] = v.get<double>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad cascade record: ") + e.what(), 0);
  } catch (const std::logic_error& e) {
    throw ParseError(std::string("bad horizon key: ") + e.what(), 0);
  }
  if (r.adopters.empty()) throw ParseError("cascade " + r.id + " has no adopters", 0);
  std::unordered_set<NodeId> seen(r.adopters.begin(), r.adopters.end());
  if (seen.size() != r.adopters.size()) throw ParseError("cascade " + r.id + " has duplicate adopters", 0);
  for (NodeId root : r.roots) {
    if (!seen.contains(root)) throw ParseError("cascade " + r.id + " has a root that is not an adopter", 0);
  }
  for (const auto& [h, ds] : r.growth) {
    if (ds < 0) throw ParseError("cascade " + r.id + " has negative growth", 0);
    const double expect = scale_label(ds);
    auto it = r.y.find(h);
    if (it == r.y.end()) {
      r.y[h] = expect;
    } else if (std::abs(it->second - expect) > 1e-9) {
      throw ParseError("cascade " + r.id + " label disagrees with log2(growth + 1)", 0);
    }
  }
  return r;
}

void write_jsonl(const std::vector<CascadeRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<CascadeRecord> read_jsonl(std::istream& in) {
  std::vector<CascadeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

std::vector<CascadeRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return read_jsonl(in);
}

void save_jsonl(const std::vector<CascadeRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_jsonl(records, out);
}

void save_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

const std::vector<CascadeRecord>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw DomainError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.graph = load_global_graph(dir / "global.tsv");
  d.train = load_jsonl(dir / "train.jsonl");
  d.val = load_jsonl(dir / "val.jsonl");
  d.test = load_jsonl(dir / "test.jsonl");
  if (std::ifstream meta(dir / "meta.json"); meta) {
    try {
      d.meta = json::parse(meta);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("meta.json: ") + e.what(), 0);
    }
  }
  for (const auto* split : {&d.train, &d.val, &d.test}) {
    for (const auto& r : *split) {
      for (NodeId v : r.adopters) {
        if (!d.graph.contains(v)) throw ParseError("cascade " + r.id + " references node outside global graph", 0);
      }
    }
  }
  return d;
}

}  // namespace cascadenet
