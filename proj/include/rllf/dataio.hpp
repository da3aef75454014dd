#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rllf/errors.hpp"
#include "rllf/hash.hpp"

namespace rllf {

// The universal dataset row. `provenance` names the generating oracle;
// `source` is the oracle's structured replay record (present on generated
// data, absent on externally converted corpora).
struct LabeledPair {
  std::string sentence_a;
  std::string sentence_b;
  int label = 0;
  std::string provenance;
  std::string source;

  bool operator==(const LabeledPair&) const = default;
};

inline std::string pair_to_json(const LabeledPair& p) {
  nlohmann::ordered_json j;
  j["sentence_a"] = p.sentence_a;
  j["sentence_b"] = p.sentence_b;
  j["label"] = p.label;
  j["provenance"] = p.provenance;
  if (!p.source.empty()) j["source"] = nlohmann::ordered_json::parse(p.source);
  return j.dump();
}

inline LabeledPair pair_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad dataset record: ") + e.what());
  }
  LabeledPair p;
  try {
    p.sentence_a = j.at("sentence_a").get<std::string>();
    p.sentence_b = j.at("sentence_b").get<std::string>();
    p.label = j.at("label").get<int>();
    p.provenance = j.at("provenance").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset record missing field: ") + e.what());
  }
  if (p.label != 0 && p.label != 1)
    throw DataError("dataset record label must be 0 or 1, got " + std::to_string(p.label));
  if (j.contains("source")) p.source = j["source"].dump();
  return p;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp.string());
    out << content;
    if (!out.good()) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline void save_pairs(const std::string& path, const std::vector<LabeledPair>& pairs) {
  std::string content;
  for (const auto& p : pairs) {
    content += pair_to_json(p);
    content += '\n';
  }
  write_text_atomic(path, content);
}

inline std::vector<LabeledPair> load_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset file: " + path);
  std::vector<LabeledPair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    pairs.push_back(pair_from_json(line));
  }
  return pairs;
}

inline void save_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string content;
  for (const auto& l : lines) {
    content += l;
    content += '\n';
  }
  write_text_atomic(path, content);
}

inline std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace rllf
