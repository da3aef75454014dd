#pragma once

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rllf/errors.hpp"

namespace rllf {

using TokenSeq = std::vector<int>;

// Word-level vocabulary with five reserved ids. Normalization is lowercasing
// plus punctuation splitting, nothing else, so decode(encode(s)) returns the
// normalized sentence exactly when every token is known.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr int kReserved = 5;

  static const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> names = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
    return names;
  }

  static bool is_punct(char c) {
    return std::strchr(".,:;!?()'\"-", c) != nullptr;
  }

  static std::vector<std::string> split(const std::string& text) {
    std::string spaced;
    spaced.reserve(text.size() * 2);
    for (char c : text) {
      if (is_punct(c)) {
        spaced += ' ';
        spaced += c;
        spaced += ' ';
      } else {
        spaced += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    std::vector<std::string> tokens;
    std::istringstream is(spaced);
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
    return tokens;
  }

  static std::string normalize(const std::string& text) {
    auto tokens = split(text);
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }

  // Every token with frequency >= min_count, ordered by frequency descending
  // then lexicographic, after the reserved block.
  static Vocabulary build(const std::vector<std::string>& corpus, int min_count = 1) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");
    std::map<std::string, int64_t> counts;
    for (const auto& line : corpus)
      for (const auto& tok : split(line)) ++counts[tok];

    std::vector<std::pair<std::string, int64_t>> kept(counts.begin(), counts.end());
    std::erase_if(kept, [&](const auto& kv) { return kv.second < min_count; });
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [tok, n] : kept) {
      (void)n;
      v.id_to_token_.push_back(tok);
      v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()) - 1);
    }
    return v;
  }

  Vocabulary() = default;

  int size() const { return kReserved + static_cast<int>(id_to_token_.size()); }

  int id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second + kReserved;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size())
      throw IndexError("decode: id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(size()));
    if (id < kReserved) return reserved_tokens()[static_cast<size_t>(id)];
    return id_to_token_[static_cast<size_t>(id - kReserved)];
  }

  TokenSeq encode(const std::string& text) const {
    TokenSeq seq;
    for (const auto& tok : split(text)) seq.push_back(id_of(tok));
    return seq;
  }

  std::string decode(const TokenSeq& seq) const {
    std::string out;
    for (size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += token_of(seq[i]);
    }
    return out;
  }

  // <bos> a <sep> b <eos>
  TokenSeq encode_pair(const std::string& a, const std::string& b) const {
    TokenSeq seq{kBos};
    for (const auto& tok : split(a)) seq.push_back(id_of(tok));
    seq.push_back(kSep);
    for (const auto& tok : split(b)) seq.push_back(id_of(tok));
    seq.push_back(kEos);
    return seq;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (int i = 0; i < size(); ++i) out << token_of(i) << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.size() < kReserved) throw DataError("vocabulary file missing reserved tokens");
    for (int i = 0; i < kReserved; ++i)
      if (lines[static_cast<size_t>(i)] != reserved_tokens()[static_cast<size_t>(i)])
        throw DataError("vocabulary file has wrong reserved token at line " + std::to_string(i));
    Vocabulary v;
    for (size_t i = kReserved; i < lines.size(); ++i) {
      v.id_to_token_.push_back(lines[i]);
      v.token_to_id_.emplace(lines[i], static_cast<int>(i) - kReserved);
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;  // learned tokens only
  std::vector<std::string> id_to_token_;
};

}  // namespace rllf
