#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace clh3g {

// Whitespace/punctuation tokenizer: runs of non-space, non-punctuation
// bytes form words; each ASCII punctuation byte is its own token.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

// Frequency-capped token map with dense ids. Reserved ids come first and
// are stable across builds; ties in frequency break lexicographically.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);  // reserved + tokens

  static Vocabulary build(const std::vector<std::pair<std::string, long>>& counts,
                          size_t max_size);

  size_t size() const { return tokens_.size(); }
  int id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace clh3g
