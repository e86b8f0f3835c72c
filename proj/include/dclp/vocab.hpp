#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace dclp {

/// Word-level vocabulary. Ids 0 and 1 are reserved for padding and unknown
/// words; real tokens start at 2.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;

    Vocabulary();
    /// Tokens in id order starting at id 2.
    explicit Vocabulary(const std::vector<std::string>& tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    /// Real tokens (id >= 2) in id order.
    std::vector<std::string> words() const { return {tokens_.begin() + 2, tokens_.end()}; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct TokenSequence {
    std::vector<std::size_t> ids;  // padded to max_len
    std::size_t valid_len = 0;
};

/// Lowercases ASCII, turns ASCII punctuation into spaces and splits on whitespace.
std::vector<std::string> normalize_tokens(const std::string& text);

/// Ids by descending frequency, ties lexicographic; tokens below min_freq are left out.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, std::size_t max_len);

}  // namespace dclp
