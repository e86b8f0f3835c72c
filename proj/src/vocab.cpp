#include "dclp/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "dclp/error.hpp"

namespace dclp {

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
    index_.emplace(tokens_[0], kPad);
    index_.emplace(tokens_[1], kUnk);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
    for (const auto& t : tokens) {
        if (t.empty() || !index_.emplace(t, tokens_.size()).second) {
            throw VocabularyError("duplicate or empty token '" + t + "'");
        }
        tokens_.push_back(t);
    }
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end() || it->second < 2) return kUnk;
    return it->second;
}

std::vector<std::string> normalize_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (unsigned char ch : text) {
        const bool ascii = ch < 0x80;
        if (ascii && (std::isspace(ch) || std::ispunct(ch))) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(ascii ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : corpus)
        for (auto& tok : normalize_tokens(doc)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) tokens.push_back(tok);
    return Vocabulary(tokens);
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, std::size_t max_len) {
    TokenSequence seq;
    seq.ids.assign(max_len, Vocabulary::kPad);
    for (const auto& tok : normalize_tokens(text)) {
        if (seq.valid_len == max_len) break;
        seq.ids[seq.valid_len++] = vocab.id(tok);
    }
    return seq;
}

}  // namespace dclp
