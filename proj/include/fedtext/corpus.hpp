#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fedtext {

// Token ids 0..3 are reserved; real words start at id 4 in descending
// corpus frequency (ties broken lexicographically).
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kBosId = 1;
inline constexpr int32_t kEosId = 2;
inline constexpr int32_t kOovId = 3;
inline constexpr int32_t kNumSpecialTokens = 4;

struct Vocabulary {
    std::unordered_map<std::string, int32_t> word_to_id;
    std::vector<std::string> id_to_word;  // index == id, includes specials

    int32_t size() const { return static_cast<int32_t>(id_to_word.size()); }

    int32_t id_or_oov(const std::string& word) const {
        auto it = word_to_id.find(word);
        return it == word_to_id.end() ? kOovId : it->second;
    }

    bool contains(const std::string& word) const { return word_to_id.count(word) != 0; }

    const std::string& word(int32_t id) const { return id_to_word.at(static_cast<size_t>(id)); }
};

// Input positions are ids[0..T-1], target positions ids[1..T], so the vector
// holds max_seq_len + 1 ids.
struct TokenSequence {
    std::vector<int32_t> ids;
    int32_t true_length = 0;  // non-pad target positions
};

struct ClientDataset {
    std::string client_id;
    std::vector<TokenSequence> sequences;
    int64_t num_samples = 0;  // == sequences.size(); the aggregation weight
};

// One raw corpus record. Plain-text corpora leave client_id empty.
struct RawSample {
    std::string client_id;
    std::string text;
};

// Reads either the JSON-lines client corpus (objects with exactly
// "client_id" and "text") or plain text with one sample per line. The format
// is sniffed from the first non-empty line.
std::vector<RawSample> load_corpus_samples(const std::string& path);

// Ranks words by whitespace-token frequency after ASCII lowercasing and keeps
// the top num_words. Words colliding with a special-token surface form are
// excluded. Throws on unreadable files and on corpora with no tokens.
Vocabulary build_vocab(const std::string& corpus_path, int num_words);

// Builds a vocabulary from an explicit ranked word list (specials excluded).
Vocabulary make_vocabulary(std::vector<std::string> ranked_words);

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_seq_len);

std::vector<std::string> split_lowercase_tokens(std::string_view text);

std::vector<ClientDataset> load_clients(const std::string& corpus_path, const Vocabulary& vocab,
                                        int max_seq_len, int64_t per_client_cap, uint64_t rng_seed);

std::vector<TokenSequence> build_eval_set(const std::string& corpus_path, const Vocabulary& vocab,
                                          int max_seq_len, int64_t num_samples, uint64_t rng_seed);

// Vocabulary file format: one real word per line; line number + 4 == id.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace fedtext
