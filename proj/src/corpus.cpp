#include "fedtext/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedtext/prng.hpp"

namespace fedtext {

namespace {

const std::array<std::string, 4>& special_surfaces() {
    static const std::array<std::string, 4> surfaces = {"<pad>", "<bos>", "<eos>", "<oov>"};
    return surfaces;
}

bool is_special_surface(const std::string& w) {
    const auto& s = special_surfaces();
    return std::find(s.begin(), s.end(), w) != s.end();
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

}  // namespace

std::vector<std::string> split_lowercase_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const bool ws = ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '\v' || ch == '\f';
        if (ws) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
            current.push_back(ch);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<RawSample> load_corpus_samples(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<RawSample> samples;
    std::string line;
    size_t line_no = 0;
    bool format_known = false;
    bool jsonl = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        if (!format_known) {
            jsonl = line.find_first_not_of(" \t") != std::string::npos &&
                    line[line.find_first_not_of(" \t")] == '{';
            format_known = true;
        }
        if (!jsonl) {
            samples.push_back({"", line});
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        if (!obj.is_object() || obj.size() != 2 || !obj.contains("client_id") ||
            !obj.contains("text") || !obj["client_id"].is_string() || !obj["text"].is_string()) {
            throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                     ": expected an object with exactly string fields"
                                     " \"client_id\" and \"text\"");
        }
        samples.push_back({obj["client_id"].get<std::string>(), obj["text"].get<std::string>()});
    }
    return samples;
}

Vocabulary make_vocabulary(std::vector<std::string> ranked_words) {
    Vocabulary vocab;
    vocab.id_to_word.reserve(ranked_words.size() + kNumSpecialTokens);
    for (const auto& s : special_surfaces()) vocab.id_to_word.push_back(s);
    for (auto& w : ranked_words) {
        if (is_special_surface(w)) throw std::invalid_argument("word collides with special token: " + w);
        vocab.id_to_word.push_back(std::move(w));
    }
    for (int32_t id = 0; id < vocab.size(); ++id) {
        auto [it, inserted] = vocab.word_to_id.emplace(vocab.id_to_word[id], id);
        (void)it;
        if (!inserted) throw std::invalid_argument("duplicate word in vocabulary: " + vocab.id_to_word[id]);
    }
    return vocab;
}

Vocabulary build_vocab(const std::string& corpus_path, int num_words) {
    if (num_words < 1) throw std::invalid_argument("num_words must be >= 1");
    const auto samples = load_corpus_samples(corpus_path);
    std::unordered_map<std::string, int64_t> counts;
    for (const auto& sample : samples) {
        for (auto& tok : split_lowercase_tokens(sample.text)) {
            if (is_special_surface(tok)) continue;
            ++counts[tok];
        }
    }
    if (counts.empty()) throw std::runtime_error("empty corpus: " + corpus_path);

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<size_t>(num_words)) ranked.resize(static_cast<size_t>(num_words));

    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (auto& [w, c] : ranked) {
        (void)c;
        words.push_back(std::move(w));
    }
    return make_vocabulary(std::move(words));
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_seq_len) {
    if (max_seq_len < 1) throw std::invalid_argument("max_seq_len must be >= 1");
    const auto tokens = split_lowercase_tokens(text);
    const size_t total = static_cast<size_t>(max_seq_len) + 1;

    TokenSequence seq;
    seq.ids.reserve(total);
    seq.ids.push_back(kBosId);
    for (const auto& tok : tokens) {
        if (seq.ids.size() == total) break;
        seq.ids.push_back(vocab.id_or_oov(tok));
    }
    if (seq.ids.size() < total) seq.ids.push_back(kEosId);  // dropped when truncated
    seq.true_length = static_cast<int32_t>(seq.ids.size() - 1);
    seq.ids.resize(total, kPadId);
    return seq;
}

std::vector<ClientDataset> load_clients(const std::string& corpus_path, const Vocabulary& vocab,
                                        int max_seq_len, int64_t per_client_cap, uint64_t rng_seed) {
    if (per_client_cap < 1) throw std::invalid_argument("per_client_cap must be >= 1");
    const auto samples = load_corpus_samples(corpus_path);

    // std::map keeps clients in ascending client_id order.
    std::map<std::string, std::vector<TokenSequence>> by_client;
    for (const auto& sample : samples) {
        by_client[sample.client_id].push_back(tokenize(sample.text, vocab, max_seq_len));
    }

    std::vector<ClientDataset> clients;
    clients.reserve(by_client.size());
    for (auto& [client_id, sequences] : by_client) {
        ClientDataset ds;
        ds.client_id = client_id;
        if (sequences.size() > static_cast<size_t>(per_client_cap)) {
            Rng rng(derive_seed(rng_seed, "client_cap", 0, client_id));
            auto picked = sample_without_replacement(sequences.size(),
                                                     static_cast<size_t>(per_client_cap), rng);
            std::sort(picked.begin(), picked.end());  // keep corpus order
            ds.sequences.reserve(picked.size());
            for (size_t idx : picked) ds.sequences.push_back(std::move(sequences[idx]));
        } else {
            ds.sequences = std::move(sequences);
        }
        ds.num_samples = static_cast<int64_t>(ds.sequences.size());
        clients.push_back(std::move(ds));
    }
    return clients;
}

std::vector<TokenSequence> build_eval_set(const std::string& corpus_path, const Vocabulary& vocab,
                                          int max_seq_len, int64_t num_samples, uint64_t rng_seed) {
    if (num_samples < 1) throw std::invalid_argument("num_samples must be >= 1");
    const auto samples = load_corpus_samples(corpus_path);

    std::map<std::string, std::vector<const RawSample*>> by_client;
    for (const auto& sample : samples) by_client[sample.client_id].push_back(&sample);

    std::vector<const RawSample*> pooled;
    pooled.reserve(samples.size());
    for (auto& [id, list] : by_client) {
        (void)id;
        pooled.insert(pooled.end(), list.begin(), list.end());
    }

    std::vector<const RawSample*> chosen;
    if (pooled.size() <= static_cast<size_t>(num_samples)) {
        if (pooled.size() < static_cast<size_t>(num_samples)) {
            std::cerr << "warning: requested " << num_samples << " eval samples but corpus has only "
                      << pooled.size() << "; using all\n";
        }
        chosen = std::move(pooled);
    } else {
        Rng rng(derive_seed(rng_seed, "eval_set"));
        auto picked = sample_without_replacement(pooled.size(), static_cast<size_t>(num_samples), rng);
        std::sort(picked.begin(), picked.end());
        chosen.reserve(picked.size());
        for (size_t idx : picked) chosen.push_back(pooled[idx]);
    }

    std::vector<TokenSequence> eval_set;
    eval_set.reserve(chosen.size());
    for (const RawSample* s : chosen) eval_set.push_back(tokenize(s->text, vocab, max_seq_len));
    return eval_set;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (int32_t id = kNumSpecialTokens; id < vocab.size(); ++id) {
        out << vocab.id_to_word[static_cast<size_t>(id)] << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
            line.pop_back();
        }
        if (line.empty()) continue;
        words.push_back(line);
    }
    if (words.empty()) throw std::runtime_error("empty vocabulary file: " + path);
    return make_vocabulary(std::move(words));
}

}  // namespace fedtext
