#include "fedtext/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

namespace fedtext {

namespace {

enum class Kind { Int, Uint, Float, Str };

const std::map<std::string, Kind>& schema() {
    static const std::map<std::string, Kind> s = {
        {"model.preset", Kind::Str},
        {"model.vocab_size", Kind::Int},
        {"model.embedding_dim", Kind::Int},
        {"model.lstm_units", Kind::Int},
        {"model.dense_units", Kind::Int},
        {"model.max_seq_len", Kind::Int},
        {"data.corpus", Kind::Str},
        {"data.vocab", Kind::Str},
        {"data.eval_corpus", Kind::Str},
        {"federation.preset", Kind::Str},
        {"federation.clients_per_round", Kind::Int},
        {"federation.batch_size", Kind::Int},
        {"federation.total_rounds", Kind::Int},
        {"federation.local_epochs", Kind::Int},
        {"federation.per_client_cap", Kind::Int},
        {"federation.eval_samples", Kind::Int},
        {"federation.eval_every", Kind::Int},
        {"federation.rng_seed", Kind::Uint},
        {"federation.init_checkpoint", Kind::Str},
        {"optimizer.lr", Kind::Float},
        {"optimizer.beta1", Kind::Float},
        {"optimizer.beta2", Kind::Float},
        {"optimizer.epsilon", Kind::Float},
        {"optimizer.clip_norm", Kind::Float},
        {"embeddings.path", Kind::Str},
        {"pretrain.corpus", Kind::Str},
        {"pretrain.epochs", Kind::Int},
        {"pretrain.batch_size", Kind::Int},
        {"pretrain.rng_seed", Kind::Uint},
    };
    return s;
}

struct RawValue {
    Kind kind;
    int64_t int_val = 0;
    uint64_t uint_val = 0;
    double float_val = 0.0;
    std::string str_val;
};

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

RawValue parse_value(const std::string& key, const std::string& text, size_t line_no) {
    const Kind kind = schema().at(key);
    RawValue v;
    v.kind = kind;
    auto fail = [&](const std::string& why) -> RawValue {
        throw ConfigError("config line " + std::to_string(line_no) + ": key \"" + key + "\": " + why);
    };
    if (kind == Kind::Str) {
        if (text.size() < 2 || text.front() != '"' || text.back() != '"') {
            return fail("expected a double-quoted string");
        }
        v.str_val = text.substr(1, text.size() - 2);
        if (v.str_val.find('"') != std::string::npos) return fail("embedded quotes are not supported");
        return v;
    }
    char* end = nullptr;
    if (kind == Kind::Float) {
        v.float_val = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size() || text.empty()) return fail("expected a number");
        return v;
    }
    errno = 0;
    const long long parsed = std::strtoll(text.c_str(), &end, 10);
    if (end != text.c_str() + text.size() || text.empty() || errno == ERANGE) {
        return fail("expected an integer");
    }
    if (kind == Kind::Uint) {
        if (parsed < 0) return fail("expected a non-negative integer");
        v.uint_val = static_cast<uint64_t>(parsed);
    } else {
        v.int_val = parsed;
    }
    return v;
}

int require_positive(const std::string& key, int64_t value) {
    if (value < 1) throw ConfigError("config key \"" + key + "\" must be >= 1");
    return static_cast<int>(value);
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    std::map<std::string, RawValue> values;
    std::string line;
    std::string section;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t comment = line.find('#');
        if (comment != std::string::npos) line.resize(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            static const std::set<std::string> known = {"model",     "data",       "federation",
                                                        "optimizer", "embeddings", "pretrain"};
            if (!known.count(section)) {
                throw ConfigError("config line " + std::to_string(line_no) + ": unknown section \"" +
                                  section + "\"");
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        if (!schema().count(key)) {
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
        }
        if (values.count(key)) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key \"" + key + "\"");
        }
        values.emplace(key, parse_value(key, trim(line.substr(eq + 1)), line_no));
    }

    ExperimentConfig cfg;
    auto get_str = [&](const char* key) -> std::optional<std::string> {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        return it->second.str_val;
    };
    auto get_int = [&](const char* key) -> std::optional<int64_t> {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        return it->second.int_val;
    };
    auto get_uint = [&](const char* key) -> std::optional<uint64_t> {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        return it->second.uint_val;
    };
    auto get_float = [&](const char* key) -> std::optional<double> {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        return it->second.float_val;
    };

    cfg.model_preset = get_str("model.preset");
    if (cfg.model_preset) {
        // Validate the preset name early for a config-shaped error.
        try {
            ModelConfig::preset(*cfg.model_preset);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key \"model.preset\": ") + e.what());
        }
    }
    if (auto v = get_int("model.vocab_size")) cfg.vocab_size = require_positive("model.vocab_size", *v);
    if (auto v = get_int("model.embedding_dim"))
        cfg.embedding_dim = require_positive("model.embedding_dim", *v);
    if (auto v = get_int("model.lstm_units")) cfg.lstm_units = require_positive("model.lstm_units", *v);
    if (auto v = get_int("model.dense_units")) cfg.dense_units = require_positive("model.dense_units", *v);
    if (auto v = get_int("model.max_seq_len")) cfg.max_seq_len = require_positive("model.max_seq_len", *v);

    cfg.data_corpus = get_str("data.corpus").value_or("");
    cfg.data_vocab = get_str("data.vocab").value_or("");
    cfg.data_eval_corpus = get_str("data.eval_corpus").value_or("");

    cfg.federation_preset = get_str("federation.preset").value_or("");
    if (!cfg.federation_preset.empty()) {
        try {
            cfg.federation = FederatedConfig::preset(cfg.federation_preset);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key \"federation.preset\": ") + e.what());
        }
    }
    if (auto v = get_int("federation.clients_per_round"))
        cfg.federation.clients_per_round = require_positive("federation.clients_per_round", *v);
    if (auto v = get_int("federation.batch_size"))
        cfg.federation.batch_size = require_positive("federation.batch_size", *v);
    if (auto v = get_int("federation.total_rounds"))
        cfg.federation.total_rounds = require_positive("federation.total_rounds", *v);
    if (auto v = get_int("federation.local_epochs")) {
        if (*v != 1) throw ConfigError("config key \"federation.local_epochs\" must be 1");
        cfg.federation.local_epochs = 1;
    }
    if (auto v = get_int("federation.per_client_cap"))
        cfg.federation.per_client_cap = require_positive("federation.per_client_cap", *v);
    if (auto v = get_int("federation.eval_samples"))
        cfg.federation.eval_samples = require_positive("federation.eval_samples", *v);
    if (auto v = get_int("federation.eval_every")) {
        if (*v < 0) throw ConfigError("config key \"federation.eval_every\" must be >= 0");
        cfg.federation.eval_every = static_cast<int>(*v);
    }
    if (auto v = get_uint("federation.rng_seed")) cfg.federation.rng_seed = *v;
    cfg.init_checkpoint = get_str("federation.init_checkpoint").value_or("");

    if (auto v = get_float("optimizer.lr")) cfg.optimizer.lr = *v;
    if (auto v = get_float("optimizer.beta1")) cfg.optimizer.beta1 = *v;
    if (auto v = get_float("optimizer.beta2")) cfg.optimizer.beta2 = *v;
    if (auto v = get_float("optimizer.epsilon")) cfg.optimizer.epsilon = *v;
    if (auto v = get_float("optimizer.clip_norm")) cfg.optimizer.clip_norm = *v;
    try {
        cfg.optimizer.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    cfg.embeddings_path = get_str("embeddings.path").value_or("");

    cfg.pretrain_corpus = get_str("pretrain.corpus").value_or("");
    if (auto v = get_int("pretrain.epochs")) {
        if (*v < 0) throw ConfigError("config key \"pretrain.epochs\" must be >= 0");
        cfg.pretrain_epochs = static_cast<int>(*v);
    }
    if (auto v = get_int("pretrain.batch_size"))
        cfg.pretrain_batch_size = require_positive("pretrain.batch_size", *v);
    if (auto v = get_uint("pretrain.rng_seed")) cfg.pretrain_rng_seed = *v;

    return cfg;
}

ModelConfig ExperimentConfig::resolve_model(int32_t vocab_file_size) const {
    ModelConfig model;
    if (model_preset) {
        model = ModelConfig::preset(*model_preset, max_seq_len);
    } else {
        model.max_seq_len = max_seq_len;
        if (!embedding_dim) throw ConfigError("missing config key \"model.embedding_dim\"");
        if (!lstm_units) throw ConfigError("missing config key \"model.lstm_units\"");
        if (!dense_units) throw ConfigError("missing config key \"model.dense_units\"");
        model.vocab_size = 0;
    }
    if (embedding_dim) model.embedding_dim = *embedding_dim;
    if (lstm_units) model.lstm_units = *lstm_units;
    if (dense_units) model.dense_units = *dense_units;
    if (vocab_size) model.vocab_size = *vocab_size;

    if (vocab_file_size >= 0) {
        if (model.vocab_size == 0) {
            model.vocab_size = vocab_file_size;
        } else if (model.vocab_size != vocab_file_size) {
            throw ConfigError("vocabulary file has " + std::to_string(vocab_file_size) +
                              " entries but the model expects " + std::to_string(model.vocab_size));
        }
    } else if (model.vocab_size == 0) {
        throw ConfigError("missing config key \"model.vocab_size\"");
    }
    return model;
}

}  // namespace fedtext
