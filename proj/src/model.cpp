#include "fedtext/model.hpp"

namespace fedtext {

ModelConfig ModelConfig::preset(const std::string& name, int32_t max_seq_len) {
    ModelConfig cfg;
    cfg.max_seq_len = max_seq_len;
    if (name == "small") {
        cfg.vocab_size = 10004;
        cfg.embedding_dim = 100;
        cfg.lstm_units = 256;
        cfg.dense_units = 100;
    } else if (name == "large") {
        cfg.vocab_size = 10004;
        cfg.embedding_dim = 300;
        cfg.lstm_units = 512;
        cfg.dense_units = 300;
    } else if (name == "adaptive-baseline") {
        cfg.vocab_size = 10004;
        cfg.embedding_dim = 96;
        cfg.lstm_units = 670;
        cfg.dense_units = 96;
    } else {
        throw std::invalid_argument("unknown model preset: " + name);
    }
    return cfg;
}

}  // namespace fedtext
