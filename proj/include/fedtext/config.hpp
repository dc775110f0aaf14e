#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "fedtext/federation.hpp"
#include "fedtext/model.hpp"
#include "fedtext/optim.hpp"

namespace fedtext {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Declarative experiment configuration. Sections: model, data, federation,
// optimizer, embeddings, pretrain. Presets fill defaults; explicit keys
// override them. Unknown or ill-typed keys are errors.
struct ExperimentConfig {
    // [model]
    std::optional<std::string> model_preset;
    std::optional<int> vocab_size;
    std::optional<int> embedding_dim;
    std::optional<int> lstm_units;
    std::optional<int> dense_units;
    int max_seq_len = 20;

    // [data]
    std::string data_corpus;
    std::string data_vocab;
    std::string data_eval_corpus;  // empty -> fall back to data_corpus

    // [federation] (preset already applied)
    FederatedConfig federation;
    std::string federation_preset;
    std::string init_checkpoint;

    // [optimizer]
    AdamHyper optimizer;

    // [embeddings]
    std::string embeddings_path;

    // [pretrain]
    std::string pretrain_corpus;
    int pretrain_epochs = 50;
    int pretrain_batch_size = 16;
    uint64_t pretrain_rng_seed = 0;

    // Resolves the model section against the vocabulary actually in use.
    // Pass vocab_file_size < 0 when no vocabulary file is involved.
    ModelConfig resolve_model(int32_t vocab_file_size) const;
};

ExperimentConfig load_config(const std::string& path);

}  // namespace fedtext
