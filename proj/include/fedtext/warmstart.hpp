#pragma once

#include <cstdint>
#include <string>

#include "fedtext/corpus.hpp"
#include "fedtext/model.hpp"
#include "fedtext/model_io.hpp"
#include "fedtext/optim.hpp"

namespace fedtext {

// Centralized Adam training over the whole corpus (plain text, one sample per
// line, or the JSON-lines client format pooled across clients). Optimizer
// state persists across epochs. epochs == 0 returns the initial parameters.
ModelParameters central_pretrain(const std::string& corpus_path, const ModelConfig& model_config,
                                 const Vocabulary& vocab, int epochs, int batch_size,
                                 uint64_t rng_seed, const AdamHyper& hyper = {},
                                 const MatD* embedding_init = nullptr);

// Maps pretrained weights onto a model over target_vocab. Embedding rows and
// output-layer columns/bias entries travel by surface word; special-token
// rows copy by position; words absent from source_vocab draw from
// U[-0.05, 0.05]. LSTM and dense tensors copy verbatim.
ModelParameters transfer_weights(const ModelParameters& pretrained, const Vocabulary& source_vocab,
                                 const Vocabulary& target_vocab, uint64_t rng_seed);

}  // namespace fedtext
