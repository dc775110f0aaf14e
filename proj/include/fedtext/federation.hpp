#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedtext/corpus.hpp"
#include "fedtext/metrics.hpp"
#include "fedtext/model.hpp"
#include "fedtext/optim.hpp"

namespace fedtext {

struct FederatedConfig {
    int clients_per_round = 10;
    int batch_size = 16;
    int total_rounds = 800;
    int local_epochs = 1;  // one local pass per round; rounds == epochs
    int64_t per_client_cap = 5000;
    int64_t eval_samples = 20000;
    int eval_every = 1;
    uint64_t rng_seed = 0;
    int num_threads = 1;

    // The adaptive-baseline comparison setup: more, smaller clients.
    static FederatedConfig preset(const std::string& name);
};

struct ClientUpdate {
    ModelParameters params;
    int64_t weight = 0;  // sample count
    std::string client_id;
    double local_loss = 0.0;
    double local_accuracy = 0.0;
    double local_accuracy_no_oov_no_eos = 0.0;
};

// Uniform without replacement within a round, independent across rounds,
// fully determined by (rng_seed, round).
std::vector<size_t> sample_client_indices(size_t pool_size, int k, int round, uint64_t rng_seed);

std::vector<const ClientDataset*> sample_clients(const std::vector<ClientDataset>& pool, int k,
                                                 int round, uint64_t rng_seed);

// One pass over the client's sequences in shuffled order with a fresh Adam
// state. Train metrics come from each batch's pre-update forward pass.
ClientUpdate local_update(const ModelParameters& global_params, const ClientDataset& client,
                          const FederatedConfig& config, const AdamHyper& hyper, int round);

// Elementwise sum(w_i * p_i) / sum(w_i), accumulated in 64-bit in ascending
// client_id order so threading cannot perturb the result.
ModelParameters weighted_average(const std::vector<ClientUpdate>& updates);

struct TrainingResult {
    ModelParameters final_params;
    ModelParameters best_params;  // highest validation accuracy
    int best_round = 0;
    double best_val_accuracy = -1.0;
    std::vector<RoundReport> reports;
};

using RoundCallback = std::function<void(const RoundReport&)>;

// Runs the sample -> local train -> average loop for total_rounds rounds,
// evaluating on eval_set every eval_every rounds. Local updates may run on a
// worker pool; aggregation order is fixed, so results are thread-invariant.
TrainingResult run_training(const ModelConfig& model_config, const FederatedConfig& fed_config,
                            const Vocabulary& vocab, const std::vector<ClientDataset>& clients,
                            const std::vector<TokenSequence>& eval_set, const AdamHyper& hyper,
                            const ModelParameters* initial_params = nullptr,
                            const RoundCallback& on_round = {});

}  // namespace fedtext
