#include "fedtext/federation.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "fedtext/prng.hpp"

namespace fedtext {

FederatedConfig FederatedConfig::preset(const std::string& name) {
    FederatedConfig cfg;
    if (name == "adaptive-baseline") {
        cfg.clients_per_round = 50;
        cfg.per_client_cap = 128;
        cfg.total_rounds = 1500;
        cfg.eval_samples = 10000;
    } else {
        throw std::invalid_argument("unknown federation preset: " + name);
    }
    return cfg;
}

std::vector<size_t> sample_client_indices(size_t pool_size, int k, int round, uint64_t rng_seed) {
    if (k < 1 || static_cast<size_t>(k) > pool_size) {
        throw std::invalid_argument("clients_per_round out of range for pool of size " +
                                    std::to_string(pool_size));
    }
    Rng rng(derive_seed(rng_seed, "sample_clients", static_cast<uint64_t>(round)));
    return sample_without_replacement(pool_size, static_cast<size_t>(k), rng);
}

std::vector<const ClientDataset*> sample_clients(const std::vector<ClientDataset>& pool, int k,
                                                 int round, uint64_t rng_seed) {
    std::vector<const ClientDataset*> picked;
    for (size_t idx : sample_client_indices(pool.size(), k, round, rng_seed)) {
        picked.push_back(&pool[idx]);
    }
    return picked;
}

ClientUpdate local_update(const ModelParameters& global_params, const ClientDataset& client,
                          const FederatedConfig& config, const AdamHyper& hyper, int round) {
    if (client.sequences.empty()) throw std::invalid_argument("empty client dataset");
    hyper.validate();

    ClientUpdate update;
    update.client_id = client.client_id;
    update.weight = client.num_samples;
    update.params = global_params;

    ModelConfig cfg;
    cfg.vocab_size = global_params.vocab_size();
    cfg.embedding_dim = global_params.embedding_dim();
    cfg.lstm_units = global_params.lstm_units();
    cfg.dense_units = global_params.dense_units();
    AdamState state = adam_init<float>(cfg);

    std::vector<size_t> order(client.sequences.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.rng_seed, "local_update", static_cast<uint64_t>(round),
                        client.client_id));
    shuffle(order, rng);

    PositionCounts counts;
    IdMatrix inputs, targets;
    MaskMatrix mask;
    std::vector<TokenSequence> batch;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
        const size_t count =
            std::min(static_cast<size_t>(config.batch_size), order.size() - start);
        batch.clear();
        for (size_t i = 0; i < count; ++i) batch.push_back(client.sequences[order[start + i]]);
        make_batch(batch, inputs, targets, mask);

        const ForwardCache cache = forward(update.params, inputs);
        counts.add(count_positions(cache.logits, targets));

        auto back = backward(update.params, cache, inputs, targets, mask);
        if (hyper.clip_norm > 0.0) clip_global_norm(back.grads, hyper.clip_norm);
        adam_step(update.params, state, back.grads, hyper);
    }

    const EvalResult local = counts.to_result();
    update.local_loss = local.loss;
    update.local_accuracy = local.accuracy;
    update.local_accuracy_no_oov_no_eos = local.accuracy_no_oov_no_eos;
    return update;
}

ModelParameters weighted_average(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw std::invalid_argument("weighted_average over empty update list");

    std::vector<const ClientUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) {
        if (u.weight < 1) throw std::invalid_argument("client update weight must be >= 1");
        ordered.push_back(&u);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

    const ModelParameters& shape = ordered.front()->params;
    ModelParametersT<double> acc = shape.cast<double>();
    double total_weight = static_cast<double>(ordered.front()->weight);
    for_each_tensor(acc, [&](const char*, double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] *= total_weight;
    });

    for (size_t u = 1; u < ordered.size(); ++u) {
        const double w = static_cast<double>(ordered[u]->weight);
        total_weight += w;
        std::vector<std::pair<const float*, size_t>> blocks;
        for_each_tensor(ordered[u]->params, [&](const char*, const float* data, size_t n) {
            blocks.emplace_back(data, n);
        });
        size_t idx = 0;
        for_each_tensor(acc, [&](const char*, double* data, size_t n) {
            if (blocks[idx].second != n) throw std::invalid_argument("update shapes are inconsistent");
            const float* src = blocks[idx].first;
            for (size_t i = 0; i < n; ++i) data[i] += w * static_cast<double>(src[i]);
            ++idx;
        });
    }

    for_each_tensor(acc, [&](const char*, double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] /= total_weight;
    });
    return acc.cast<float>();
}

TrainingResult run_training(const ModelConfig& model_config, const FederatedConfig& fed_config,
                            const Vocabulary& vocab, const std::vector<ClientDataset>& clients,
                            const std::vector<TokenSequence>& eval_set, const AdamHyper& hyper,
                            const ModelParameters* initial_params, const RoundCallback& on_round) {
    if (fed_config.local_epochs != 1) {
        throw std::invalid_argument("local_epochs is fixed at 1");
    }
    if (vocab.size() != model_config.vocab_size) {
        throw std::invalid_argument("vocabulary size does not match model config");
    }
    if (clients.empty()) throw std::invalid_argument("no client datasets");
    hyper.validate();

    TrainingResult result;
    ModelParameters global =
        initial_params != nullptr
            ? *initial_params
            : init_params<float>(model_config, derive_seed(fed_config.rng_seed, "init"));
    if (global.vocab_size() != model_config.vocab_size ||
        global.embedding_dim() != model_config.embedding_dim ||
        global.lstm_units() != model_config.lstm_units ||
        global.dense_units() != model_config.dense_units) {
        throw std::invalid_argument("initial parameters do not match model config");
    }

    const int threads = std::max(1, fed_config.num_threads);
    for (int round = 1; round <= fed_config.total_rounds; ++round) {
        const auto sampled =
            sample_clients(clients, fed_config.clients_per_round, round, fed_config.rng_seed);

        std::vector<std::optional<ClientUpdate>> slots(sampled.size());
        std::atomic<size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&]() {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= sampled.size()) return;
                const ClientDataset* client = sampled[i];
                if (client->sequences.empty()) {
                    std::cerr << "warning: round " << round << ": client " << client->client_id
                              << " has no samples; skipping\n";
                    continue;
                }
                try {
                    slots[i] = local_update(global, *client, fed_config, hyper, round);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        if (threads == 1 || sampled.size() == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            const int n = std::min<int>(threads, static_cast<int>(sampled.size()));
            pool.reserve(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (failure) std::rethrow_exception(failure);

        std::vector<ClientUpdate> updates;
        updates.reserve(slots.size());
        for (auto& slot : slots) {
            if (slot.has_value()) updates.push_back(std::move(*slot));
        }
        if (updates.empty()) {
            throw std::runtime_error("round " + std::to_string(round) +
                                     ": no sampled client produced an update");
        }

        RoundReport report;
        report.round = round;
        double weight_sum = 0.0;
        for (const auto& u : updates) {
            const double w = static_cast<double>(u.weight);
            weight_sum += w;
            report.train_loss += w * u.local_loss;
            report.train_accuracy += w * u.local_accuracy;
            report.train_accuracy_no_oov_no_eos += w * u.local_accuracy_no_oov_no_eos;
        }
        report.train_loss /= weight_sum;
        report.train_accuracy /= weight_sum;
        report.train_accuracy_no_oov_no_eos /= weight_sum;
        for (const auto* c : sampled) report.sampled_client_ids.push_back(c->client_id);

        global = weighted_average(updates);

        if (!eval_set.empty() && fed_config.eval_every > 0 &&
            (round % fed_config.eval_every == 0 || round == fed_config.total_rounds)) {
            report.val = evaluate(global, eval_set, fed_config.batch_size);
            report.has_val = true;
            if (report.val.accuracy > result.best_val_accuracy) {
                result.best_val_accuracy = report.val.accuracy;
                result.best_round = round;
                result.best_params = global;
            }
        }
        if (on_round) on_round(report);
        result.reports.push_back(std::move(report));
    }

    result.final_params = std::move(global);
    if (result.best_round == 0) {
        result.best_params = result.final_params;
        result.best_round = fed_config.total_rounds;
    }
    return result;
}

}  // namespace fedtext
