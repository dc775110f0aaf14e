// fedtext: federated next-word-prediction experiments at desk scale.
//
// Subcommands cover the full pipeline: vocabulary building, embedding
// reduction, central pretraining, federated training, and evaluation.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedtext/config.hpp"
#include "fedtext/corpus.hpp"
#include "fedtext/embeddings.hpp"
#include "fedtext/federation.hpp"
#include "fedtext/metrics.hpp"
#include "fedtext/model_io.hpp"
#include "fedtext/prng.hpp"
#include "fedtext/warmstart.hpp"

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

int threads_from_env() {
    const char* env = std::getenv("FEDTEXT_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

json optimizer_json(const fedtext::AdamHyper& h) {
    return {{"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"epsilon", h.epsilon}};
}

json model_json(const fedtext::ModelConfig& m) {
    return {{"vocab_size", m.vocab_size},
            {"embedding_dim", m.embedding_dim},
            {"lstm_units", m.lstm_units},
            {"dense_units", m.dense_units},
            {"max_seq_len", m.max_seq_len}};
}

json federation_json(const fedtext::FederatedConfig& f) {
    return {{"clients_per_round", f.clients_per_round},
            {"batch_size", f.batch_size},
            {"total_rounds", f.total_rounds},
            {"local_epochs", f.local_epochs},
            {"per_client_cap", f.per_client_cap},
            {"eval_samples", f.eval_samples},
            {"eval_every", f.eval_every},
            {"rng_seed", f.rng_seed}};
}

// The manifest pins every resolved setting so a run can be reproduced
// exactly from it.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, json resolved, json outputs,
                    json final_metrics, uint64_t seed) {
    json manifest;
    manifest["command"] = command;
    manifest["config_path"] = config_path;
    manifest["resolved_config"] = std::move(resolved);
    char hash[20];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(
                      fedtext::fnv1a64(manifest["resolved_config"].dump())));
    manifest["config_hash"] = hash;
    manifest["rng_seed"] = seed;
    manifest["outputs"] = std::move(outputs);
    manifest["final_metrics"] = std::move(final_metrics);

    std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir);
    out << manifest.dump(2) << '\n';
}

json eval_json(const fedtext::EvalResult& r) {
    return {{"accuracy", r.accuracy},
            {"accuracy_no_oov_no_eos", r.accuracy_no_oov_no_eos},
            {"loss", r.loss},
            {"positions_all", r.positions_all},
            {"positions_no_oov_no_eos", r.positions_no_oov_no_eos}};
}

int cmd_build_vocab(const std::string& corpus, int num_words, const std::string& out) {
    const fedtext::Vocabulary vocab = fedtext::build_vocab(corpus, num_words);
    fedtext::save_vocab(vocab, out);
    std::cout << "vocab_size " << vocab.size() << "\n";
    return 0;
}

int cmd_reduce_embeddings(const std::string& embeddings_path, const std::string& vocab_path,
                          const std::string& method, int dim, int ppa_d, uint64_t seed,
                          const std::string& out) {
    const fedtext::Vocabulary vocab = fedtext::load_vocab(vocab_path);
    const fedtext::EmbeddingTable table = fedtext::load_embedding_table(embeddings_path);
    const fedtext::AlignedEmbedding aligned =
        fedtext::build_embedding_matrix(vocab, table, table.dim(), seed);

    fedtext::MatD reduced;
    if (method == "pca") {
        if (dim < 1) throw fedtext::ConfigError("--dim is required for method pca");
        reduced = fedtext::pca_reduce(aligned.values, dim);
    } else if (method == "ppa") {
        if (dim > 0 && dim != table.dim()) {
            throw fedtext::ConfigError("method ppa keeps the input dimension " +
                                       std::to_string(table.dim()));
        }
        reduced = fedtext::ppa(aligned.values, ppa_d);
    } else {  // pp_pca_pp, enforced by CLI11
        if (dim < 1) throw fedtext::ConfigError("--dim is required for method pp_pca_pp");
        reduced = fedtext::pp_pca_pp(aligned.values, dim, ppa_d);
    }

    // Every vocabulary row is written, special tokens included, so the file
    // carries the post-processed matrix exactly. Special rows are re-drawn at
    // model-init time regardless.
    fedtext::save_embedding_table(vocab.id_to_word, reduced, out);

    std::cout << "coverage " << fmt(aligned.coverage) << "\n";
    std::cout << "output_dim " << reduced.cols() << "\n";
    return 0;
}

// Loads the optional pretrained-embedding table and aligns it to the vocab.
std::optional<fedtext::MatD> load_embedding_init(const fedtext::ExperimentConfig& cfg,
                                                 const fedtext::Vocabulary& vocab,
                                                 const fedtext::ModelConfig& model,
                                                 uint64_t seed) {
    if (cfg.embeddings_path.empty()) return std::nullopt;
    const auto table = fedtext::load_embedding_table(cfg.embeddings_path);
    if (table.dim() != model.embedding_dim) {
        throw fedtext::ConfigError("embeddings.path has dim " + std::to_string(table.dim()) +
                                   " but model.embedding_dim is " +
                                   std::to_string(model.embedding_dim));
    }
    const auto aligned = fedtext::build_embedding_matrix(vocab, table, table.dim(), seed);
    std::cerr << "embedding coverage: " << fmt(aligned.coverage) << "\n";
    return aligned.values;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir) {
    const fedtext::ExperimentConfig cfg = fedtext::load_config(config_path);
    if (cfg.pretrain_corpus.empty()) throw fedtext::ConfigError("missing config key \"pretrain.corpus\"");
    if (cfg.data_vocab.empty()) throw fedtext::ConfigError("missing config key \"data.vocab\"");

    const fedtext::Vocabulary vocab = fedtext::load_vocab(cfg.data_vocab);
    const fedtext::ModelConfig model = cfg.resolve_model(vocab.size());
    const auto embedding_init =
        load_embedding_init(cfg, vocab, model, fedtext::derive_seed(cfg.pretrain_rng_seed, "embed"));

    std::filesystem::create_directories(out_dir);
    const fedtext::ModelParameters params = fedtext::central_pretrain(
        cfg.pretrain_corpus, model, vocab, cfg.pretrain_epochs, cfg.pretrain_batch_size,
        cfg.pretrain_rng_seed, cfg.optimizer, embedding_init ? &*embedding_init : nullptr);

    const std::string ckpt = (std::filesystem::path(out_dir) / "pretrained.ckpt").string();
    fedtext::save_checkpoint(params, ckpt);

    // Final metrics on the pretraining corpus itself.
    std::vector<fedtext::TokenSequence> eval_seqs;
    for (const auto& s : fedtext::load_corpus_samples(cfg.pretrain_corpus)) {
        eval_seqs.push_back(fedtext::tokenize(s.text, vocab, model.max_seq_len));
    }
    const fedtext::EvalResult metrics =
        fedtext::evaluate(params, eval_seqs, cfg.pretrain_batch_size);

    json resolved;
    resolved["model"] = model_json(model);
    resolved["optimizer"] = optimizer_json(cfg.optimizer);
    resolved["pretrain"] = {{"corpus", cfg.pretrain_corpus},
                            {"epochs", cfg.pretrain_epochs},
                            {"batch_size", cfg.pretrain_batch_size},
                            {"rng_seed", cfg.pretrain_rng_seed}};
    resolved["data"] = {{"vocab", cfg.data_vocab}};
    resolved["embeddings"] = {{"path", cfg.embeddings_path}};
    write_manifest(out_dir, "pretrain", config_path, resolved, {{"checkpoint", ckpt}},
                   eval_json(metrics), cfg.pretrain_rng_seed);

    std::cout << "checkpoint " << ckpt << "\n";
    std::cout << "train_corpus_loss " << fmt(metrics.loss) << "\n";
    std::cout << "train_corpus_accuracy " << fmt(metrics.accuracy) << "\n";
    return 0;
}

int cmd_federate(const std::string& config_path, const std::string& out_dir, int threads) {
    const fedtext::ExperimentConfig cfg = fedtext::load_config(config_path);
    if (cfg.data_corpus.empty()) throw fedtext::ConfigError("missing config key \"data.corpus\"");
    if (cfg.data_vocab.empty()) throw fedtext::ConfigError("missing config key \"data.vocab\"");
    if (!cfg.init_checkpoint.empty() && !cfg.embeddings_path.empty()) {
        throw fedtext::ConfigError(
            "federation.init_checkpoint and embeddings.path are mutually exclusive");
    }

    const fedtext::Vocabulary vocab = fedtext::load_vocab(cfg.data_vocab);
    const fedtext::ModelConfig model = cfg.resolve_model(vocab.size());
    fedtext::FederatedConfig fed = cfg.federation;
    fed.num_threads = threads;

    const auto clients = fedtext::load_clients(cfg.data_corpus, vocab, model.max_seq_len,
                                               fed.per_client_cap, fed.rng_seed);
    const std::string eval_corpus =
        cfg.data_eval_corpus.empty() ? cfg.data_corpus : cfg.data_eval_corpus;
    const auto eval_set = fedtext::build_eval_set(eval_corpus, vocab, model.max_seq_len,
                                                  fed.eval_samples, fed.rng_seed);

    std::optional<fedtext::ModelParameters> initial;
    if (!cfg.init_checkpoint.empty()) {
        initial = fedtext::load_checkpoint(cfg.init_checkpoint);
    } else if (const auto embedding_init = load_embedding_init(
                   cfg, vocab, model, fedtext::derive_seed(fed.rng_seed, "embed"))) {
        initial = fedtext::init_params<float>(model, fedtext::derive_seed(fed.rng_seed, "init"),
                                              &*embedding_init);
    }

    std::filesystem::create_directories(out_dir);
    const std::string csv_path = (std::filesystem::path(out_dir) / "curves.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path);
    csv << "round,split,loss,accuracy,accuracy_no_oov_no_eos\n";

    const auto on_round = [&](const fedtext::RoundReport& r) {
        csv << r.round << ",train," << fmt(r.train_loss) << ',' << fmt(r.train_accuracy) << ','
            << fmt(r.train_accuracy_no_oov_no_eos) << '\n';
        if (r.has_val) {
            csv << r.round << ",val," << fmt(r.val.loss) << ',' << fmt(r.val.accuracy) << ','
                << fmt(r.val.accuracy_no_oov_no_eos) << '\n';
        }
        std::cerr << "round " << r.round << "/" << fed.total_rounds << " train_loss "
                  << fmt(r.train_loss);
        if (r.has_val) {
            std::cerr << " val_loss " << fmt(r.val.loss) << " val_acc " << fmt(r.val.accuracy);
        }
        std::cerr << "\n";
    };

    const fedtext::TrainingResult result =
        fedtext::run_training(model, fed, vocab, clients, eval_set, cfg.optimizer,
                              initial ? &*initial : nullptr, on_round);
    csv.close();

    const std::string best_ckpt = (std::filesystem::path(out_dir) / "best.ckpt").string();
    const std::string final_ckpt = (std::filesystem::path(out_dir) / "final.ckpt").string();
    fedtext::save_checkpoint(result.best_params, best_ckpt);
    fedtext::save_checkpoint(result.final_params, final_ckpt);

    json resolved;
    resolved["model"] = model_json(model);
    resolved["federation"] = federation_json(fed);
    resolved["optimizer"] = optimizer_json(cfg.optimizer);
    resolved["data"] = {{"corpus", cfg.data_corpus},
                        {"vocab", cfg.data_vocab},
                        {"eval_corpus", eval_corpus}};
    resolved["embeddings"] = {{"path", cfg.embeddings_path}};
    resolved["init_checkpoint"] = cfg.init_checkpoint;

    json final_metrics;
    final_metrics["best_round"] = result.best_round;
    final_metrics["best_val_accuracy"] = result.best_val_accuracy;
    if (!result.reports.empty() && result.reports.back().has_val) {
        final_metrics["final_val"] = eval_json(result.reports.back().val);
    }
    write_manifest(out_dir, "federate", config_path, resolved,
                   {{"curves", csv_path},
                    {"best_checkpoint", best_ckpt},
                    {"final_checkpoint", final_ckpt}},
                   final_metrics, fed.rng_seed);

    std::cout << "curves " << csv_path << "\n";
    std::cout << "best_checkpoint " << best_ckpt << " (round " << result.best_round << ")\n";
    std::cout << "final_checkpoint " << final_ckpt << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& corpus,
                 const std::string& config_path) {
    const fedtext::ExperimentConfig cfg = fedtext::load_config(config_path);
    if (cfg.data_vocab.empty()) throw fedtext::ConfigError("missing config key \"data.vocab\"");

    const fedtext::Vocabulary vocab = fedtext::load_vocab(cfg.data_vocab);
    const fedtext::ModelConfig model = cfg.resolve_model(vocab.size());
    const fedtext::ModelParameters params = fedtext::load_checkpoint(checkpoint);
    if (params.vocab_size() != vocab.size()) {
        throw std::runtime_error("checkpoint vocabulary size " +
                                 std::to_string(params.vocab_size()) +
                                 " does not match vocabulary file (" +
                                 std::to_string(vocab.size()) + ")");
    }

    const auto eval_set =
        fedtext::build_eval_set(corpus, vocab, model.max_seq_len,
                                cfg.federation.eval_samples, cfg.federation.rng_seed);
    const fedtext::EvalResult result =
        fedtext::evaluate(params, eval_set, cfg.federation.batch_size);
    std::cout << eval_json(result).dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated next-word-prediction simulator"};
    app.require_subcommand(1);

    auto* build_vocab_cmd = app.add_subcommand("build-vocab", "build a frequency-ranked vocabulary");
    std::string bv_corpus, bv_out;
    int bv_num_words = 10000;
    build_vocab_cmd->add_option("--corpus", bv_corpus, "client corpus (JSONL) or plain text")
        ->required();
    build_vocab_cmd->add_option("--num-words", bv_num_words, "real words to keep (default 10000)");
    build_vocab_cmd->add_option("--out", bv_out, "output vocabulary file")->required();

    auto* reduce_cmd = app.add_subcommand("reduce-embeddings", "align and reduce word vectors");
    std::string re_embeddings, re_vocab, re_method, re_out;
    int re_dim = 0, re_ppa_d = 7;
    uint64_t re_seed = 0;
    reduce_cmd->add_option("--embeddings", re_embeddings, "pretrained embedding text file")->required();
    reduce_cmd->add_option("--vocab", re_vocab, "vocabulary file")->required();
    reduce_cmd->add_option("--method", re_method, "pca | ppa | pp_pca_pp")
        ->required()
        ->check(CLI::IsMember({"pca", "ppa", "pp_pca_pp"}));
    reduce_cmd->add_option("--dim", re_dim, "target dimension");
    reduce_cmd->add_option("--ppa-d", re_ppa_d, "components removed per post-processing pass (default 7)");
    reduce_cmd->add_option("--seed", re_seed, "seed for filling words missing from the table");
    reduce_cmd->add_option("--out", re_out, "output embedding file")->required();

    auto* pretrain_cmd = app.add_subcommand("pretrain", "centralized pretraining");
    std::string pt_config, pt_out_dir = "pretrain_out";
    pretrain_cmd->add_option("--config", pt_config, "experiment config file")->required();
    pretrain_cmd->add_option("--out-dir", pt_out_dir, "output directory (default pretrain_out)");

    auto* federate_cmd = app.add_subcommand("federate", "federated averaging training");
    std::string fd_config, fd_out_dir = "federate_out";
    int fd_threads = threads_from_env();
    federate_cmd->add_option("--config", fd_config, "experiment config file")->required();
    federate_cmd->add_option("--out-dir", fd_out_dir, "output directory (default federate_out)");
    federate_cmd->add_option("--threads", fd_threads,
                             "worker threads for client updates (default $FEDTEXT_THREADS or 1)");

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a corpus");
    std::string ev_checkpoint, ev_corpus, ev_config;
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--corpus", ev_corpus, "evaluation corpus")->required();
    eval_cmd->add_option("--config", ev_config, "experiment config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (*build_vocab_cmd) return cmd_build_vocab(bv_corpus, bv_num_words, bv_out);
        if (*reduce_cmd)
            return cmd_reduce_embeddings(re_embeddings, re_vocab, re_method, re_dim, re_ppa_d,
                                         re_seed, re_out);
        if (*pretrain_cmd) return cmd_pretrain(pt_config, pt_out_dir);
        if (*federate_cmd) return cmd_federate(fd_config, fd_out_dir, fd_threads);
        if (*eval_cmd) return cmd_evaluate(ev_checkpoint, ev_corpus, ev_config);
    } catch (const fedtext::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
