// Integration tests that drive the installed CLI binary end to end.

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "fedtext/corpus.hpp"
#include "fedtext/embeddings.hpp"
#include "support/tmpdir.hpp"

using namespace fedtext;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd = std::string(FEDTEXT_CLI_PATH) + " " + args + " >" + log_path + " 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string data_path(const std::string& name) {
    return std::string(FEDTEXT_DATA_DIR) + "/" + name;
}

double total_sample_variance(const MatD& x) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return ((x.rowwise() - mean).array().square().sum()) / static_cast<double>(x.rows() - 1);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    testutil::TempDir tmp("cli_usage");
    CHECK(run_cli("build-vocab --corpus x.jsonl --num-words 5", tmp.path("no_out.log")) == 2);
    CHECK(run_cli("no-such-command", tmp.path("unknown.log")) == 2);
    CHECK(run_cli("", tmp.path("none.log")) == 2);

    const auto bad_cfg = tmp.write("bad.cfg", "[model]\nwidth = 3\n");
    CHECK(run_cli("federate --config " + bad_cfg, tmp.path("badcfg.log")) == 2);
    const std::string log = testutil::read_file(tmp.path("badcfg.log"));
    CHECK(log.find("model.width") != std::string::npos);
}

TEST_CASE("runtime failures exit with code 1") {
    testutil::TempDir tmp("cli_runtime");
    const auto cfg = tmp.write("f.cfg",
                               "[model]\nembedding_dim = 8\nlstm_units = 8\ndense_units = 8\n"
                               "[data]\ncorpus = \"" + tmp.path("missing.jsonl") + "\"\n"
                               "vocab = \"" + tmp.path("missing_vocab.txt") + "\"\n");
    CHECK(run_cli("federate --config " + cfg, tmp.path("run.log")) == 1);
}

TEST_CASE("build-vocab then federate then evaluate round-trip") {
    testutil::TempDir tmp("cli_pipeline");
    REQUIRE(run_cli("build-vocab --corpus " + data_path("synthetic_clients.jsonl") +
                        " --num-words 100 --out " + tmp.path("vocab.txt"),
                    tmp.path("bv.log")) == 0);
    CHECK(testutil::read_file(tmp.path("bv.log")).find("vocab_size 104") != std::string::npos);

    const auto cfg = tmp.write(
        "exp.cfg",
        "[model]\nembedding_dim = 16\nlstm_units = 24\ndense_units = 16\nmax_seq_len = 20\n"
        "[data]\ncorpus = \"" + data_path("synthetic_clients.jsonl") + "\"\n"
        "vocab = \"" + tmp.path("vocab.txt") + "\"\n"
        "[federation]\nclients_per_round = 4\ntotal_rounds = 2\neval_samples = 40\nrng_seed = 5\n");
    REQUIRE(run_cli("federate --config " + cfg + " --out-dir " + tmp.path("run"),
                    tmp.path("fed.log")) == 0);

    const std::string csv = testutil::read_file(tmp.path("run") + "/curves.csv");
    CHECK(csv.rfind("round,split,loss,accuracy,accuracy_no_oov_no_eos\n", 0) == 0);
    CHECK(csv.find("1,train,") != std::string::npos);
    CHECK(csv.find("2,val,") != std::string::npos);

    const auto manifest = nlohmann::json::parse(testutil::read_file(tmp.path("run") + "/manifest.json"));
    CHECK(manifest["command"] == "federate");
    CHECK(manifest["resolved_config"]["federation"]["total_rounds"] == 2);
    CHECK(manifest.contains("config_hash"));

    REQUIRE(run_cli("evaluate --checkpoint " + tmp.path("run") + "/best.ckpt --corpus " +
                        data_path("synthetic_clients.jsonl") + " --config " + cfg,
                    tmp.path("eval.log")) == 0);
    const auto metrics = nlohmann::json::parse(testutil::read_file(tmp.path("eval.log")));
    CHECK(metrics["accuracy"].get<double>() >= 0.0);
    CHECK(metrics["accuracy"].get<double>() <= 1.0);
    CHECK(metrics["positions_all"].get<int64_t>() > 0);
}

TEST_CASE("pretrain writes a checkpoint a federate run can warm-start from") {
    testutil::TempDir tmp("cli_warm");
    REQUIRE(run_cli("build-vocab --corpus " + data_path("synthetic_clients.jsonl") +
                        " --num-words 100 --out " + tmp.path("vocab.txt"),
                    tmp.path("bv.log")) == 0);
    const std::string model_block =
        "[model]\nembedding_dim = 16\nlstm_units = 24\ndense_units = 16\nmax_seq_len = 20\n"
        "[data]\ncorpus = \"" + data_path("synthetic_clients.jsonl") + "\"\n"
        "vocab = \"" + tmp.path("vocab.txt") + "\"\n";

    const auto pre_cfg = tmp.write("pre.cfg", model_block +
                                                  "[pretrain]\ncorpus = \"" +
                                                  data_path("pretrain_synthetic.txt") +
                                                  "\"\nepochs = 2\nbatch_size = 16\nrng_seed = 3\n");
    REQUIRE(run_cli("pretrain --config " + pre_cfg + " --out-dir " + tmp.path("pre"),
                    tmp.path("pre.log")) == 0);

    const auto fed_cfg = tmp.write("fed.cfg", model_block +
                                                  "[federation]\nclients_per_round = 3\n"
                                                  "total_rounds = 1\neval_samples = 30\nrng_seed = 5\n"
                                                  "init_checkpoint = \"" + tmp.path("pre") +
                                                  "/pretrained.ckpt\"\n");
    CHECK(run_cli("federate --config " + fed_cfg + " --out-dir " + tmp.path("warm_run"),
                  tmp.path("warm.log")) == 0);
}

TEST_CASE("reduce-embeddings full-rank pca preserves total variance") {
    testutil::TempDir tmp("cli_reduce");
    // Vocabulary of 40 words plus a donor table covering 30 of them.
    std::string vocab_text;
    for (int i = 0; i < 40; ++i) vocab_text += "word" + std::to_string(i) + "\n";
    const auto vocab_file = tmp.write("vocab.txt", vocab_text);

    std::string table_text;
    Rng rng(606);
    for (int i = 0; i < 30; ++i) {
        table_text += "word" + std::to_string(i);
        for (int c = 0; c < 6; ++c) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " %.6f", rng.uniform(-1, 1));
            table_text += buf;
        }
        table_text += "\n";
    }
    const auto table_file = tmp.write("table.txt", table_text);

    REQUIRE(run_cli("reduce-embeddings --embeddings " + table_file + " --vocab " + vocab_file +
                        " --method pca --dim 6 --seed 9 --out " + tmp.path("out.txt"),
                    tmp.path("red.log")) == 0);
    const std::string log = testutil::read_file(tmp.path("red.log"));
    CHECK(log.find("coverage 0.75") != std::string::npos);

    // The output is an orthogonal change of basis of the aligned matrix.
    const Vocabulary vocab = load_vocab(vocab_file);
    const EmbeddingTable table = load_embedding_table(table_file);
    const AlignedEmbedding aligned = build_embedding_matrix(vocab, table, 6, 9);
    const EmbeddingTable reduced = load_embedding_table(tmp.path("out.txt"));
    REQUIRE(reduced.vectors.rows() == 44);
    CHECK(total_sample_variance(reduced.vectors) ==
          doctest::Approx(total_sample_variance(aligned.values)).epsilon(1e-6));

    CHECK(run_cli("reduce-embeddings --embeddings " + table_file + " --vocab " + vocab_file +
                      " --method pp_pca_pp --seed 9 --out " + tmp.path("x.txt"),
                  tmp.path("nodim.log")) == 2);  // --dim required

    // The reduced file can seed a federated run's embedding layer.
    std::string corpus_text;
    for (int i = 0; i < 12; ++i) {
        corpus_text += "{\"client_id\": \"c" + std::to_string(i % 3) + "\", \"text\": \"word" +
                       std::to_string(i % 40) + " word" + std::to_string((i + 7) % 40) + "\"}\n";
    }
    const auto corpus_file = tmp.write("corpus.jsonl", corpus_text);
    const auto fed_cfg = tmp.write(
        "fed.cfg",
        "[model]\nembedding_dim = 6\nlstm_units = 8\ndense_units = 6\nmax_seq_len = 8\n"
        "[data]\ncorpus = \"" + corpus_file + "\"\nvocab = \"" + vocab_file + "\"\n"
        "[federation]\nclients_per_round = 2\ntotal_rounds = 1\neval_samples = 6\nrng_seed = 2\n"
        "[embeddings]\npath = \"" + tmp.path("out.txt") + "\"\n");
    CHECK(run_cli("federate --config " + fed_cfg + " --out-dir " + tmp.path("emb_run"),
                  tmp.path("embrun.log")) == 0);

    const auto conflict_cfg = tmp.write(
        "conflict.cfg",
        "[model]\nembedding_dim = 6\nlstm_units = 8\ndense_units = 6\n"
        "[data]\ncorpus = \"" + corpus_file + "\"\nvocab = \"" + vocab_file + "\"\n"
        "[federation]\ninit_checkpoint = \"x.ckpt\"\n"
        "[embeddings]\npath = \"" + tmp.path("out.txt") + "\"\n");
    CHECK(run_cli("federate --config " + conflict_cfg, tmp.path("conflict.log")) == 2);
}
