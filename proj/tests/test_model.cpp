#include <doctest.h>

#include <cmath>

#include "fedtext/model.hpp"
#include "fedtext/model_io.hpp"
#include "fedtext/prng.hpp"
#include "support/finite_diff.hpp"
#include "support/tmpdir.hpp"

using namespace fedtext;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vocab_size = 9;
    cfg.embedding_dim = 3;
    cfg.lstm_units = 4;
    cfg.dense_units = 3;
    cfg.max_seq_len = 5;
    return cfg;
}

IdMatrix random_batch(const ModelConfig& cfg, Eigen::Index b, Eigen::Index t, uint64_t seed) {
    Rng rng(seed);
    IdMatrix ids(b, t);
    for (Eigen::Index r = 0; r < b; ++r)
        for (Eigen::Index c = 0; c < t; ++c)
            ids(r, c) = static_cast<int32_t>(rng.below(static_cast<uint64_t>(cfg.vocab_size)));
    return ids;
}

// Scalar reference forward pass written directly from the recurrence, used to
// cross-check the vectorized implementation.
template <typename S>
std::vector<std::vector<double>> naive_logits(const ModelParametersT<S>& p,
                                              const std::vector<int32_t>& ids) {
    const int h = p.lstm_units();
    const int e = p.embedding_dim();
    const int dn = p.dense_units();
    const int v = p.vocab_size();
    std::vector<double> hidden(h, 0.0), cell(h, 0.0);
    std::vector<std::vector<double>> all_logits;
    auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

    for (int32_t id : ids) {
        std::vector<double> z(4 * h, 0.0);
        for (int j = 0; j < 4 * h; ++j) {
            for (int k = 0; k < e; ++k) z[j] += double(p.embedding(id, k)) * double(p.lstm_kernel(k, j));
            for (int k = 0; k < h; ++k) z[j] += hidden[k] * double(p.lstm_recurrent(k, j));
            z[j] += double(p.lstm_bias(j));
        }
        std::vector<double> new_h(h), new_c(h);
        for (int j = 0; j < h; ++j) {
            const double gi = sigmoid(z[j]);
            const double gf = sigmoid(z[h + j]);
            const double gg = std::tanh(z[2 * h + j]);
            const double go = sigmoid(z[3 * h + j]);
            new_c[j] = gf * cell[j] + gi * gg;
            new_h[j] = go * std::tanh(new_c[j]);
        }
        hidden = new_h;
        cell = new_c;

        std::vector<double> dense(dn, 0.0);
        for (int j = 0; j < dn; ++j) {
            for (int k = 0; k < h; ++k) dense[j] += hidden[k] * double(p.dense_w(k, j));
            dense[j] += double(p.dense_b(j));
        }
        std::vector<double> logits(v, 0.0);
        for (int j = 0; j < v; ++j) {
            for (int k = 0; k < dn; ++k) logits[j] += dense[k] * double(p.out_w(k, j));
            logits[j] += double(p.out_b(j));
        }
        all_logits.push_back(std::move(logits));
    }
    return all_logits;
}

}  // namespace

TEST_CASE("parameter counts match the closed form") {
    ModelConfig cfg;
    cfg.vocab_size = 5;
    cfg.embedding_dim = 2;
    cfg.lstm_units = 3;
    cfg.dense_units = 2;
    const auto p = init_params<float>(cfg, 1);
    CHECK(count_params(p) == 105);

    Rng seeds(7);
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig c;
        c.vocab_size = 2 + static_cast<int32_t>(seeds.below(40));
        c.embedding_dim = 1 + static_cast<int32_t>(seeds.below(8));
        c.lstm_units = 1 + static_cast<int32_t>(seeds.below(8));
        c.dense_units = 1 + static_cast<int32_t>(seeds.below(8));
        const int64_t v = c.vocab_size, e = c.embedding_dim, h = c.lstm_units, dn = c.dense_units;
        const int64_t expected = v * e + 4 * h * (e + h + 1) + dn * (h + 1) + v * (dn + 1);
        CHECK(count_params(init_params<float>(c, seeds.next_u64())) == expected);
    }
}

TEST_CASE("init_params layout and determinism") {
    const ModelConfig cfg = tiny_config();
    const auto p = init_params<float>(cfg, 42);
    const auto q = init_params<float>(cfg, 42);
    bool identical = true;
    for_each_tensor(p, [&](const char* name, const float* data, size_t n) {
        std::vector<const float*> other;
        for_each_tensor(q, [&](const char* qname, const float* qdata, size_t) {
            if (std::string(qname) == name) other.push_back(qdata);
        });
        for (size_t i = 0; i < n && identical; ++i) identical = data[i] == other[0][i];
    });
    CHECK(identical);

    const auto r = init_params<float>(cfg, 43);
    CHECK(r.embedding(0, 0) != p.embedding(0, 0));

    // Embedding within the uniform range; biases zero except forget gate.
    CHECK(p.embedding.cwiseAbs().maxCoeff() <= 0.05f);
    const int h = cfg.lstm_units;
    for (int j = 0; j < 4 * h; ++j) {
        const float expected = (j >= h && j < 2 * h) ? 1.0f : 0.0f;
        CHECK(p.lstm_bias(j) == expected);
    }
    CHECK(p.dense_b.cwiseAbs().maxCoeff() == 0.0f);
    CHECK(p.out_b.cwiseAbs().maxCoeff() == 0.0f);

    // Recurrent rows orthonormal.
    const MatF gram = p.lstm_recurrent * p.lstm_recurrent.transpose();
    CHECK((gram - MatF::Identity(h, h)).cwiseAbs().maxCoeff() < 1e-5f);

    // Pretrained embedding rows pass through, cast to float.
    MatD init(cfg.vocab_size, cfg.embedding_dim);
    init.setConstant(0.25);
    const auto with_emb = init_params<float>(cfg, 42, &init);
    CHECK(with_emb.embedding(5, 1) == 0.25f);
    MatD bad(cfg.vocab_size + 1, cfg.embedding_dim);
    CHECK_THROWS_AS(init_params<float>(cfg, 42, &bad), std::invalid_argument);
}

TEST_CASE("forward matches the scalar reference recurrence") {
    const ModelConfig cfg = tiny_config();
    const auto p = init_params<double>(cfg, 97);
    const IdMatrix batch = random_batch(cfg, 2, 4, 5);

    const auto cache = forward(p, batch);
    for (Eigen::Index r = 0; r < 2; ++r) {
        std::vector<int32_t> ids;
        for (Eigen::Index t = 0; t < 4; ++t) ids.push_back(batch(r, t));
        const auto expected = naive_logits(p, ids);
        for (size_t t = 0; t < 4; ++t) {
            for (int vidx = 0; vidx < cfg.vocab_size; ++vidx) {
                CHECK(cache.logits[t](r, vidx) ==
                      doctest::Approx(expected[t][static_cast<size_t>(vidx)]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("forward shape and softmax normalization") {
    const ModelConfig cfg = tiny_config();
    const auto p = init_params<float>(cfg, 3);
    const IdMatrix batch = random_batch(cfg, 3, 5, 8);
    const auto cache = forward(p, batch);
    REQUIRE(cache.timesteps() == 5);
    for (int t = 0; t < 5; ++t) {
        REQUIRE(cache.logits[static_cast<size_t>(t)].rows() == 3);
        REQUIRE(cache.logits[static_cast<size_t>(t)].cols() == cfg.vocab_size);
        for (Eigen::Index r = 0; r < 3; ++r) {
            const auto& row = cache.logits[static_cast<size_t>(t)].row(r);
            double denom = 0.0;
            const float mx = row.maxCoeff();
            for (Eigen::Index j = 0; j < cfg.vocab_size; ++j) denom += std::exp(double(row(j) - mx));
            double total = 0.0;
            for (Eigen::Index j = 0; j < cfg.vocab_size; ++j) {
                total += std::exp(double(row(j) - mx)) / denom;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
        }
    }

    IdMatrix bad = batch;
    bad(0, 0) = cfg.vocab_size;
    CHECK_THROWS_AS(forward(p, bad), std::invalid_argument);
}

TEST_CASE("all-zero parameters give uniform logits") {
    const ModelConfig cfg = tiny_config();
    auto p = init_params<float>(cfg, 1);
    for_each_tensor(p, [](const char*, float* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] = 0.0f;
    });
    const auto cache = forward(p, random_batch(cfg, 2, 3, 4));
    for (const auto& logits : cache.logits) {
        CHECK(logits.cwiseAbs().maxCoeff() == 0.0f);  // softmax of zeros is uniform 1/V
    }
}

TEST_CASE("backward loss values and mask semantics") {
    ModelConfig cfg = tiny_config();
    const auto p = init_params<float>(cfg, 21);

    SUBCASE("uniform logits lose ln V") {
        auto zero = p;
        for_each_tensor(zero, [](const char*, float* data, size_t n) {
            for (size_t i = 0; i < n; ++i) data[i] = 0.0f;
        });
        IdMatrix batch(1, 2), targets(1, 2);
        batch << 4, 5;
        targets << 5, 6;
        MaskMatrix mask(1, 2);
        mask << 1, 1;
        const auto cache = forward(zero, batch);
        const auto result = backward(zero, cache, batch, targets, mask);
        CHECK(result.loss == doctest::Approx(std::log(9.0)).epsilon(1e-6));
    }

    SUBCASE("all-masked is an error") {
        IdMatrix batch(1, 2), targets(1, 2);
        batch << 4, 5;
        targets << 5, 6;
        MaskMatrix mask = MaskMatrix::Zero(1, 2);
        const auto cache = forward(p, batch);
        CHECK_THROWS_WITH_AS(backward(p, cache, batch, targets, mask),
                             doctest::Contains("no unmasked targets"), std::invalid_argument);
    }

    SUBCASE("masked positions contribute nothing, bit for bit") {
        IdMatrix batch = random_batch(cfg, 2, 4, 77);
        IdMatrix targets = random_batch(cfg, 2, 4, 78);
        MaskMatrix mask(2, 4);
        mask << 1, 1, 0, 1, 1, 0, 1, 1;
        const auto cache = forward(p, batch);
        const auto a = backward(p, cache, batch, targets, mask);

        IdMatrix flipped = targets;
        flipped(0, 2) = (targets(0, 2) + 1) % cfg.vocab_size;
        flipped(1, 1) = (targets(1, 1) + 3) % cfg.vocab_size;
        const auto b = backward(p, cache, batch, flipped, mask);

        CHECK(a.loss == b.loss);
        bool identical = true;
        std::vector<std::pair<const float*, size_t>> blocks;
        for_each_tensor(b.grads, [&](const char*, const float* data, size_t n) {
            blocks.emplace_back(data, n);
        });
        size_t idx = 0;
        for_each_tensor(a.grads, [&](const char*, const float* data, size_t n) {
            for (size_t i = 0; i < n && identical; ++i) identical = data[i] == blocks[idx].first[i];
            ++idx;
        });
        CHECK(identical);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    ModelConfig cfg;
    cfg.vocab_size = 7;
    cfg.embedding_dim = 3;
    cfg.lstm_units = 4;
    cfg.dense_units = 3;
    auto p = init_params<double>(cfg, 1234);

    const IdMatrix batch = random_batch(cfg, 2, 3, 91);
    IdMatrix targets = random_batch(cfg, 2, 3, 92);
    MaskMatrix mask(2, 3);
    mask << 1, 1, 0, 1, 0, 1;

    const auto cache = forward(p, batch);
    const auto analytic = backward(p, cache, batch, targets, mask);
    const auto report = oracle::compare_gradients(p, analytic.grads, batch, targets, mask);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    testutil::TempDir tmp("model_ckpt");
    const ModelConfig cfg = tiny_config();
    const auto p = init_params<float>(cfg, 5150);
    save_checkpoint(p, tmp.path("m.ckpt"));
    const ModelParameters q = load_checkpoint(tmp.path("m.ckpt"));

    std::vector<std::pair<const float*, size_t>> blocks;
    for_each_tensor(q, [&](const char*, const float* data, size_t n) { blocks.emplace_back(data, n); });
    size_t idx = 0;
    bool identical = true;
    for_each_tensor(p, [&](const char*, const float* data, size_t n) {
        REQUIRE(blocks[idx].second == n);
        for (size_t i = 0; i < n && identical; ++i) identical = data[i] == blocks[idx].first[i];
        ++idx;
    });
    CHECK(identical);
}

TEST_CASE("checkpoint loader rejects corrupted files") {
    testutil::TempDir tmp("model_ckpt_bad");
    const auto p = init_params<float>(tiny_config(), 1);
    save_checkpoint(p, tmp.path("m.ckpt"));
    const std::string good = testutil::read_file(tmp.path("m.ckpt"));

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    tmp.write("bad_magic.ckpt", bad_magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path("bad_magic.ckpt")),
                         doctest::Contains("magic"), std::runtime_error);

    std::string bad_version = good;
    bad_version[4] = 9;
    tmp.write("bad_version.ckpt", bad_version);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path("bad_version.ckpt")),
                         doctest::Contains("version"), std::runtime_error);

    tmp.write("truncated.ckpt", good.substr(0, good.size() / 2));
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path("truncated.ckpt")),
                         doctest::Contains("truncated"), std::runtime_error);

    // Swap the embedding dims (9x3 -> 3x9): same payload size, inconsistent
    // with the other tensors.
    std::string bad_shape = good;
    const size_t dims_offset = 4 + 4 + 4 + 4 + std::string("embedding").size() + 4;
    bad_shape[dims_offset] = 3;
    bad_shape[dims_offset + 8] = 9;
    tmp.write("bad_shape.ckpt", bad_shape);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.path("bad_shape.ckpt")),
                         doctest::Contains("shape mismatch"), std::runtime_error);
}

TEST_CASE("extract_weights names and shapes match the checkpoint layout") {
    const ModelConfig cfg = tiny_config();
    const auto p = init_params<float>(cfg, 77);
    const auto tensors = extract_weights(p);
    REQUIRE(tensors.size() == 8);
    const std::vector<std::string> names = {"embedding", "lstm_kernel", "lstm_recurrent",
                                            "lstm_bias", "dense_w",     "dense_b",
                                            "out_w",     "out_b"};
    int64_t total = 0;
    for (size_t i = 0; i < tensors.size(); ++i) {
        CHECK(tensors[i].name == names[i]);
        uint64_t n = 1;
        for (uint64_t d : tensors[i].dims) n *= d;
        CHECK(n == tensors[i].values.size());
        total += static_cast<int64_t>(n);
    }
    CHECK(total == count_params(p));
    CHECK(tensors[0].dims == std::vector<uint64_t>{9, 3});
    CHECK(tensors[2].dims == std::vector<uint64_t>{4, 16});
}
