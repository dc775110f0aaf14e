#include "fedtext/warmstart.hpp"

#include <stdexcept>

#include "fedtext/metrics.hpp"
#include "fedtext/prng.hpp"

namespace fedtext {

ModelParameters central_pretrain(const std::string& corpus_path, const ModelConfig& model_config,
                                 const Vocabulary& vocab, int epochs, int batch_size,
                                 uint64_t rng_seed, const AdamHyper& hyper,
                                 const MatD* embedding_init) {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (vocab.size() != model_config.vocab_size) {
        throw std::invalid_argument("vocabulary size does not match model config");
    }
    hyper.validate();

    const auto samples = load_corpus_samples(corpus_path);
    std::vector<TokenSequence> sequences;
    sequences.reserve(samples.size());
    for (const auto& s : samples) {
        sequences.push_back(tokenize(s.text, vocab, model_config.max_seq_len));
    }
    if (sequences.empty()) throw std::runtime_error("empty corpus: " + corpus_path);

    ModelParameters params =
        init_params<float>(model_config, derive_seed(rng_seed, "init"), embedding_init);
    AdamState state = adam_init<float>(model_config);

    std::vector<size_t> order(sequences.size());
    IdMatrix inputs, targets;
    MaskMatrix mask;
    std::vector<TokenSequence> batch;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(rng_seed, "pretrain_epoch", static_cast<uint64_t>(epoch)));
        shuffle(order, rng);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
            const size_t count = std::min(static_cast<size_t>(batch_size), order.size() - start);
            batch.clear();
            for (size_t i = 0; i < count; ++i) batch.push_back(sequences[order[start + i]]);
            make_batch(batch, inputs, targets, mask);
            const ForwardCache cache = forward(params, inputs);
            auto back = backward(params, cache, inputs, targets, mask);
            if (hyper.clip_norm > 0.0) clip_global_norm(back.grads, hyper.clip_norm);
            adam_step(params, state, back.grads, hyper);
        }
    }
    return params;
}

ModelParameters transfer_weights(const ModelParameters& pretrained, const Vocabulary& source_vocab,
                                 const Vocabulary& target_vocab, uint64_t rng_seed) {
    if (pretrained.vocab_size() != source_vocab.size()) {
        throw std::invalid_argument("pretrained parameters do not match source vocabulary");
    }
    const int32_t target_v = target_vocab.size();
    const Eigen::Index e = pretrained.embedding_dim();
    const Eigen::Index dn = pretrained.dense_units();

    ModelParameters out;
    out.lstm_kernel = pretrained.lstm_kernel;
    out.lstm_recurrent = pretrained.lstm_recurrent;
    out.lstm_bias = pretrained.lstm_bias;
    out.dense_w = pretrained.dense_w;
    out.dense_b = pretrained.dense_b;
    out.embedding.resize(target_v, e);
    out.out_w.resize(dn, target_v);
    out.out_b.resize(target_v);

    Rng rng(derive_seed(rng_seed, "transfer_fill"));
    for (int32_t id = 0; id < target_v; ++id) {
        int32_t source_id = -1;
        if (id < kNumSpecialTokens) {
            source_id = id;  // specials map by position
        } else {
            const std::string& w = target_vocab.word(id);
            auto it = source_vocab.word_to_id.find(w);
            if (it != source_vocab.word_to_id.end()) source_id = it->second;
        }
        if (source_id >= 0) {
            out.embedding.row(id) = pretrained.embedding.row(source_id);
            out.out_w.col(id) = pretrained.out_w.col(source_id);
            out.out_b(id) = pretrained.out_b(source_id);
        } else {
            for (Eigen::Index c = 0; c < e; ++c) {
                out.embedding(id, c) = static_cast<float>(rng.uniform(-0.05, 0.05));
            }
            for (Eigen::Index r = 0; r < dn; ++r) {
                out.out_w(r, id) = static_cast<float>(rng.uniform(-0.05, 0.05));
            }
            out.out_b(id) = static_cast<float>(rng.uniform(-0.05, 0.05));
        }
    }
    return out;
}

}  // namespace fedtext
