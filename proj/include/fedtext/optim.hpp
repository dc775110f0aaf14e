#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "fedtext/model.hpp"

namespace fedtext {

// Defaults follow the common published Adam configuration with epsilon added
// outside the bias-corrected square root. clip_norm == 0 disables clipping.
struct AdamHyper {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    double clip_norm = 0.0;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("optimizer.lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0) throw std::invalid_argument("optimizer.beta1 must be in [0, 1)");
        if (beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("optimizer.beta2 must be in [0, 1)");
        if (epsilon <= 0.0) throw std::invalid_argument("optimizer.epsilon must be positive");
        if (clip_norm < 0.0) throw std::invalid_argument("optimizer.clip_norm must be >= 0");
    }
};

template <typename S>
struct AdamStateT {
    GradientsT<S> m;
    GradientsT<S> v;
    int64_t t = 0;
};

using AdamState = AdamStateT<float>;

template <typename S>
AdamStateT<S> adam_init(const ModelConfig& cfg) {
    AdamStateT<S> state;
    const Eigen::Index v = cfg.vocab_size, e = cfg.embedding_dim;
    const Eigen::Index h = cfg.lstm_units, dn = cfg.dense_units;
    auto zero = [&](GradientsT<S>& g) {
        g.embedding = Mat<S>::Zero(v, e);
        g.lstm_kernel = Mat<S>::Zero(e, 4 * h);
        g.lstm_recurrent = Mat<S>::Zero(h, 4 * h);
        g.lstm_bias = Vec<S>::Zero(4 * h);
        g.dense_w = Mat<S>::Zero(h, dn);
        g.dense_b = Vec<S>::Zero(dn);
        g.out_w = Mat<S>::Zero(dn, v);
        g.out_b = Vec<S>::Zero(v);
    };
    zero(state.m);
    zero(state.v);
    state.t = 0;
    return state;
}

template <typename S>
double global_grad_norm(const GradientsT<S>& grads) {
    double sum = 0.0;
    for_each_tensor(grads, [&](const char*, const S* data, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            sum += static_cast<double>(data[i]) * static_cast<double>(data[i]);
        }
    });
    return std::sqrt(sum);
}

// Scales the whole gradient so its global norm is at most max_norm.
template <typename S>
void clip_global_norm(GradientsT<S>& grads, double max_norm) {
    const double norm = global_grad_norm(grads);
    if (norm <= max_norm || norm == 0.0) return;
    const S scale = static_cast<S>(max_norm / norm);
    for_each_tensor(grads, [&](const char*, S* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] *= scale;
    });
}

// One Adam update over a flat coordinate block. t is the post-increment step
// counter (>= 1). Exposed separately so scalar behavior is testable.
template <typename S>
void adam_update_span(std::span<S> param, std::span<const S> grad, std::span<S> m, std::span<S> v,
                      int64_t t, const AdamHyper& hyper) {
    const S lr = static_cast<S>(hyper.lr);
    const S beta1 = static_cast<S>(hyper.beta1);
    const S beta2 = static_cast<S>(hyper.beta2);
    const S eps = static_cast<S>(hyper.epsilon);
    const S bias1 = S(1) - static_cast<S>(std::pow(hyper.beta1, static_cast<double>(t)));
    const S bias2 = S(1) - static_cast<S>(std::pow(hyper.beta2, static_cast<double>(t)));
    for (size_t i = 0; i < param.size(); ++i) {
        const S g = grad[i];
        if (!std::isfinite(static_cast<double>(g))) throw std::invalid_argument("non-finite gradient");
        m[i] = beta1 * m[i] + (S(1) - beta1) * g;
        v[i] = beta2 * v[i] + (S(1) - beta2) * g * g;
        const S m_hat = m[i] / bias1;
        const S v_hat = v[i] / bias2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

// In-place step: t <- t+1, moments updated, parameters moved.
template <typename S>
void adam_step(ModelParametersT<S>& params, AdamStateT<S>& state, const GradientsT<S>& grads,
               const AdamHyper& hyper) {
    state.t += 1;
    struct Block {
        S* p;
        const S* g;
        S* m;
        S* v;
        size_t n;
    };
    std::vector<Block> blocks;
    blocks.reserve(8);
    size_t idx = 0;
    for_each_tensor(params, [&](const char*, S* data, size_t n) {
        blocks.push_back({data, nullptr, nullptr, nullptr, n});
        (void)idx;
    });
    idx = 0;
    for_each_tensor(grads, [&](const char*, const S* data, size_t n) {
        if (blocks[idx].n != n) throw std::invalid_argument("gradient shape mismatch");
        blocks[idx++].g = data;
    });
    idx = 0;
    for_each_tensor(state.m, [&](const char*, S* data, size_t n) {
        if (blocks[idx].n != n) throw std::invalid_argument("adam state shape mismatch");
        blocks[idx++].m = data;
    });
    idx = 0;
    for_each_tensor(state.v, [&](const char*, S* data, size_t n) {
        if (blocks[idx].n != n) throw std::invalid_argument("adam state shape mismatch");
        blocks[idx++].v = data;
    });
    for (auto& b : blocks) {
        adam_update_span<S>({b.p, b.n}, {b.g, b.n}, {b.m, b.n}, {b.v, b.n}, state.t, hyper);
    }
}

}  // namespace fedtext
