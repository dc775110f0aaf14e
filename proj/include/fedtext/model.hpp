#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedtext/prng.hpp"

namespace fedtext {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using VecF = Vec<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;

using IdMatrix = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int32_t vocab_size = 0;
    int32_t embedding_dim = 0;
    int32_t lstm_units = 0;
    int32_t dense_units = 0;
    int32_t max_seq_len = 20;

    // "small" and "large" follow the published four-layer sizing; the
    // adaptive-baseline variant mirrors the 96/670/96 comparison setup.
    static ModelConfig preset(const std::string& name, int32_t max_seq_len = 20);
};

// The four-layer network: embedding -> single LSTM -> linear dense -> output
// logits. Gate order along the 4H axis is [input, forget, cell, output].
template <typename S>
struct ModelParametersT {
    Mat<S> embedding;       // V x E
    Mat<S> lstm_kernel;     // E x 4H
    Mat<S> lstm_recurrent;  // H x 4H
    Vec<S> lstm_bias;       // 4H
    Mat<S> dense_w;         // H x Dn
    Vec<S> dense_b;         // Dn
    Mat<S> out_w;           // Dn x V
    Vec<S> out_b;           // V

    int32_t vocab_size() const { return static_cast<int32_t>(embedding.rows()); }
    int32_t embedding_dim() const { return static_cast<int32_t>(embedding.cols()); }
    int32_t lstm_units() const { return static_cast<int32_t>(lstm_recurrent.rows()); }
    int32_t dense_units() const { return static_cast<int32_t>(dense_w.cols()); }

    template <typename T>
    ModelParametersT<T> cast() const {
        ModelParametersT<T> out;
        out.embedding = embedding.template cast<T>();
        out.lstm_kernel = lstm_kernel.template cast<T>();
        out.lstm_recurrent = lstm_recurrent.template cast<T>();
        out.lstm_bias = lstm_bias.template cast<T>();
        out.dense_w = dense_w.template cast<T>();
        out.dense_b = dense_b.template cast<T>();
        out.out_w = out_w.template cast<T>();
        out.out_b = out_b.template cast<T>();
        return out;
    }
};

using ModelParameters = ModelParametersT<float>;

template <typename S>
using GradientsT = ModelParametersT<S>;
using Gradients = GradientsT<float>;

// Visits the eight weight tensors in checkpoint order as flat arrays.
template <typename S, typename F>
void for_each_tensor(ModelParametersT<S>& p, F&& fn) {
    fn("embedding", p.embedding.data(), static_cast<size_t>(p.embedding.size()));
    fn("lstm_kernel", p.lstm_kernel.data(), static_cast<size_t>(p.lstm_kernel.size()));
    fn("lstm_recurrent", p.lstm_recurrent.data(), static_cast<size_t>(p.lstm_recurrent.size()));
    fn("lstm_bias", p.lstm_bias.data(), static_cast<size_t>(p.lstm_bias.size()));
    fn("dense_w", p.dense_w.data(), static_cast<size_t>(p.dense_w.size()));
    fn("dense_b", p.dense_b.data(), static_cast<size_t>(p.dense_b.size()));
    fn("out_w", p.out_w.data(), static_cast<size_t>(p.out_w.size()));
    fn("out_b", p.out_b.data(), static_cast<size_t>(p.out_b.size()));
}

template <typename S, typename F>
void for_each_tensor(const ModelParametersT<S>& p, F&& fn) {
    fn("embedding", p.embedding.data(), static_cast<size_t>(p.embedding.size()));
    fn("lstm_kernel", p.lstm_kernel.data(), static_cast<size_t>(p.lstm_kernel.size()));
    fn("lstm_recurrent", p.lstm_recurrent.data(), static_cast<size_t>(p.lstm_recurrent.size()));
    fn("lstm_bias", p.lstm_bias.data(), static_cast<size_t>(p.lstm_bias.size()));
    fn("dense_w", p.dense_w.data(), static_cast<size_t>(p.dense_w.size()));
    fn("dense_b", p.dense_b.data(), static_cast<size_t>(p.dense_b.size()));
    fn("out_w", p.out_w.data(), static_cast<size_t>(p.out_w.size()));
    fn("out_b", p.out_b.data(), static_cast<size_t>(p.out_b.size()));
}

template <typename S>
int64_t count_params(const ModelParametersT<S>& p) {
    int64_t total = 0;
    for_each_tensor(p, [&](const char*, const S*, size_t n) { total += static_cast<int64_t>(n); });
    return total;
}

// Per-timestep activations kept for backpropagation through time.
template <typename S>
struct ForwardCacheT {
    std::vector<Mat<S>> gate_i, gate_f, gate_g, gate_o;  // B x H each
    std::vector<Mat<S>> cell, tanh_cell, hidden;         // B x H
    std::vector<Mat<S>> dense;                           // B x Dn
    std::vector<Mat<S>> logits;                          // B x V (pre-softmax)
    int timesteps() const { return static_cast<int>(logits.size()); }
};

using ForwardCache = ForwardCacheT<float>;

template <typename S>
struct BackwardResultT {
    double loss = 0.0;
    GradientsT<S> grads;
};

namespace detail {

template <typename S>
Mat<S> glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat<S> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = static_cast<S>(rng.uniform(-limit, limit));
    return m;
}

// Orthonormal rows via QR of a Gaussian matrix, signs fixed by R's diagonal.
template <typename S>
Mat<S> orthogonal_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    if (rows > cols) throw std::invalid_argument("orthogonal_rows requires rows <= cols");
    Eigen::MatrixXd gauss(cols, rows);
    for (Eigen::Index r = 0; r < cols; ++r)
        for (Eigen::Index c = 0; c < rows; ++c)
            gauss(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, rows);
    Eigen::MatrixXd r_mat = qr.matrixQR().topRows(rows).template triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < rows; ++c) {
        if (r_mat(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    return q.transpose().template cast<S>();
}

}  // namespace detail

// embedding_init, when given, must be vocab_size x embedding_dim; it is cast
// to the model scalar type. Otherwise the embedding draws from U[-0.05, 0.05].
template <typename S>
ModelParametersT<S> init_params(const ModelConfig& cfg, uint64_t rng_seed,
                                const MatD* embedding_init = nullptr) {
    if (cfg.vocab_size < 1 || cfg.embedding_dim < 1 || cfg.lstm_units < 1 || cfg.dense_units < 1) {
        throw std::invalid_argument("model config dimensions must be positive");
    }
    const Eigen::Index v = cfg.vocab_size, e = cfg.embedding_dim;
    const Eigen::Index h = cfg.lstm_units, dn = cfg.dense_units;

    ModelParametersT<S> p;
    Rng rng(derive_seed(rng_seed, "init_params"));

    if (embedding_init != nullptr) {
        if (embedding_init->rows() != v || embedding_init->cols() != e) {
            throw std::invalid_argument("embedding_init shape does not match model config");
        }
        p.embedding = embedding_init->template cast<S>();
    } else {
        p.embedding.resize(v, e);
        for (Eigen::Index r = 0; r < v; ++r)
            for (Eigen::Index c = 0; c < e; ++c)
                p.embedding(r, c) = static_cast<S>(rng.uniform(-0.05, 0.05));
    }

    p.lstm_kernel = detail::glorot_uniform<S>(e, 4 * h, rng);
    p.lstm_recurrent = detail::orthogonal_rows<S>(h, 4 * h, rng);
    p.lstm_bias = Vec<S>::Zero(4 * h);
    p.lstm_bias.segment(h, h).setConstant(S(1));  // forget gate bias
    p.dense_w = detail::glorot_uniform<S>(h, dn, rng);
    p.dense_b = Vec<S>::Zero(dn);
    p.out_w = detail::glorot_uniform<S>(dn, v, rng);
    p.out_b = Vec<S>::Zero(v);
    return p;
}

// Standard LSTM recurrence from zero initial state; the dense layer is a pure
// linear map and logits are pre-softmax scores.
template <typename S>
ForwardCacheT<S> forward(const ModelParametersT<S>& p, const IdMatrix& batch) {
    const Eigen::Index b = batch.rows(), t_len = batch.cols();
    const Eigen::Index v = p.vocab_size(), e = p.embedding_dim();
    const Eigen::Index h = p.lstm_units();
    if (b < 1 || t_len < 1) throw std::invalid_argument("empty batch");
    for (Eigen::Index r = 0; r < b; ++r)
        for (Eigen::Index c = 0; c < t_len; ++c)
            if (batch(r, c) < 0 || batch(r, c) >= v)
                throw std::invalid_argument("token id out of range: " + std::to_string(batch(r, c)));

    ForwardCacheT<S> cache;
    const size_t steps = static_cast<size_t>(t_len);
    cache.gate_i.resize(steps);
    cache.gate_f.resize(steps);
    cache.gate_g.resize(steps);
    cache.gate_o.resize(steps);
    cache.cell.resize(steps);
    cache.tanh_cell.resize(steps);
    cache.hidden.resize(steps);
    cache.dense.resize(steps);
    cache.logits.resize(steps);

    Mat<S> h_prev = Mat<S>::Zero(b, h);
    Mat<S> c_prev = Mat<S>::Zero(b, h);
    Mat<S> x(b, e);

    for (Eigen::Index t = 0; t < t_len; ++t) {
        for (Eigen::Index r = 0; r < b; ++r) x.row(r) = p.embedding.row(batch(r, t));

        Mat<S> z = x * p.lstm_kernel + h_prev * p.lstm_recurrent;
        z.rowwise() += p.lstm_bias.transpose();

        const size_t ts = static_cast<size_t>(t);
        cache.gate_i[ts] = ((-z.leftCols(h).array()).exp() + S(1)).inverse().matrix();
        cache.gate_f[ts] = ((-z.middleCols(h, h).array()).exp() + S(1)).inverse().matrix();
        cache.gate_g[ts] = z.middleCols(2 * h, h).array().tanh().matrix();
        cache.gate_o[ts] = ((-z.rightCols(h).array()).exp() + S(1)).inverse().matrix();

        cache.cell[ts] = cache.gate_f[ts].cwiseProduct(c_prev) + cache.gate_i[ts].cwiseProduct(cache.gate_g[ts]);
        cache.tanh_cell[ts] = cache.cell[ts].array().tanh().matrix();
        cache.hidden[ts] = cache.gate_o[ts].cwiseProduct(cache.tanh_cell[ts]);

        cache.dense[ts] = cache.hidden[ts] * p.dense_w;
        cache.dense[ts].rowwise() += p.dense_b.transpose();
        cache.logits[ts] = cache.dense[ts] * p.out_w;
        cache.logits[ts].rowwise() += p.out_b.transpose();

        h_prev = cache.hidden[ts];
        c_prev = cache.cell[ts];
    }
    return cache;
}

// Masked-mean sparse cross entropy plus its exact gradient via BPTT.
// loss_mask must be zero wherever the target is padding.
template <typename S>
BackwardResultT<S> backward(const ModelParametersT<S>& p, const ForwardCacheT<S>& cache,
                            const IdMatrix& batch, const IdMatrix& targets, const MaskMatrix& mask) {
    const Eigen::Index b = batch.rows(), t_len = batch.cols();
    const Eigen::Index v = p.vocab_size(), e = p.embedding_dim();
    const Eigen::Index h = p.lstm_units(), dn = p.dense_units();
    if (targets.rows() != b || targets.cols() != t_len || mask.rows() != b || mask.cols() != t_len) {
        throw std::invalid_argument("batch/targets/mask shapes are inconsistent");
    }
    if (cache.timesteps() != static_cast<int>(t_len)) {
        throw std::invalid_argument("cache does not match batch");
    }

    int64_t num_unmasked = 0;
    for (Eigen::Index r = 0; r < b; ++r)
        for (Eigen::Index c = 0; c < t_len; ++c)
            if (mask(r, c) != 0) ++num_unmasked;
    if (num_unmasked == 0) throw std::invalid_argument("no unmasked targets");
    const S inv_count = S(1) / static_cast<S>(num_unmasked);

    BackwardResultT<S> result;
    GradientsT<S>& g = result.grads;
    g.embedding = Mat<S>::Zero(v, e);
    g.lstm_kernel = Mat<S>::Zero(e, 4 * h);
    g.lstm_recurrent = Mat<S>::Zero(h, 4 * h);
    g.lstm_bias = Vec<S>::Zero(4 * h);
    g.dense_w = Mat<S>::Zero(h, dn);
    g.dense_b = Vec<S>::Zero(dn);
    g.out_w = Mat<S>::Zero(dn, v);
    g.out_b = Vec<S>::Zero(v);

    double loss_sum = 0.0;
    Mat<S> dh_next = Mat<S>::Zero(b, h);
    Mat<S> dc_next = Mat<S>::Zero(b, h);
    Mat<S> x(b, e), dlogits(b, v), softmax_row(1, v);

    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
        const size_t ts = static_cast<size_t>(t);
        const Mat<S>& logits = cache.logits[ts];

        dlogits.setZero();
        for (Eigen::Index r = 0; r < b; ++r) {
            if (mask(r, t) == 0) continue;
            const S max_logit = logits.row(r).maxCoeff();
            softmax_row = (logits.row(r).array() - max_logit).exp().matrix();
            const S denom = softmax_row.sum();
            const int32_t target = targets(r, t);
            loss_sum += -(static_cast<double>(logits(r, target) - max_logit) -
                          std::log(static_cast<double>(denom)));
            dlogits.row(r) = softmax_row * (inv_count / denom);
            dlogits(r, target) -= inv_count;
        }

        g.out_w.noalias() += cache.dense[ts].transpose() * dlogits;
        g.out_b += dlogits.colwise().sum().transpose();
        Mat<S> ddense = dlogits * p.out_w.transpose();

        g.dense_w.noalias() += cache.hidden[ts].transpose() * ddense;
        g.dense_b += ddense.colwise().sum().transpose();
        Mat<S> dh = ddense * p.dense_w.transpose() + dh_next;

        const Mat<S>& gi = cache.gate_i[ts];
        const Mat<S>& gf = cache.gate_f[ts];
        const Mat<S>& gg = cache.gate_g[ts];
        const Mat<S>& go = cache.gate_o[ts];
        const Mat<S>& tanh_c = cache.tanh_cell[ts];

        Mat<S> dout_gate = dh.cwiseProduct(tanh_c);
        Mat<S> dc = dc_next + (dh.array() * go.array() * (S(1) - tanh_c.array().square())).matrix();

        Mat<S> c_prev = (t > 0) ? cache.cell[ts - 1] : Mat<S>::Zero(b, h);
        Mat<S> h_prev = (t > 0) ? cache.hidden[ts - 1] : Mat<S>::Zero(b, h);

        Mat<S> dz(b, 4 * h);
        dz.leftCols(h) = (dc.cwiseProduct(gg).array() * gi.array() * (S(1) - gi.array())).matrix();
        dz.middleCols(h, h) = (dc.cwiseProduct(c_prev).array() * gf.array() * (S(1) - gf.array())).matrix();
        dz.middleCols(2 * h, h) = (dc.cwiseProduct(gi).array() * (S(1) - gg.array().square())).matrix();
        dz.rightCols(h) = (dout_gate.array() * go.array() * (S(1) - go.array())).matrix();

        for (Eigen::Index r = 0; r < b; ++r) x.row(r) = p.embedding.row(batch(r, t));
        g.lstm_kernel.noalias() += x.transpose() * dz;
        g.lstm_recurrent.noalias() += h_prev.transpose() * dz;
        g.lstm_bias += dz.colwise().sum().transpose();

        Mat<S> dx = dz * p.lstm_kernel.transpose();
        for (Eigen::Index r = 0; r < b; ++r) g.embedding.row(batch(r, t)) += dx.row(r);

        dh_next = dz * p.lstm_recurrent.transpose();
        dc_next = dc.cwiseProduct(gf);
    }

    result.loss = loss_sum / static_cast<double>(num_unmasked);
    return result;
}

}  // namespace fedtext
