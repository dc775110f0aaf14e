#include "fedtext/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fedtext {

namespace {

constexpr uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'F', 'T', 'X', 'T'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == data_.size(); }

private:
    uint8_t byte() { return static_cast<uint8_t>(data_[pos_++]); }

    void need(size_t n) {
        if (pos_ + n > data_.size()) throw std::runtime_error("truncated checkpoint: " + path_);
    }

    std::string data_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace

std::vector<NamedTensor> extract_weights(const ModelParameters& params) {
    const uint64_t v = static_cast<uint64_t>(params.vocab_size());
    const uint64_t e = static_cast<uint64_t>(params.embedding_dim());
    const uint64_t h = static_cast<uint64_t>(params.lstm_units());
    const uint64_t dn = static_cast<uint64_t>(params.dense_units());

    std::vector<NamedTensor> tensors;
    tensors.reserve(8);
    auto add = [&](const char* name, std::vector<uint64_t> dims, const float* data, size_t n) {
        NamedTensor t;
        t.name = name;
        t.dims = std::move(dims);
        t.values.assign(data, data + n);
        tensors.push_back(std::move(t));
    };
    // RowMajor matrices and column vectors are contiguous in row-major order.
    add("embedding", {v, e}, params.embedding.data(), params.embedding.size());
    add("lstm_kernel", {e, 4 * h}, params.lstm_kernel.data(), params.lstm_kernel.size());
    add("lstm_recurrent", {h, 4 * h}, params.lstm_recurrent.data(), params.lstm_recurrent.size());
    add("lstm_bias", {4 * h}, params.lstm_bias.data(), params.lstm_bias.size());
    add("dense_w", {h, dn}, params.dense_w.data(), params.dense_w.size());
    add("dense_b", {dn}, params.dense_b.data(), params.dense_b.size());
    add("out_w", {dn, v}, params.out_w.data(), params.out_w.size());
    add("out_b", {v}, params.out_b.data(), params.out_b.size());
    return tensors;
}

void save_checkpoint(const ModelParameters& params, const std::string& path) {
    const auto tensors = extract_weights(params);

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_u32(out, static_cast<uint32_t>(t.name.size()));
        out.append(t.name);
        put_u32(out, static_cast<uint32_t>(t.dims.size()));
        for (uint64_t d : t.dims) put_u64(out, d);
        out.reserve(out.size() + t.values.size() * 4);
        for (float f : t.values) put_f32(out, f);
    }

    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write checkpoint: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParameters load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader r(std::move(data), path);

    if (r.bytes(4) != std::string(kMagic, 4)) throw std::runtime_error("checkpoint magic mismatch: " + path);
    const uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    const uint32_t count = r.u32();
    static const char* kExpectedNames[8] = {"embedding",  "lstm_kernel", "lstm_recurrent", "lstm_bias",
                                            "dense_w",    "dense_b",     "out_w",          "out_b"};
    if (count != 8) throw std::runtime_error("checkpoint shape mismatch: expected 8 tensors: " + path);

    struct Raw {
        std::vector<uint64_t> dims;
        std::vector<float> values;
    };
    std::vector<Raw> raw(8);
    for (uint32_t i = 0; i < 8; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        if (name != kExpectedNames[i]) {
            throw std::runtime_error("unexpected tensor name \"" + name + "\" in checkpoint: " + path);
        }
        const uint32_t rank = r.u32();
        if (rank < 1 || rank > 2) throw std::runtime_error("checkpoint shape mismatch: bad rank: " + path);
        uint64_t total = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            raw[i].dims.push_back(r.u64());
            total *= raw[i].dims.back();
        }
        raw[i].values.resize(total);
        for (uint64_t k = 0; k < total; ++k) raw[i].values[k] = r.f32();
    }
    if (!r.exhausted()) throw std::runtime_error("trailing bytes in checkpoint: " + path);

    auto dims_2d = [&](int i) {
        if (raw[i].dims.size() != 2) throw std::runtime_error("checkpoint shape mismatch: " + path);
        return std::pair<uint64_t, uint64_t>(raw[i].dims[0], raw[i].dims[1]);
    };
    auto dims_1d = [&](int i) {
        if (raw[i].dims.size() != 1) throw std::runtime_error("checkpoint shape mismatch: " + path);
        return raw[i].dims[0];
    };

    const auto [v, e] = dims_2d(0);
    const auto [e2, h4] = dims_2d(1);
    const auto [h, h4b] = dims_2d(2);
    const auto [hb, dn] = dims_2d(4);
    const auto [dnb, vb] = dims_2d(6);
    const bool consistent = e2 == e && h4 % 4 == 0 && h == h4 / 4 && h4b == h4 && dims_1d(3) == h4 &&
                            hb == h && dims_1d(5) == dn && dnb == dn && vb == v && dims_1d(7) == v;
    if (!consistent) throw std::runtime_error("checkpoint shape mismatch: " + path);

    ModelParameters p;
    auto fill_mat = [](MatF& m, uint64_t rows, uint64_t cols, const std::vector<float>& vals) {
        m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        std::memcpy(m.data(), vals.data(), vals.size() * sizeof(float));
    };
    auto fill_vec = [](VecF& vec, const std::vector<float>& vals) {
        vec.resize(static_cast<Eigen::Index>(vals.size()));
        std::memcpy(vec.data(), vals.data(), vals.size() * sizeof(float));
    };
    fill_mat(p.embedding, v, e, raw[0].values);
    fill_mat(p.lstm_kernel, e, h4, raw[1].values);
    fill_mat(p.lstm_recurrent, h, h4, raw[2].values);
    fill_vec(p.lstm_bias, raw[3].values);
    fill_mat(p.dense_w, h, dn, raw[4].values);
    fill_vec(p.dense_b, raw[5].values);
    fill_mat(p.out_w, dn, v, raw[6].values);
    fill_vec(p.out_b, raw[7].values);
    return p;
}

}  // namespace fedtext
