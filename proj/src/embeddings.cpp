#include "fedtext/embeddings.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "fedtext/prng.hpp"

namespace fedtext {

namespace {

// Splits a line on single spaces into token + numeric fields.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ' ') {
            if (!cur.empty()) fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) fields.push_back(std::move(cur));
    return fields;
}

double parse_double_or_throw(const std::string& field, const std::string& path, size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || field.empty()) {
        throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                 ": non-numeric field \"" + field + "\"");
    }
    return v;
}

}  // namespace

EmbeddingTable load_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);

    std::vector<std::vector<double>> rows;
    EmbeddingTable table;
    std::string line;
    size_t line_no = 0;
    int32_t dim = -1;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() < 2) {
            throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                     ": expected a token and at least one value");
        }
        const int32_t row_dim = static_cast<int32_t>(fields.size()) - 1;
        if (dim < 0) {
            dim = row_dim;
        } else if (row_dim != dim) {
            throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                     ": dimension " + std::to_string(row_dim) +
                                     " does not match first-line dimension " + std::to_string(dim));
        }
        auto [it, inserted] =
            table.index.emplace(fields[0], static_cast<int32_t>(table.tokens.size()));
        (void)it;
        if (!inserted) {
            throw std::runtime_error(path + ": parse error on line " + std::to_string(line_no) +
                                     ": duplicate token \"" + fields[0] + "\"");
        }
        table.tokens.push_back(fields[0]);
        std::vector<double> values(static_cast<size_t>(dim));
        for (int32_t i = 0; i < dim; ++i) {
            values[static_cast<size_t>(i)] = parse_double_or_throw(fields[static_cast<size_t>(i) + 1], path, line_no);
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error("empty embedding file: " + path);

    table.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int32_t c = 0; c < dim; ++c) {
            table.vectors(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<size_t>(c)];
        }
    }
    return table;
}

void save_embedding_table(const std::vector<std::string>& tokens, const MatD& vectors,
                          const std::string& path) {
    if (static_cast<Eigen::Index>(tokens.size()) != vectors.rows()) {
        throw std::invalid_argument("token count does not match vector rows");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embedding file: " + path);
    char buf[64];
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
        out << tokens[static_cast<size_t>(r)];
        for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), " %.9g", vectors(r, c));
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("embedding write failed: " + path);
}

PcaBasis pca_fit(const MatD& x, int d_components) {
    const Eigen::Index v = x.rows(), d = x.cols();
    if (v < 2) throw std::invalid_argument("pca_fit requires at least two rows");
    if (d_components < 1 || d_components > std::min(v, d)) {
        throw std::invalid_argument("pca_fit component count out of range");
    }

    PcaBasis basis;
    basis.mean = x.colwise().mean().transpose();
    MatD centered = x.rowwise() - basis.mean.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const auto& singular = svd.singularValues();

    basis.components.resize(d_components, d);
    basis.explained_variance.resize(d_components);
    for (int i = 0; i < d_components; ++i) {
        Eigen::RowVectorXd comp = svd.matrixV().col(i).transpose();
        // Canonical sign: the largest-magnitude entry is positive.
        Eigen::Index max_idx = 0;
        for (Eigen::Index j = 1; j < d; ++j) {
            if (std::abs(comp(j)) > std::abs(comp(max_idx))) max_idx = j;
        }
        if (comp(max_idx) < 0.0) comp = -comp;
        basis.components.row(i) = comp;
        basis.explained_variance(i) = singular(i) * singular(i) / static_cast<double>(v - 1);
    }
    return basis;
}

MatD ppa(const MatD& x, int d_components) {
    const PcaBasis basis = pca_fit(x, d_components);
    MatD centered = x.rowwise() - basis.mean.transpose();
    // v <- v - sum_i (u_i . v) u_i, vectorized over all rows.
    return centered - (centered * basis.components.transpose()) * basis.components;
}

MatD pca_reduce(const MatD& x, int n_dims) {
    if (n_dims < 1 || n_dims > x.cols()) {
        throw std::invalid_argument("pca_reduce target dimension out of range");
    }
    const PcaBasis basis = pca_fit(x, n_dims);
    MatD centered = x.rowwise() - basis.mean.transpose();
    return centered * basis.components.transpose();
}

MatD pp_pca_pp(const MatD& x, int n_dims, int d_components) {
    if (d_components < 1 || d_components > n_dims || n_dims > x.cols()) {
        throw std::invalid_argument("pp_pca_pp requires 1 <= D <= N <= dim");
    }
    return ppa(pca_reduce(ppa(x, d_components), n_dims), d_components);
}

AlignedEmbedding build_embedding_matrix(const Vocabulary& vocab, const EmbeddingTable& table,
                                        int dim, uint64_t rng_seed) {
    if (dim != table.dim()) {
        throw std::invalid_argument("requested dim " + std::to_string(dim) +
                                    " does not match embedding table dim " +
                                    std::to_string(table.dim()));
    }
    const int32_t v = vocab.size();
    AlignedEmbedding aligned;
    aligned.values.resize(v, dim);

    Rng rng(derive_seed(rng_seed, "embedding_fill"));
    int64_t hits = 0;
    for (int32_t id = 0; id < v; ++id) {
        const double* row = id < kNumSpecialTokens ? nullptr : table.find(vocab.word(id));
        if (row != nullptr) {
            aligned.values.row(id) = Eigen::Map<const Eigen::RowVectorXd>(row, dim);
            ++hits;
        } else {
            for (int c = 0; c < dim; ++c) aligned.values(id, c) = rng.uniform(-0.05, 0.05);
        }
    }
    const int64_t real_words = v - kNumSpecialTokens;
    aligned.coverage = real_words > 0 ? static_cast<double>(hits) / static_cast<double>(real_words) : 0.0;
    return aligned;
}

}  // namespace fedtext
