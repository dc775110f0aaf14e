#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fedtext/corpus.hpp"
#include "fedtext/model.hpp"

namespace fedtext {

// Pretrained word vectors keyed by token. Row i of vectors belongs to
// tokens[i]; all linear algebra in this module runs in double precision.
struct EmbeddingTable {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int32_t> index;
    MatD vectors;  // tokens.size() x dim

    int32_t dim() const { return static_cast<int32_t>(vectors.cols()); }
    const double* find(const std::string& token) const {
        auto it = index.find(token);
        return it == index.end() ? nullptr : vectors.row(it->second).data();
    }
};

struct PcaBasis {
    VecD mean;                // d
    MatD components;          // D x d, orthonormal rows, descending variance
    VecD explained_variance;  // D, sample-normalized (divides by V-1)
};

// Vocabulary-aligned embedding matrix plus the fraction of real vocabulary
// words found in the donor table.
struct AlignedEmbedding {
    MatD values;  // vocab_size x dim
    double coverage = 0.0;
};

// Text format: one entry per line, token followed by dim floats, single
// spaces, no header. dim is inferred from the first line.
EmbeddingTable load_embedding_table(const std::string& path);
void save_embedding_table(const std::vector<std::string>& tokens, const MatD& vectors,
                          const std::string& path);

// Top-D principal directions of the mean-centered matrix, computed by SVD.
// Sign convention: each component's largest-magnitude entry is positive
// (earliest index on ties), which makes the decomposition unique.
PcaBasis pca_fit(const MatD& x, int d_components);

// Subtracts the mean embedding, then removes the projections onto the top-D
// principal components of the centered matrix. Shape is preserved.
MatD ppa(const MatD& x, int d_components);

// Projects the mean-centered matrix onto its top-N principal components;
// columns are ordered by descending explained variance.
MatD pca_reduce(const MatD& x, int n_dims);

// ppa -> pca_reduce -> ppa, all with the same component threshold.
MatD pp_pca_pp(const MatD& x, int n_dims, int d_components);

// Row i holds the donor vector for vocabulary id i when the word is present;
// missing words and all four special rows draw i.i.d. from U[-0.05, 0.05].
AlignedEmbedding build_embedding_matrix(const Vocabulary& vocab, const EmbeddingTable& table,
                                        int dim, uint64_t rng_seed);

}  // namespace fedtext
