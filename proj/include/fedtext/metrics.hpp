#pragma once

#include <span>
#include <vector>

#include "fedtext/corpus.hpp"
#include "fedtext/model.hpp"

namespace fedtext {

// ALL masks pad targets only; NO_OOV_NO_EOS also drops positions whose target
// is oov or eos.
enum class MaskMode { ALL, NO_OOV_NO_EOS };

struct EvalResult {
    double accuracy = 0.0;
    double accuracy_no_oov_no_eos = 0.0;
    double loss = 0.0;
    int64_t positions_all = 0;
    int64_t positions_no_oov_no_eos = 0;
};

// Exact position counts for one or more batches; aggregation is count-based
// so results are independent of batch boundaries.
struct PositionCounts {
    int64_t correct_all = 0;
    int64_t counted_all = 0;
    int64_t correct_no_oov_no_eos = 0;
    int64_t counted_no_oov_no_eos = 0;
    double loss_sum = 0.0;  // summed -log p(target) over pad-free positions

    void add(const PositionCounts& other) {
        correct_all += other.correct_all;
        counted_all += other.counted_all;
        correct_no_oov_no_eos += other.correct_no_oov_no_eos;
        counted_no_oov_no_eos += other.counted_no_oov_no_eos;
        loss_sum += other.loss_sum;
    }

    EvalResult to_result() const;
};

// Argmax ties break toward the smallest id.
PositionCounts count_positions(const std::vector<MatF>& logits_by_step, const IdMatrix& targets);

double top1_accuracy(const std::vector<MatF>& logits_by_step, const IdMatrix& targets, MaskMode mode);

// Fills input ids, shifted targets, and the pad mask for a slice of sequences.
void make_batch(std::span<const TokenSequence> sequences, IdMatrix& inputs, IdMatrix& targets,
                MaskMatrix& mask);

EvalResult evaluate(const ModelParameters& params, const std::vector<TokenSequence>& dataset,
                    int batch_size);

struct RoundReport {
    int round = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double train_accuracy_no_oov_no_eos = 0.0;
    bool has_val = false;
    EvalResult val;
    std::vector<std::string> sampled_client_ids;
};

// Mean val_accuracy_no_oov_no_eos over the final n evaluated rounds.
double summarize_last_rounds(const std::vector<RoundReport>& reports, int n = 100);

}  // namespace fedtext
