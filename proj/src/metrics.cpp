#include "fedtext/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace fedtext {

EvalResult PositionCounts::to_result() const {
    if (counted_all == 0) throw std::invalid_argument("no positions to score");
    EvalResult r;
    r.accuracy = static_cast<double>(correct_all) / static_cast<double>(counted_all);
    r.accuracy_no_oov_no_eos =
        counted_no_oov_no_eos == 0
            ? 0.0
            : static_cast<double>(correct_no_oov_no_eos) / static_cast<double>(counted_no_oov_no_eos);
    r.loss = loss_sum / static_cast<double>(counted_all);
    r.positions_all = counted_all;
    r.positions_no_oov_no_eos = counted_no_oov_no_eos;
    return r;
}

PositionCounts count_positions(const std::vector<MatF>& logits_by_step, const IdMatrix& targets) {
    const Eigen::Index b = targets.rows(), t_len = targets.cols();
    if (static_cast<Eigen::Index>(logits_by_step.size()) != t_len) {
        throw std::invalid_argument("logits/targets shapes are inconsistent");
    }
    PositionCounts counts;
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const MatF& logits = logits_by_step[static_cast<size_t>(t)];
        if (logits.rows() != b) throw std::invalid_argument("logits/targets shapes are inconsistent");
        const Eigen::Index v = logits.cols();
        for (Eigen::Index r = 0; r < b; ++r) {
            const int32_t target = targets(r, t);
            if (target == kPadId) continue;

            Eigen::Index best = 0;
            for (Eigen::Index j = 1; j < v; ++j) {
                if (logits(r, j) > logits(r, best)) best = j;  // ties keep smallest id
            }
            const bool correct = best == static_cast<Eigen::Index>(target);

            const float max_logit = logits(r, best);
            double denom = 0.0;
            for (Eigen::Index j = 0; j < v; ++j) {
                denom += std::exp(static_cast<double>(logits(r, j) - max_logit));
            }
            counts.loss_sum +=
                -(static_cast<double>(logits(r, target) - max_logit) - std::log(denom));

            ++counts.counted_all;
            if (correct) ++counts.correct_all;
            if (target != kOovId && target != kEosId) {
                ++counts.counted_no_oov_no_eos;
                if (correct) ++counts.correct_no_oov_no_eos;
            }
        }
    }
    return counts;
}

double top1_accuracy(const std::vector<MatF>& logits_by_step, const IdMatrix& targets, MaskMode mode) {
    const PositionCounts counts = count_positions(logits_by_step, targets);
    const int64_t counted =
        mode == MaskMode::ALL ? counts.counted_all : counts.counted_no_oov_no_eos;
    const int64_t correct =
        mode == MaskMode::ALL ? counts.correct_all : counts.correct_no_oov_no_eos;
    if (counted == 0) throw std::invalid_argument("no positions to score");
    return static_cast<double>(correct) / static_cast<double>(counted);
}

void make_batch(std::span<const TokenSequence> sequences, IdMatrix& inputs, IdMatrix& targets,
                MaskMatrix& mask) {
    if (sequences.empty()) throw std::invalid_argument("empty batch");
    const Eigen::Index b = static_cast<Eigen::Index>(sequences.size());
    const Eigen::Index t_len = static_cast<Eigen::Index>(sequences.front().ids.size()) - 1;
    inputs.resize(b, t_len);
    targets.resize(b, t_len);
    mask.resize(b, t_len);
    for (Eigen::Index r = 0; r < b; ++r) {
        const auto& ids = sequences[static_cast<size_t>(r)].ids;
        if (static_cast<Eigen::Index>(ids.size()) != t_len + 1) {
            throw std::invalid_argument("sequence lengths are inconsistent within batch");
        }
        for (Eigen::Index t = 0; t < t_len; ++t) {
            inputs(r, t) = ids[static_cast<size_t>(t)];
            targets(r, t) = ids[static_cast<size_t>(t) + 1];
            mask(r, t) = targets(r, t) == kPadId ? 0 : 1;
        }
    }
}

EvalResult evaluate(const ModelParameters& params, const std::vector<TokenSequence>& dataset,
                    int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("no positions to score");
    PositionCounts total;
    IdMatrix inputs, targets;
    MaskMatrix mask;
    for (size_t start = 0; start < dataset.size(); start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), dataset.size() - start);
        make_batch({dataset.data() + start, count}, inputs, targets, mask);
        const ForwardCache cache = forward(params, inputs);
        total.add(count_positions(cache.logits, targets));
    }
    return total.to_result();
}

double summarize_last_rounds(const std::vector<RoundReport>& reports, int n) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    std::vector<double> vals;
    for (const auto& r : reports) {
        if (r.has_val) vals.push_back(r.val.accuracy_no_oov_no_eos);
    }
    if (static_cast<int>(vals.size()) < n) {
        throw std::invalid_argument("need at least " + std::to_string(n) +
                                    " evaluated rounds, have " + std::to_string(vals.size()));
    }
    double sum = 0.0;
    for (size_t i = vals.size() - static_cast<size_t>(n); i < vals.size(); ++i) sum += vals[i];
    return sum / static_cast<double>(n);
}

}  // namespace fedtext
