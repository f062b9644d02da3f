#pragma once

// Symmetric in-batch-negative objective. For M pairs the logits are an
// M x (M+H) matrix of cosine similarities scaled by a trainable exp(tau);
// diagonal entries are the positives. H explicit hard-negative columns
// enlarge only the row-direction softmax.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cpte/tensor.hpp"

namespace cpte {

// tau lives in log space: logits = cosine * exp(tau). exp(tau) is kept in
// (0, max_scale] by clamping the parameter after each optimizer step.
struct Temperature {
    Tensor log_scale;
    double max_scale = 100.0;

    static Temperature init(double initial_scale = 1.0 / 0.07, double max_scale = 100.0) {
        if (initial_scale <= 0.0 || initial_scale > max_scale) {
            throw std::invalid_argument("temperature: initial scale must be in (0, max_scale]");
        }
        Temperature t;
        t.log_scale = Tensor::scalar(std::log(initial_scale), true);
        t.max_scale = max_scale;
        return t;
    }

    double scale() const { return std::exp(log_scale.value()); }

    void clamp() {
        const double hi = std::log(max_scale);
        if (log_scale.data()[0] > hi) log_scale.data()[0] = hi;
    }
};

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_sim: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_sim: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct SimilarityMatrix {
    Tensor logits;   // [M x (M+H)]
    int positives;   // M

    int hard_negatives() const { return logits.cols() - positives; }
};

// X: [M x d] unit-norm rows, Y: [(M+H) x d] unit-norm rows.
// Entry (i, j) = <x_i, y_j> * exp(tau).
inline SimilarityMatrix logit_matrix(Tape& tape, const Tensor& x, const Tensor& y, const Temperature& temperature) {
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
        throw std::invalid_argument("logit_matrix: embedding dimension mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(y.shape()));
    }
    if (y.rows() < x.rows()) {
        throw std::invalid_argument("logit_matrix: fewer y rows than x rows");
    }
    return SimilarityMatrix{scale_by_exp(tape, matmul_nt(tape, x, y), temperature.log_scale), x.rows()};
}

// Mean of the row- and column-direction cross-entropies with diagonal
// targets: loss = (l_rows + l_cols) / 2. Hard-negative columns participate
// in the row direction only.
inline Tensor symmetric_loss(Tape& tape, const SimilarityMatrix& sm) {
    if (sm.positives < 1 || sm.logits.rows() != sm.positives) {
        throw std::invalid_argument("symmetric_loss: malformed similarity matrix");
    }
    Tensor l_rows = ce_diag_rows(tape, sm.logits);
    Tensor l_cols = ce_diag_cols(tape, sm.logits);
    return scale(tape, add(tape, l_rows, l_cols), 0.5);
}

// Stack explicit hard-negative embedding rows beneath the positives.
inline Tensor append_negative_rows(Tape& tape, const Tensor& y, const std::vector<Tensor>& negative_rows) {
    if (negative_rows.empty()) return y;
    std::vector<Tensor> parts;
    parts.reserve(negative_rows.size() + 1);
    parts.push_back(y);
    for (const Tensor& n : negative_rows) parts.push_back(n);
    return concat_rows(tape, parts);
}

inline Tensor contrastive_loss(Tape& tape, const Tensor& x, const Tensor& y, const Temperature& temperature) {
    return symmetric_loss(tape, logit_matrix(tape, x, y, temperature));
}

}  // namespace cpte
