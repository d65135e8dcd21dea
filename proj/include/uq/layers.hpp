#pragma once

#include <span>
#include <vector>

#include "uq/matrix.hpp"
#include "uq/rng.hpp"

namespace uq {

// fully connected layer; weights are in x out, bias 1 x out
struct Linear {
    Matrix w, b;
    Matrix dw, db;

    // uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
    static Linear create(std::size_t in, std::size_t out, RngStream& rng);
    static Linear zeros(std::size_t in, std::size_t out);

    std::size_t in_dim() const { return w.rows(); }
    std::size_t out_dim() const { return w.cols(); }

    Matrix forward(const Matrix& x) const;
    // x must be the input of the matching forward; accumulates dw/db, returns dx
    Matrix backward(const Matrix& x, const Matrix& dy);
    void zero_grad();
};

// batch normalization over feature columns
struct BatchNorm {
    Matrix gamma, beta;  // 1 x dim
    Matrix dgamma, dbeta;
    Matrix running_mean, running_var;  // 1 x dim
    double eps = 1e-5;
    double momentum = 0.9;

    static BatchNorm create(std::size_t dim);

    struct Cache {
        Matrix xhat;
        std::vector<double> inv_std;
    };

    // train mode standardizes by batch statistics and updates running stats in
    // place; a batch of 1 is rejected (zero variance everywhere)
    Matrix forward_train(const Matrix& x, Cache* cache = nullptr);
    Matrix forward_eval(const Matrix& x) const;
    Matrix backward(const Cache& cache, const Matrix& dy);
    void zero_grad();
};

Matrix relu(const Matrix& x);
// subgradient at 0 is 0; pre is the input of the matching relu
Matrix relu_backward(const Matrix& pre, const Matrix& dy);

// row-wise softmax, max-shifted
Matrix softmax(const Matrix& logits);

// mean cross-entropy over the batch; fills probs_out with softmax(logits) when non-null
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix* probs_out = nullptr);
// d(mean CE)/dlogits = (probs - onehot) / batch
Matrix softmax_cross_entropy_backward(const Matrix& probs, std::span<const int> labels);

// inverted dropout: keep prob 1-rate, kept entries scaled by 1/(1-rate).
// mask_out, when non-null, records the per-entry multiplier for backward.
Matrix dropout(const Matrix& x, double rate, RngStream& rng, Matrix* mask_out = nullptr);

}  // namespace uq
