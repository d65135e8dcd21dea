#include "uq/layers.hpp"

#include <cmath>
#include <string>

#include "uq/errors.hpp"

namespace uq {

Linear Linear::create(std::size_t in, std::size_t out, RngStream& rng) {
    Linear l = zeros(in, out);
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < l.w.size(); ++i) {
        l.w.data()[i] = (2.0 * rng.next_uniform() - 1.0) * a;
    }
    return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    Linear l;
    l.w = Matrix(in, out);
    l.b = Matrix(1, out);
    l.dw = Matrix(in, out);
    l.db = Matrix(1, out);
    return l;
}

Matrix Linear::forward(const Matrix& x) const {
    if (x.cols() != in_dim()) {
        throw ShapeError("linear: input has " + std::to_string(x.cols()) + " features, expected " +
                         std::to_string(in_dim()));
    }
    Matrix out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += b(0, j);
        }
    }
    flops::add(out.size());
    return out;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
    // dw += x^T dy, db += column sums of dy, dx = dy w^T
    add_in_place(dw, matmul(transpose(x), dy));
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        for (std::size_t j = 0; j < dy.cols(); ++j) {
            db(0, j) += dy(i, j);
        }
    }
    return matmul(dy, transpose(w));
}

void Linear::zero_grad() {
    dw = Matrix(w.rows(), w.cols());
    db = Matrix(1, b.cols());
}

BatchNorm BatchNorm::create(std::size_t dim) {
    BatchNorm bn;
    bn.gamma = Matrix(1, dim, 1.0);
    bn.beta = Matrix(1, dim, 0.0);
    bn.dgamma = Matrix(1, dim);
    bn.dbeta = Matrix(1, dim);
    bn.running_mean = Matrix(1, dim, 0.0);
    bn.running_var = Matrix(1, dim, 1.0);
    return bn;
}

Matrix BatchNorm::forward_train(const Matrix& x, Cache* cache) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (d != gamma.cols()) {
        throw ShapeError("batchnorm: feature count mismatch");
    }
    if (n < 2) {
        throw UsageError("batchnorm: train mode needs a batch of at least 2");
    }
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += x(i, j);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        mean[j] /= static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x(i, j) - mean[j];
            var[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        var[j] /= static_cast<double>(n);
    }
    for (std::size_t j = 0; j < d; ++j) {
        running_mean(0, j) = momentum * running_mean(0, j) + (1.0 - momentum) * mean[j];
        running_var(0, j) = momentum * running_var(0, j) + (1.0 - momentum) * var[j];
    }

    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) {
        inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    }
    Matrix out(n, d);
    Matrix xhat(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (x(i, j) - mean[j]) * inv_std[j];
            xhat(i, j) = h;
            out(i, j) = h * gamma(0, j) + beta(0, j);
        }
    }
    flops::add(4 * out.size());
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Matrix BatchNorm::forward_eval(const Matrix& x) const {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (d != gamma.cols()) {
        throw ShapeError("batchnorm: feature count mismatch");
    }
    Matrix out(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double inv_std = 1.0 / std::sqrt(running_var(0, j) + eps);
        const double m = running_mean(0, j);
        const double g = gamma(0, j);
        const double bt = beta(0, j);
        for (std::size_t i = 0; i < n; ++i) {
            out(i, j) = (x(i, j) - m) * inv_std * g + bt;
        }
    }
    flops::add(3 * out.size());
    return out;
}

Matrix BatchNorm::backward(const Cache& cache, const Matrix& dy) {
    const std::size_t n = dy.rows();
    const std::size_t d = dy.cols();
    std::vector<double> sum_dy(d, 0.0), sum_dy_xhat(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            sum_dy[j] += dy(i, j);
            sum_dy_xhat[j] += dy(i, j) * cache.xhat(i, j);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        dbeta(0, j) += sum_dy[j];
        dgamma(0, j) += sum_dy_xhat[j];
    }
    // dx = gamma*inv_std/n * (n*dy - sum(dy) - xhat*sum(dy*xhat))
    Matrix dx(n, d);
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            dx(i, j) = gamma(0, j) * cache.inv_std[j] / nn *
                       (nn * dy(i, j) - sum_dy[j] - cache.xhat(i, j) * sum_dy_xhat[j]);
        }
    }
    return dx;
}

void BatchNorm::zero_grad() {
    dgamma = Matrix(1, gamma.cols());
    dbeta = Matrix(1, beta.cols());
}

Matrix relu(const Matrix& x) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < 0.0) {
            out.data()[i] = 0.0;
        }
    }
    flops::add(out.size());
    return out;
}

Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (pre.data()[i] <= 0.0) {
            dx.data()[i] = 0.0;
        }
    }
    return dx;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            mx = std::max(mx, logits(i, j));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            const double e = std::exp(logits(i, j) - mx);
            out(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out(i, j) /= denom;
        }
    }
    flops::add(3 * out.size());
    return out;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix* probs_out) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("cross entropy: label count mismatch");
    }
    Matrix probs = softmax(logits);
    // -log p computed as logsumexp(l - mx) - (l_y - mx), exact even when the
    // softmax itself underflows
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw UsageError("cross entropy: label " + std::to_string(y) + " out of range");
        }
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            mx = std::max(mx, logits(i, j));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            denom += std::exp(logits(i, j) - mx);
        }
        loss += std::log(denom) - (logits(i, static_cast<std::size_t>(y)) - mx);
    }
    loss /= static_cast<double>(logits.rows());
    if (probs_out != nullptr) {
        *probs_out = std::move(probs);
    }
    return loss;
}

Matrix softmax_cross_entropy_backward(const Matrix& probs, std::span<const int> labels) {
    Matrix d = probs;
    const double inv_n = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        d(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            d(i, j) *= inv_n;
        }
    }
    return d;
}

Matrix dropout(const Matrix& x, double rate, RngStream& rng, Matrix* mask_out) {
    if (rate < 0.0 || rate >= 1.0) {
        throw UsageError("dropout rate must be in [0, 1)");
    }
    if (rate == 0.0) {
        if (mask_out != nullptr) {
            *mask_out = Matrix(x.rows(), x.cols(), 1.0);
        }
        return x;
    }
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    Matrix out(x.rows(), x.cols());
    Matrix mask(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double m = rng.next_uniform() < keep ? inv_keep : 0.0;
        mask.data()[i] = m;
        out.data()[i] = x.data()[i] * m;
    }
    flops::add(out.size());
    if (mask_out != nullptr) {
        *mask_out = std::move(mask);
    }
    return out;
}

}  // namespace uq
