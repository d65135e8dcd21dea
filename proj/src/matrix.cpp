#include "uq/matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "uq/errors.hpp"

namespace uq {

namespace flops {
namespace {
thread_local std::uint64_t g_count = 0;
}
void reset() { g_count = 0; }
std::uint64_t count() { return g_count; }
void add(std::uint64_t n) { g_count += n; }
}  // namespace flops

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw UsageError("matrix entries must be finite");
        }
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r > 0 ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return from_data(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    Matrix out(m, n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    flops::add(static_cast<std::uint64_t>(2) * m * k * n);
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch");
    }
}
}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    flops::add(out.size());
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] -= b.data()[i];
    }
    flops::add(out.size());
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= b.data()[i];
    }
    flops::add(out.size());
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= s;
    }
    flops::add(out.size());
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data()[i] += b.data()[i];
    }
    flops::add(a.size());
}

void axpy_in_place(Matrix& a, double s, const Matrix& b) {
    require_same_shape(a, b, "axpy_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data()[i] += s * b.data()[i];
    }
    flops::add(2 * a.size());
}

double sum_squares(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a.data()[i] * a.data()[i];
    }
    return s;
}

bool all_finite(const Matrix& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a.data()[i])) {
            return false;
        }
    }
    return true;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        return false;
    }
    return a.size() == 0 ||
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace uq
