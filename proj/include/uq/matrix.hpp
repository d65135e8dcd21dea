#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace uq {

// multiply-accumulate instrumentation, thread-local so concurrent eval passes
// don't race on the counter
namespace flops {
void reset();
std::uint64_t count();
void add(std::uint64_t n);
}  // namespace flops

// dense row-major float64 matrix
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    // validating constructors for data crossing an external boundary;
    // NaN/Inf entries are rejected here, internal ops assume clean inputs
    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);
void axpy_in_place(Matrix& a, double s, const Matrix& b);  // a += s*b

double sum_squares(const Matrix& a);
bool all_finite(const Matrix& a);
bool bitwise_equal(const Matrix& a, const Matrix& b);

}  // namespace uq
