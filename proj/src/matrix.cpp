#include "fairsad/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairsad {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data size " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw std::invalid_argument("Matrix: ragged initializer list");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column_vector(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix Matrix::col_slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > cols_) {
        throw std::out_of_range("Matrix::col_slice: [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") outside " + shape_string());
    }
    Matrix out(rows_, end - begin);
    for (std::size_t r = 0; r < rows_; ++r) {
        std::copy(data_.begin() + r * cols_ + begin, data_.begin() + r * cols_ + end,
                  out.data_.begin() + r * out.cols_);
    }
    return out;
}

Matrix Matrix::transpose() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            out(c, r) = (*this)(r, c);
        }
    }
    return out;
}

void Matrix::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw std::invalid_argument("Matrix::operator+=: " + shape_string() + " vs " +
                                    other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: " + a.shape_string() + " * " + b.shape_string());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        const double* ai = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) {
                continue;
            }
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: " + a.shape_string() + "^T * " +
                                    b.shape_string());
    }
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* ar = a.row(r).data();
        const double* br = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = ar[i];
            if (ari == 0.0) {
                continue;
            }
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += ari * br[j];
            }
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: " + a.shape_string() + " * " +
                                    b.shape_string() + "^T");
    }
    Matrix c(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += ai[k] * bj[k];
            }
            c(i, j) = acc;
        }
    }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: " + a.shape_string() + " vs " +
                                    b.shape_string());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

}  // namespace fairsad
