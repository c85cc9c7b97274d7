// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace loft {

using Index = std::ptrdiff_t;

/// Dense real matrix, row-major, double precision. The single value type the
/// whole library moves around; small enough that value semantics are fine.
class Matrix {
public:
    Matrix() = default;

    Matrix(Index rows, Index cols) : rows_(rows), cols_(cols) {
        if (rows <= 0 || cols <= 0) {
            throw std::invalid_argument("Matrix: dimensions must be positive, got " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
        }
        data_.assign(static_cast<std::size_t>(rows * cols), 0.0);
    }

    static Matrix zeros(Index rows, Index cols) { return Matrix(rows, cols); }

    static Matrix identity(Index n) {
        Matrix m(n, n);
        for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const Index r = static_cast<Index>(rows.size());
        if (r == 0) throw std::invalid_argument("Matrix::from_rows: empty row list");
        const Index c = static_cast<Index>(rows.begin()->size());
        Matrix m(r, c);
        Index i = 0;
        for (const auto& row : rows) {
            if (static_cast<Index>(row.size()) != c) {
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            }
            Index j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index size() const { return rows_ * cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(Index i, Index j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
    double operator()(Index i, Index j) const {
        return data_[static_cast<std::size_t>(i * cols_ + j)];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& rhs) {
        require_same_shape(rhs, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
        return *this;
    }

    Matrix& operator-=(const Matrix& rhs) {
        require_same_shape(rhs, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

private:
    void require_same_shape(const Matrix& rhs, const char* op) const {
        if (!same_shape(rhs)) {
            throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str() +
                                        " vs " + rhs.shape_str());
        }
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
inline Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
inline Matrix operator*(Matrix lhs, double s) { return lhs *= s; }
inline Matrix operator*(double s, Matrix rhs) { return rhs *= s; }

inline Matrix operator-(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = -v;
    return out;
}

/// Matrix product. ikj loop order keeps the inner loop contiguous.
inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ: " +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    const Index n = b.cols();
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (Index j = 0; j < n; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s = std::max(s, std::abs(v));
    return s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        s = std::max(s, std::abs(a.data()[i] - b.data()[i]));
    return s;
}

/// tr(A B) without forming the product; needs A.cols == B.rows and A.rows == B.cols.
inline double trace_of_product(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows() || a.rows() != b.cols()) {
        throw std::invalid_argument("trace_of_product: shapes not conformable");
    }
    double s = 0.0;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, i);
    return s;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) {
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
    }
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) +
                                    "x" + std::to_string(cols) + ", got " +
                                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

} // namespace loft
