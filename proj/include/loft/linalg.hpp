// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "loft/matrix.hpp"

namespace loft {

/// Kronecker product: block (i,j) of the result is A(i,j) * B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    require_finite(a, "kron: A");
    require_finite(b, "kron: B");
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            if (aij == 0.0) continue;
            for (Index p = 0; p < b.rows(); ++p)
                for (Index q = 0; q < b.cols(); ++q)
                    out(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
        }
    }
    return out;
}

/// Column-wise Khatri-Rao product: column j of the result is kron(A_j, B_j).
inline Matrix khatri_rao_cols(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("khatri_rao_cols: column counts differ: " +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
    }
    Matrix out(a.rows() * b.rows(), a.cols());
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i) {
            const double aij = a(i, j);
            for (Index p = 0; p < b.rows(); ++p) out(i * b.rows() + p, j) = aij * b(p, j);
        }
    return out;
}

/// Row-wise Kronecker (face-splitting / transposed Khatri-Rao): row i of the
/// result is kron(row_i(A), row_i(B)).
inline Matrix face_split_rows(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("face_split_rows: row counts differ: " +
                                    std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
    }
    Matrix out(a.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (Index q = 0; q < b.cols(); ++q) out(i, j * b.cols() + q) = aij * b(i, q);
        }
    return out;
}

/// ||U V^T||_F = sqrt(tr((U^T U)(V^T V))) without densifying the product.
inline double lowrank_fro_norm(const Matrix& u, const Matrix& v) {
    if (u.cols() != v.cols()) {
        throw std::invalid_argument("lowrank_fro_norm: factor ranks differ: " +
                                    std::to_string(u.cols()) + " vs " + std::to_string(v.cols()));
    }
    const Matrix utu = transpose(u) * u;
    const Matrix vtv = transpose(v) * v;
    const double t = trace_of_product(utu, vtv);
    return std::sqrt(std::max(t, 0.0)); // tiny negatives from cancellation
}

/// Thin SVD, M (p x q) = U diag(sigma) V^T with U p x k, V q x k, k = min(p,q),
/// sigma descending. Sign convention: the largest-magnitude entry of each left
/// singular vector is nonnegative, so seeded factorizations are reproducible.
struct Svd {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

namespace detail {

// One-sided Jacobi on the columns of W (p x q, p >= q assumed by caller).
// Accumulates the right rotations in V.
inline void jacobi_sweep_svd(Matrix& w, Matrix& v) {
    const Index q = w.cols();
    const Index p = w.rows();
    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (Index i = 0; i < q - 1; ++i) {
            for (Index j = i + 1; j < q; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (Index k = 0; k < p; ++k) {
                    alpha += w(k, i) * w(k, i);
                    beta += w(k, j) * w(k, j);
                    gamma += w(k, i) * w(k, j);
                }
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (Index k = 0; k < p; ++k) {
                    const double wi = w(k, i), wj = w(k, j);
                    w(k, i) = c * wi - s * wj;
                    w(k, j) = s * wi + c * wj;
                }
                for (Index k = 0; k < q; ++k) {
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
            }
        }
        if (!rotated) break;
    }
}

inline void apply_svd_sign_convention(Matrix& u, Matrix& v) {
    for (Index j = 0; j < u.cols(); ++j) {
        Index arg = 0;
        double best = 0.0;
        for (Index i = 0; i < u.rows(); ++i) {
            const double a = std::abs(u(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (best > 0.0 && u(arg, j) < 0.0) {
            for (Index i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (Index i = 0; i < v.rows(); ++i) v(i, j) = -v(i, j);
        }
    }
}

inline Svd svd_tall(const Matrix& m) {
    Matrix w = m;
    Matrix v = Matrix::identity(m.cols());
    jacobi_sweep_svd(w, v);

    const Index q = m.cols();
    std::vector<double> sigma(static_cast<std::size_t>(q));
    for (Index j = 0; j < q; ++j) {
        double s = 0.0;
        for (Index k = 0; k < m.rows(); ++k) s += w(k, j) * w(k, j);
        sigma[static_cast<std::size_t>(j)] = std::sqrt(s);
    }

    std::vector<Index> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return sigma[static_cast<std::size_t>(a)] > sigma[static_cast<std::size_t>(b)];
    });

    Svd out;
    out.u = Matrix(m.rows(), q);
    out.v = Matrix(q, q);
    out.sigma.resize(static_cast<std::size_t>(q));
    for (Index jj = 0; jj < q; ++jj) {
        const Index src = order[static_cast<std::size_t>(jj)];
        const double s = sigma[static_cast<std::size_t>(src)];
        out.sigma[static_cast<std::size_t>(jj)] = s;
        if (s > 0.0) {
            for (Index k = 0; k < m.rows(); ++k) out.u(k, jj) = w(k, src) / s;
        }
        for (Index k = 0; k < q; ++k) out.v(k, jj) = v(k, src);
    }
    apply_svd_sign_convention(out.u, out.v);
    return out;
}

} // namespace detail

inline Svd svd(const Matrix& m) {
    require_finite(m, "svd");
    if (m.rows() >= m.cols()) return detail::svd_tall(m);
    Svd flipped = detail::svd_tall(transpose(m));
    Svd out;
    out.u = std::move(flipped.v);
    out.v = std::move(flipped.u);
    out.sigma = std::move(flipped.sigma);
    // Re-apply the convention on the left factor of the original orientation.
    detail::apply_svd_sign_convention(out.u, out.v);
    return out;
}

inline std::vector<double> singular_values(const Matrix& m) { return svd(m).sigma; }

/// Standard numerical-rank cutoff: max(p,q) * eps * sigma_max.
inline double rank_cutoff(Index rows, Index cols, double sigma_max) {
    return static_cast<double>(std::max(rows, cols)) *
           std::numeric_limits<double>::epsilon() * sigma_max;
}

inline Index numerical_rank(const Matrix& m) {
    const auto sv = singular_values(m);
    if (sv.empty() || sv.front() == 0.0) return 0;
    const double cutoff = rank_cutoff(m.rows(), m.cols(), sv.front());
    Index r = 0;
    for (double s : sv)
        if (s > cutoff) ++r;
    return r;
}

/// (M^T M)^{-1} with a graceful pseudo-inverse fallback for rank-deficient M.
/// effective_rank counts singular values of M above the numerical-rank cutoff.
struct GramInverse {
    Matrix inverse;
    Index effective_rank = 0;
};

inline GramInverse gram_inverse(const Matrix& m) {
    const Svd dec = svd(m);
    const Index r = m.cols();
    GramInverse out;
    out.inverse = Matrix(r, r);
    const double smax = dec.sigma.empty() ? 0.0 : dec.sigma.front();
    if (smax == 0.0) return out; // pinv of the zero Gram matrix is zero
    const double cutoff = rank_cutoff(m.rows(), m.cols(), smax);
    // (M^T M)^+ = V diag(sigma^-2) V^T over the retained spectrum.
    for (Index k = 0; k < r; ++k) {
        const double s = dec.sigma[static_cast<std::size_t>(k)];
        if (s <= cutoff) continue;
        ++out.effective_rank;
        const double w = 1.0 / (s * s);
        for (Index i = 0; i < r; ++i) {
            const double vik = dec.v(i, k) * w;
            if (vik == 0.0) continue;
            for (Index j = 0; j < r; ++j) out.inverse(i, j) += vik * dec.v(j, k);
        }
    }
    return out;
}

/// Orthogonal projector onto the column space of M: M (M^T M)^+ M^T.
inline Matrix projector(const Matrix& m) {
    const GramInverse g = gram_inverse(m);
    return m * g.inverse * transpose(m);
}

/// Thin QR via modified Gram-Schmidt with one re-orthogonalization pass.
/// Expects full column rank (callers feed Gaussian factors).
struct Qr {
    Matrix q;
    Matrix r;
};

inline Qr thin_qr(const Matrix& m) {
    const Index p = m.rows(), k = m.cols();
    if (p < k) throw std::invalid_argument("thin_qr: expects rows >= cols");
    Qr out{Matrix(p, k), Matrix(k, k)};
    Matrix w = m;
    for (Index j = 0; j < k; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (Index i = 0; i < j; ++i) {
                double dot = 0.0;
                for (Index t = 0; t < p; ++t) dot += out.q(t, i) * w(t, j);
                out.r(i, j) += dot;
                for (Index t = 0; t < p; ++t) w(t, j) -= dot * out.q(t, i);
            }
        }
        double nrm = 0.0;
        for (Index t = 0; t < p; ++t) nrm += w(t, j) * w(t, j);
        nrm = std::sqrt(nrm);
        out.r(j, j) = nrm;
        if (nrm == 0.0) {
            throw std::invalid_argument("thin_qr: rank-deficient input");
        }
        for (Index t = 0; t < p; ++t) out.q(t, j) = w(t, j) / nrm;
    }
    return out;
}

} // namespace loft
