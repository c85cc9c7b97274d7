// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "loft/adapter.hpp"
#include "loft/linalg.hpp"
#include "loft/matrix.hpp"

namespace loft {

/// Optimizer state for the calibrated Adam-style low-rank steppers.
///
/// mU/mV are first moments of the scaled factor gradients. pU/pV accumulate
/// the row-wise face-split cross terms (m x r^2, n x r^2) needed to rebuild
/// the full-space second moment after the subspace moves: column a*r+b of a
/// cross-term buffer corresponds to the factor pair (a, b), which matches the
/// kron(C, C) transport ordering.
struct LoftAdamState {
    Matrix mu; // m x r
    Matrix mv; // n x r
    Matrix pu; // m x r^2
    Matrix pv; // n x r^2
    long step = 0;
    bool update_u_next = true;
};

inline LoftAdamState make_loft_adam_state(Index m, Index n, Index r, bool update_u_first = true) {
    LoftAdamState s;
    s.mu = Matrix(m, r);
    s.mv = Matrix(n, r);
    s.pu = Matrix(m, r * r);
    s.pv = Matrix(n, r * r);
    s.update_u_next = update_u_first;
    return s;
}

/// Calibration pair transporting moment buffers between consecutive low-rank
/// subspaces. Equals the identity when the corresponding factor is unchanged.
struct CalibrationPair {
    Matrix cv; // r x r, (V_prev^T V)(V^T V)^{-1}
    Matrix cu; // r x r, (U_prev^T U)(U^T U)^{-1}
};

inline CalibrationPair calibration_matrices(const LowRankAdapter& a) {
    return {(transpose(a.v_prev) * a.v) * gram_inverse(a.v).inverse,
            (transpose(a.u_prev) * a.u) * gram_inverse(a.u).inverse};
}

/// First-moment update with recalibration:
///   mU <- beta1 * mU * C_V + (1 - beta1) * gu_scaled, mirrored for V.
/// Both buffers are updated every step regardless of which factor will be
/// stepped. With calibrate=false the transport degrades to the identity
/// (plain per-factor Adam moments).
inline void update_first_moments(LoftAdamState& s, const CalibrationPair& calib,
                                 const Matrix& gu_scaled, const Matrix& gv_scaled, double beta1,
                                 bool calibrate) {
    if (calibrate) {
        s.mu = beta1 * (s.mu * calib.cv) + (1.0 - beta1) * gu_scaled;
        s.mv = beta1 * (s.mv * calib.cu) + (1.0 - beta1) * gv_scaled;
    } else {
        s.mu = beta1 * s.mu + (1.0 - beta1) * gu_scaled;
        s.mv = beta1 * s.mv + (1.0 - beta1) * gv_scaled;
    }
}

/// Cross-term update:
///   pU <- beta2 * pU * (C_V kron C_V) + (1 - beta2) * (gu_scaled face-split gu_scaled).
inline void update_cross_terms(LoftAdamState& s, const CalibrationPair& calib,
                               const Matrix& gu_scaled, const Matrix& gv_scaled, double beta2,
                               bool calibrate) {
    if (calibrate) {
        s.pu = beta2 * (s.pu * kron(calib.cv, calib.cv)) +
               (1.0 - beta2) * face_split_rows(gu_scaled, gu_scaled);
        s.pv = beta2 * (s.pv * kron(calib.cu, calib.cu)) +
               (1.0 - beta2) * face_split_rows(gv_scaled, gv_scaled);
    } else {
        s.pu = beta2 * s.pu + (1.0 - beta2) * face_split_rows(gu_scaled, gu_scaled);
        s.pv = beta2 * s.pv + (1.0 - beta2) * face_split_rows(gv_scaled, gv_scaled);
    }
}

/// Full-space first-moment estimate: mU V^T (m x n).
inline Matrix reconstruct_first_moment(const Matrix& m_factor, const Matrix& other_factor) {
    return m_factor * transpose(other_factor);
}

/// Full-space second-moment estimate from the cross-term buffer:
///   result(i, j) = sum_{a,b} p(i, a*r+b) V(j,a) V(j,b),
/// i.e. p times the r^2 x n matrix whose column j is kron(row_j V, row_j V).
/// Entries can dip slightly negative under calibration with fast-moving
/// subspaces; consumers clamp before the square root.
inline Matrix reconstruct_second_moment(const Matrix& p, const Matrix& other_factor) {
    const Index r = other_factor.cols();
    if (p.cols() != r * r) {
        throw std::invalid_argument("reconstruct_second_moment: cross-term buffer has " +
                                    std::to_string(p.cols()) + " columns, expected r^2 = " +
                                    std::to_string(r * r));
    }
    const Matrix vt = transpose(other_factor); // r x n
    return p * khatri_rao_cols(vt, vt);
}

} // namespace loft
