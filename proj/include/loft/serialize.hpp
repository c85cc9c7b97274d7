// Copyright (c) 2026 the loft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "loft/adapter.hpp"
#include "loft/loft_state.hpp"
#include "loft/matrix.hpp"
#include "loft/optim_adamw.hpp"
#include "loft/optim_muon.hpp"

namespace loft {

using Json = nlohmann::json;

/// Reject unknown keys so config/checkpoint typos fail loudly instead of
/// silently flipping ablation behavior.
inline void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) throw std::invalid_argument(where + ": unknown field '" + it.key() + "'");
    }
}

// Flat matrix layout: shape header plus row-major values.
inline Json matrix_to_json(const Matrix& m) {
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"rows", "cols", "data"}, where);
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
        throw std::invalid_argument(where + ": matrix needs rows, cols, data");
    }
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    Matrix m(rows, cols);
    const auto& data = j.at("data");
    if (!data.is_array() || static_cast<Index>(data.size()) != rows * cols) {
        throw std::invalid_argument(where + ": data length must be rows*cols");
    }
    for (std::size_t i = 0; i < data.size(); ++i) m.data()[i] = data[i].get<double>();
    return m;
}

inline Json adapter_to_json(const LowRankAdapter& a) {
    return Json{{"w0", matrix_to_json(a.w0)},     {"u", matrix_to_json(a.u)},
                {"v", matrix_to_json(a.v)},       {"u_prev", matrix_to_json(a.u_prev)},
                {"v_prev", matrix_to_json(a.v_prev)}, {"rank", a.rank}};
}

inline LowRankAdapter adapter_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"w0", "u", "v", "u_prev", "v_prev", "rank"}, where);
    LowRankAdapter a;
    a.w0 = matrix_from_json(j.at("w0"), where + ".w0");
    a.u = matrix_from_json(j.at("u"), where + ".u");
    a.v = matrix_from_json(j.at("v"), where + ".v");
    a.u_prev = matrix_from_json(j.at("u_prev"), where + ".u_prev");
    a.v_prev = matrix_from_json(j.at("v_prev"), where + ".v_prev");
    a.rank = j.at("rank").get<Index>();
    if (a.u.rows() != a.w0.rows() || a.v.rows() != a.w0.cols() || a.u.cols() != a.rank ||
        a.v.cols() != a.rank || !a.u.same_shape(a.u_prev) || !a.v.same_shape(a.v_prev)) {
        throw std::invalid_argument(where + ": inconsistent adapter shapes");
    }
    return a;
}

inline Json loft_adam_state_to_json(const LoftAdamState& s) {
    return Json{{"mu", matrix_to_json(s.mu)},   {"mv", matrix_to_json(s.mv)},
                {"pu", matrix_to_json(s.pu)},   {"pv", matrix_to_json(s.pv)},
                {"step", s.step},               {"update_u_next", s.update_u_next}};
}

inline LoftAdamState loft_adam_state_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"mu", "mv", "pu", "pv", "step", "update_u_next"}, where);
    LoftAdamState s;
    s.mu = matrix_from_json(j.at("mu"), where + ".mu");
    s.mv = matrix_from_json(j.at("mv"), where + ".mv");
    s.pu = matrix_from_json(j.at("pu"), where + ".pu");
    s.pv = matrix_from_json(j.at("pv"), where + ".pv");
    s.step = j.at("step").get<long>();
    s.update_u_next = j.at("update_u_next").get<bool>();
    return s;
}

inline Json full_adam_state_to_json(const FullAdamState& s) {
    return Json{{"m", matrix_to_json(s.m)}, {"v", matrix_to_json(s.v)}, {"step", s.step}};
}

inline FullAdamState full_adam_state_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"m", "v", "step"}, where);
    FullAdamState s;
    s.m = matrix_from_json(j.at("m"), where + ".m");
    s.v = matrix_from_json(j.at("v"), where + ".v");
    s.step = j.at("step").get<long>();
    return s;
}

inline Json lora_adam_state_to_json(const LoraAdamState& s) {
    return Json{{"for_u", full_adam_state_to_json(s.for_u)},
                {"for_v", full_adam_state_to_json(s.for_v)},
                {"step", s.step}};
}

inline LoraAdamState lora_adam_state_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"for_u", "for_v", "step"}, where);
    LoraAdamState s;
    s.for_u = full_adam_state_from_json(j.at("for_u"), where + ".for_u");
    s.for_v = full_adam_state_from_json(j.at("for_v"), where + ".for_v");
    s.step = j.at("step").get<long>();
    return s;
}

inline Json muon_state_to_json(const MuonState& s) {
    return Json{{"m", matrix_to_json(s.m)}, {"step", s.step}};
}

inline MuonState muon_state_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"m", "step"}, where);
    MuonState s;
    s.m = matrix_from_json(j.at("m"), where + ".m");
    s.step = j.at("step").get<long>();
    return s;
}

inline Json loft_muon_state_to_json(const LoftMuonState& s) {
    return Json{{"mu", matrix_to_json(s.mu)},
                {"mv", matrix_to_json(s.mv)},
                {"step", s.step},
                {"update_u_next", s.update_u_next}};
}

inline LoftMuonState loft_muon_state_from_json(const Json& j, const std::string& where) {
    check_keys(j, {"mu", "mv", "step", "update_u_next"}, where);
    LoftMuonState s;
    s.mu = matrix_from_json(j.at("mu"), where + ".mu");
    s.mv = matrix_from_json(j.at("mv"), where + ".mv");
    s.step = j.at("step").get<long>();
    s.update_u_next = j.at("update_u_next").get<bool>();
    return s;
}

} // namespace loft
