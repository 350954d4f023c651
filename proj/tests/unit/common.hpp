#pragma once

#include "gpccopf/grid.hpp"

#include <string>

inline std::string case_path(const std::string& name) { return std::string(GPCCOPF_DATA_DIR) + "/cases/" + name + ".json"; }

inline const gpccopf::GridCase& ieee9() {
    static const gpccopf::GridCase c = gpccopf::load_case(case_path("ieee9"));
    return c;
}

// slack + PQ load behind one branch
inline std::string two_bus_json(double r = 0.0, double x = 0.1, double p_mw = 10.0, double gamma = 0.3) {
    return R"({"base_mva": 100,
      "buses": [{"id": 1, "kind": "slack", "v_min": 0.9, "v_max": 1.1, "g_shunt": 0, "b_shunt": 0},
                {"id": 2, "kind": "pq", "v_min": 0.9, "v_max": 1.1, "g_shunt": 0, "b_shunt": 0}],
      "branches": [{"from": 1, "to": 2, "r": )" + std::to_string(r) + R"(, "x": )" + std::to_string(x) +
           R"(, "s_max_mva": 100}],
      "gens": [{"bus": 1, "p_min_mw": 0, "p_max_mw": 100, "q_min_mvar": -100, "q_max_mvar": 100, "v_set": 1.0,
                "c2": 0.1, "c1": 1, "c0": 0}],
      "loads": [{"bus": 2, "p_ref_mw": )" + std::to_string(p_mw) + R"(, "gamma": )" + std::to_string(gamma) + R"(}],
      "res": []})";
}
