// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include <array>
#include <string>

namespace aaw {

/// The nine annotated Circle-of-Willis arterial segment classes.
/// ACA_A2 carries no laterality label (left/right collapsed into one class).
struct ClassInfo {
    int id;
    const char* name;
    int sampling_weight;  // annotated instance count driving generator frequencies
    bool ipsilateral;
    bool contralateral;
};

inline const std::array<ClassInfo, 9>& class_table() {
    static const std::array<ClassInfo, 9> t = {{
        {0, "ACA_A2", 94, false, false},
        {1, "Contralateral_ACA_A1", 327, false, true},
        {2, "Contralateral_MCA_M1", 323, false, true},
        {3, "Contralateral_PCA_P1", 502, false, true},
        {4, "Contralateral_PCA_P2", 167, false, true},
        {5, "Ipsilateral_ACA_A1", 397, true, false},
        {6, "Ipsilateral_MCA_M1", 704, true, false},
        {7, "Ipsilateral_PCA_P1", 406, true, false},
        {8, "Ipsilateral_PCA_P2", 499, true, false},
    }};
    return t;
}

inline std::string class_name(int id) { return class_table().at(id).name; }

inline int total_sampling_weight() {
    int s = 0;
    for (const auto& c : class_table()) s += c.sampling_weight;
    return s;  // 3419
}

}  // namespace aaw
