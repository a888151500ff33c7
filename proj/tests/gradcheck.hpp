#pragma once

// Central-difference gradient oracle. Perturbs one parameter entry at a
// time and re-runs the full forward pass, so it shares no code with the
// tape's backward rules.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "feddpg/tensor.hpp"

namespace gradcheck {

struct Report {
    double max_rel_error = 0.0;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline double rel_error(double analytic, double numeric) {
    const double scale = std::max({1e-6, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / scale;
}

// params: named tensors whose grads were populated by one backward pass;
// forward: recomputes the scalar loss from the tensors' current values.
inline Report check(const std::vector<std::pair<std::string, feddpg::Tensor>>& params,
                    const std::function<double()>& forward, double eps = 1e-5) {
    Report rep;
    for (const auto& [name, p] : params) {
        feddpg::Tensor t = p;  // handle copy, shared storage
        for (size_t i = 0; i < t.data().size(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + eps;
            const double f_plus = forward();
            t.data()[i] = saved - eps;
            const double f_minus = forward();
            t.data()[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
            const double re = rel_error(analytic, numeric);
            if (re > rep.max_rel_error) {
                rep.max_rel_error = re;
                rep.worst_param = name + "[" + std::to_string(i) + "]";
                rep.worst_analytic = analytic;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace gradcheck
