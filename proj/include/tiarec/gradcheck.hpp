#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tiarec/nn.hpp"

namespace tiarec {

// Central-difference gradient verification. The loss closure must evaluate
// the forward value only (no gradient side effects), so the check stays
// independent of the reverse-mode path it validates.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::int64_t worst_index = -1;
    std::int64_t coordinates = 0;
    bool passed(double tol) const { return max_rel_error <= tol; }
};

// Compares t.grad (already populated by the caller) against
// (f(x+h) - f(x-h)) / 2h per coordinate of every tensor in `params`.
// rel = |a - b| / max(1, |a|, |b|).
GradCheckResult check_gradients(nn::ParameterSet& params,
                                const std::function<double()>& loss_value, double h = 1e-4);

// The full suite run by the `gradient-check` CLI subcommand: both training
// losses on a tiny random instance (d = 4, three-item vocabulary).
struct GradSuiteReport {
    GradCheckResult critic;
    GradCheckResult agents;
    double seconds = 0.0;
    bool passed(double tol = 1e-4) const { return critic.passed(tol) && agents.passed(tol); }
};

GradSuiteReport run_gradient_suite(std::uint64_t seed);

}  // namespace tiarec
