#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "capnet/params.hpp"

namespace capnet {

// Loss evaluator: returns the scalar loss for the current parameter values;
// when with_grad is true it must also accumulate analytic gradients into the
// store (grads are zeroed by the checker beforehand).
using LossFn = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckEntry {
    std::string param;
    std::size_t coord;
    double analytic;
    double numeric;
    double rel_error;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::map<std::string, double> per_param_max;
    std::vector<GradCheckEntry> flagged;  // entries above tolerance
    std::size_t coords_checked = 0;
    bool ok() const { return flagged.empty(); }
};

// Central differences (f(t+eps)-f(t-eps))/(2 eps) against the analytic
// gradient. Tensors above sample_above elements are spot-checked on
// min_coords seeded coordinates; smaller ones are checked in full.
GradCheckReport grad_check(const LossFn& loss, ParamStore& params, double eps, double tol,
                           std::uint64_t seed = 1234, std::size_t min_coords = 32,
                           std::size_t sample_above = 1024);

std::string format_report(const GradCheckReport& report, double tol);

}  // namespace capnet
