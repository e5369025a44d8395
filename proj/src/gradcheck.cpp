#include "capnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "capnet/errors.hpp"
#include "capnet/rng.hpp"

namespace capnet {

GradCheckReport grad_check(const LossFn& loss, ParamStore& params, double eps, double tol,
                           std::uint64_t seed, std::size_t min_coords, std::size_t sample_above) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw ValidationError("grad_check eps must lie in [1e-7, 1e-3]");
    }
    params.zero_grads();
    const double base = loss(params, true);
    if (!std::isfinite(base)) throw EvaluationError("grad_check: non-finite base loss");

    GradCheckReport report;
    RngStream rng(seed);
    for (auto& [name, p] : params) {
        const std::size_t n = p.value.size();
        std::vector<std::size_t> coords;
        if (n <= sample_above) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::set<std::size_t> picked;
            while (picked.size() < min_coords) picked.insert(static_cast<std::size_t>(rng.below(n)));
            coords.assign(picked.begin(), picked.end());
        }
        double param_max = 0.0;
        for (std::size_t i : coords) {
            const double analytic = p.grad[i];
            double numeric = 0.0;
            double rel = 0.0;
            // A piecewise kink (relu, maxpool tie) inside the eps interval
            // corrupts one central difference but moves out of range once
            // eps shrinks; roundoff on near-zero gradients shrinks once eps
            // grows. A wrong analytic gradient disagrees at every eps.
            for (double e : {eps, eps / 4.0, eps / 16.0, eps * 8.0}) {
                const double saved = p.value[i];
                p.value[i] = saved + e;
                const double fp = loss(params, false);
                p.value[i] = saved - e;
                const double fm = loss(params, false);
                p.value[i] = saved;
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    throw EvaluationError("grad_check: non-finite loss while perturbing " + name +
                                          "[" + std::to_string(i) + "]");
                }
                numeric = (fp - fm) / (2.0 * e);
                const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
                rel = std::abs(analytic - numeric) / denom;
                if (rel <= tol) break;
            }
            param_max = std::max(param_max, rel);
            if (rel > tol) report.flagged.push_back({name, i, analytic, numeric, rel});
            ++report.coords_checked;
        }
        report.per_param_max[name] = param_max;
        if (param_max > report.max_rel_error) {
            report.max_rel_error = param_max;
            report.worst_param = name;
        }
    }
    return report;
}

std::string format_report(const GradCheckReport& report, double tol) {
    std::ostringstream os;
    os << "checked " << report.coords_checked << " coordinates across "
       << report.per_param_max.size() << " parameters\n";
    for (const auto& [name, v] : report.per_param_max) {
        os << "  " << name << "  max rel err " << v << (v > tol ? "  FLAGGED" : "") << "\n";
    }
    os << "max rel error " << report.max_rel_error;
    if (!report.worst_param.empty()) os << " (" << report.worst_param << ")";
    os << ", " << report.flagged.size() << " flagged entries (tol " << tol << ")\n";
    return os.str();
}

}  // namespace capnet
