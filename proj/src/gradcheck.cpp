#include "uq/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "uq/errors.hpp"

namespace uq {

double grad_check(const std::function<double(bool)>& eval, const std::vector<ParamView>& params,
                  double step, double eps) {
    if (step <= 0.0) {
        throw UsageError("grad_check: step must be positive");
    }
    eval(true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const ParamView& p : params) {
        analytic.emplace_back(p.grad, p.grad + p.size);
    }

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const ParamView& p = params[pi];
        for (std::size_t k = 0; k < p.size; ++k) {
            const double saved = p.value[k];
            p.value[k] = saved + step;
            const double lp = eval(false);
            p.value[k] = saved - step;
            const double lm = eval(false);
            p.value[k] = saved;

            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi][k];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), eps});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace uq
