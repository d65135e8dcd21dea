#pragma once

#include <functional>
#include <vector>

namespace uq {

// flattened view over one parameter tensor and its gradient buffer
struct ParamView {
    double* value;
    double* grad;
    std::size_t size;
};

// Central-difference gradient check. eval(true) must recompute the loss and
// fill the gradient buffers behind every ParamView from scratch; eval(false)
// must only return the loss. Any stochasticity (gates, dropout masks) has to
// be frozen by the caller so eval is a pure function of the parameters.
// Returns max over parameter entries of
//   |analytic - numeric| / max(|analytic|, |numeric|, eps).
double grad_check(const std::function<double(bool)>& eval, const std::vector<ParamView>& params,
                  double step, double eps = 1e-12);

}  // namespace uq
