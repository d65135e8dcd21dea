#pragma once

#include <functional>
#include <span>
#include <vector>

#include "uq/data.hpp"
#include "uq/resnet.hpp"
#include "uq/stochastic.hpp"

namespace uq {

// scaling of each block's decay term. survival multiplies by q_l (the keep
// probability, as in the cited dropout derivation); drop multiplies by 1-q_l,
// matching the objective's prose reading of p as a drop rate.
enum class DecayScaling { survival, drop };

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double q_final = 1.0;
    Regime regime = Regime::det;
    double dropout_rate = 0.0;
    std::uint64_t seed = 0;
    DecayScaling decay_scaling = DecayScaling::survival;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> eval_error;  // per epoch, deterministic single-pass
    // measured but never serialized: command outputs must stay byte-stable
    double wall_clock_seconds = 0.0;
};

// Mean cross-entropy on the gated train-mode forward plus the survival-scaled
// decay term: weight_decay * sum_blocks s_l * ||M_l||^2 / N + the unscaled
// (s = 1) decay of the stem and head matrices, N the batch size. Block decay
// covers the branch weight matrices; biases and batch-norm affine parameters
// are not decayed.
double mcsd_loss(ResidualNet& net, const Matrix& x, std::span<const int> labels,
                 const GateMask& mask, double weight_decay, const DepthSchedule& schedule,
                 DecayScaling decay_scaling = DecayScaling::survival,
                 const DropoutPlan* dropout = nullptr);

// same objective, also accumulating parameter gradients into the net
double mcsd_loss_grad(ResidualNet& net, const Matrix& x, std::span<const int> labels,
                      const GateMask& mask, double weight_decay, const DepthSchedule& schedule,
                      DecayScaling decay_scaling = DecayScaling::survival,
                      const DropoutPlan* dropout = nullptr);

using ProgressFn = std::function<void(std::size_t epoch, double loss, double eval_err)>;

// SGD with momentum and step-decayed learning rate (x0.1 at 50% and 75% of the
// epochs); a fresh gate mask per mini-batch under mcsd, fresh dropout masks
// under mcdo. Deterministic given cfg.seed. Throws NumericalError when the
// loss stops being finite.
TrainReport train(ResidualNet& net, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg, const ProgressFn& progress = {});

struct DropSearchRow {
    double candidate = 0.0;
    double val_nll = 0.0;
    double val_error = 0.0;
};

struct DropSearchResult {
    double best_candidate = 0.0;
    std::size_t best_index = 0;
    std::vector<DropSearchRow> table;
    ResidualNet best_net;
};

// trains one model per candidate (q_final under mcsd, dropout rate under mcdo)
// from the same seed and ranks by validation NLL at eval_passes stochastic
// passes; ties go to the earliest candidate
DropSearchResult search_drop_rate(const NetworkSpec& spec, const Dataset& train_set,
                                  const Dataset& val_set, const std::vector<double>& candidates,
                                  const TrainConfig& cfg, std::size_t eval_passes = 50);

}  // namespace uq
