#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/resnet.hpp"
#include "uq/rng.hpp"

namespace uq {

enum class Regime { det, mcdo, mcsd };
Regime regime_from_string(const std::string& s);
std::string to_string(Regime r);

// Residual-branch multiplier applied to kept blocks at prediction time.
// inverse_survival scales by 1/q, the unique mean-preserving choice for a
// block kept with probability q. paper_literal scales by 1/(1-q) instead,
// kept for comparison; none leaves kept branches unscaled (the training
// convention).
enum class GateScaling { none, inverse_survival, paper_literal };

// per-block survival probabilities q_l in (0, 1]
struct DepthSchedule {
    std::vector<double> survival;

    // q_l = 1 - (l/L)(1 - q_final), l = 1..L: the first block nearly always
    // survives, the last survives with q_final
    static DepthSchedule linear_decay(std::size_t blocks, double q_final);
    static DepthSchedule constant(std::size_t blocks, double q);

    std::size_t size() const { return survival.size(); }
    void validate() const;
};

GateMask sample_gates(const DepthSchedule& schedule, RngStream& rng,
                      GateScaling scaling = GateScaling::inverse_survival);

struct McConfig {
    std::size_t passes = 50;
    std::uint64_t base_seed = 0;
    Regime regime = Regime::mcsd;
    double dropout_rate = 0.0;  // mcdo only
    GateScaling scaling = GateScaling::inverse_survival;
    bool record_passes = false;
    std::size_t max_threads = 1;
};

struct PredictiveSummary {
    Matrix mean_probs;            // batch x C, rows on the simplex
    std::vector<double> entropy;  // nats, one per sample, in [0, ln C]
    std::optional<std::vector<Matrix>> per_pass_probs;
    std::size_t passes = 0;
    Regime regime = Regime::det;
    std::uint64_t seed = 0;
};

// T stochastic forward passes in eval mode; gates are resampled per pass under
// mcsd, dropout masks under mcdo, nothing under det. mean_probs averages the
// per-pass softmax outputs; entropy is computed on the averaged probabilities.
// Passes may fan out over max_threads workers; the reduction runs over fixed
// pass-index chunks so results are bit-identical for any worker count.
PredictiveSummary mc_predict(const ResidualNet& net, const Matrix& x,
                             const DepthSchedule& schedule, const McConfig& cfg);

// exact mixture over all 2^L gate patterns, each weighted by
// prod_l q_l^{b_l} (1-q_l)^{1-b_l}; refused for L > 16
PredictiveSummary enumerate_predict(const ResidualNet& net, const Matrix& x,
                                    const DepthSchedule& schedule,
                                    GateScaling scaling = GateScaling::inverse_survival);

// exact expected pre-head activation under the same mixture
Matrix enumerate_penultimate(const ResidualNet& net, const Matrix& x,
                             const DepthSchedule& schedule,
                             GateScaling scaling = GateScaling::inverse_survival);

// full-gate forward with fresh inverted-dropout masks inside every residual
// branch; consumes one draw from rng per call to key the masks
Matrix mcdo_forward(const ResidualNet& net, const Matrix& x, double rate, RngStream& rng);

// -sum_c p ln p per row, with 0 ln 0 := 0
std::vector<double> predictive_entropy(const Matrix& probs);

nlohmann::json to_json(const PredictiveSummary& summary);

}  // namespace uq
