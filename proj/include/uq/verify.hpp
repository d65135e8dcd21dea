#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "uq/resnet.hpp"
#include "uq/stochastic.hpp"

namespace uq {

struct VerificationConfig {
    std::size_t passes = 50;
    double threshold = 0.0;  // tau; accept iff similarity > tau
    double far_target = 0.001;
    Regime regime = Regime::mcsd;
    double dropout_rate = 0.0;
    GateScaling scaling = GateScaling::inverse_survival;
    std::uint64_t base_seed = 0;
    // same per-pass gate streams on both sides; makes the trial invariant to
    // swapping the inputs
    bool symmetric_streams = false;
    bool record_scores = false;
};

// -y log2 y - (1-y) log2(1-y) with 0 log 0 := 0; y outside [0,1] is rejected
double binary_entropy(double y);

// tau = the (m+1)-th largest impostor similarity with m = floor(n*far_target),
// so exactly m impostors are accepted under the strict sim > tau rule (fewer
// under ties); the realized FAR on the calibration set never exceeds the target
double select_threshold(std::vector<double> impostor_sims, double far_target);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct VerificationTrial {
    double accept_fraction = 0.0;  // y, fraction of the T x T pairs above tau
    double entropy = 0.0;          // H[y] in bits
    bool accepted = false;         // majority: y > 0.5
    std::optional<Matrix> pair_scores;  // T x T similarities when recorded
};

// T stochastic embeddings per side, all T x T pairwise cosine similarities,
// y = fraction above cfg.threshold, H = binary_entropy(y)
VerificationTrial mc_verify(const ResidualNet& net, const Matrix& xa, const Matrix& xb,
                            const DepthSchedule& schedule, const VerificationConfig& cfg);

struct MorphPair {
    Matrix accomplice;  // 1 x d
    Matrix impostor;    // 1 x d
};

struct MorphSweep {
    std::vector<double> alphas;
    std::vector<double> attack_success_rate;  // both sides accepted
    std::vector<double> mean_entropy;         // over both trials of every pair
};

// for each alpha: template = alpha*accomplice + (1-alpha)*impostor, verified
// against both originals
MorphSweep morph_sweep(const ResidualNet& net, const std::vector<MorphPair>& pairs,
                       const std::vector<double>& alphas, const DepthSchedule& schedule,
                       const VerificationConfig& cfg);

void write_morph_csv(std::ostream& out, const MorphSweep& sweep);
nlohmann::json to_json(const VerificationTrial& trial);

}  // namespace uq
