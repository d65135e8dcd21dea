#include "uq/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "uq/errors.hpp"

namespace uq {

double binary_entropy(double y) {
    if (!(y >= 0.0) || !(y <= 1.0)) {
        throw UsageError("binary_entropy: y must be in [0, 1]");
    }
    double h = 0.0;
    if (y > 0.0) {
        h -= y * std::log2(y);
    }
    if (y < 1.0) {
        h -= (1.0 - y) * std::log2(1.0 - y);
    }
    return h;
}

double select_threshold(std::vector<double> impostor_sims, double far_target) {
    if (impostor_sims.empty()) {
        throw UsageError("select_threshold: empty impostor set");
    }
    if (far_target < 0.0) {
        throw UsageError("select_threshold: far_target must be >= 0");
    }
    const std::size_t n = impostor_sims.size();
    const auto m = static_cast<std::size_t>(std::floor(far_target * static_cast<double>(n)));
    if (m >= n) {
        throw UsageError("select_threshold: far target admits every impostor (vacuous)");
    }
    std::sort(impostor_sims.begin(), impostor_sims.end(), std::greater<>());
    return impostor_sims[m];
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity: dimension mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    if (denom <= 0.0) {
        return 0.0;
    }
    return std::clamp(dot / denom, -1.0, 1.0);
}

namespace {

// T unit-norm embeddings of a single input row, one per stochastic pass
std::vector<std::vector<double>> sample_embeddings(const ResidualNet& net, const Matrix& x,
                                                   const DepthSchedule& schedule,
                                                   const VerificationConfig& cfg,
                                                   std::uint64_t side_seed) {
    if (x.rows() != 1) {
        throw ShapeError("mc_verify: inputs must be single rows");
    }
    const std::size_t L = net.spec().num_blocks;
    std::vector<std::vector<double>> out;
    out.reserve(cfg.passes);
    for (std::size_t t = 0; t < cfg.passes; ++t) {
        EmbedResult er;
        switch (cfg.regime) {
            case Regime::det:
                er = net.embed(x, GateMask::all_on(L));
                break;
            case Regime::mcdo: {
                const DropoutPlan plan{cfg.dropout_rate,
                                       derive_key(side_seed, StreamKind::dropout, t)};
                er = net.embed(x, GateMask::all_on(L), &plan);
                break;
            }
            case Regime::mcsd: {
                RngStream gate_rng = derive_stream(side_seed, StreamKind::gates, t);
                const GateMask mask = sample_gates(schedule, gate_rng, cfg.scaling);
                er = net.embed(x, mask);
                break;
            }
        }
        out.push_back(er.embeddings.values());
    }
    return out;
}

}  // namespace

VerificationTrial mc_verify(const ResidualNet& net, const Matrix& xa, const Matrix& xb,
                            const DepthSchedule& schedule, const VerificationConfig& cfg) {
    if (cfg.passes < 1) {
        throw UsageError("mc_verify: need at least one pass");
    }
    const std::uint64_t seed_a =
        cfg.symmetric_streams ? cfg.base_seed : derive_key(cfg.base_seed, StreamKind::verify, 0);
    const std::uint64_t seed_b =
        cfg.symmetric_streams ? cfg.base_seed : derive_key(cfg.base_seed, StreamKind::verify, 1);
    const auto ea = sample_embeddings(net, xa, schedule, cfg, seed_a);
    const auto eb = sample_embeddings(net, xb, schedule, cfg, seed_b);

    const std::size_t T = cfg.passes;
    std::size_t accepts = 0;
    Matrix scores;
    if (cfg.record_scores) {
        scores = Matrix(T, T);
    }
    for (std::size_t s = 0; s < T; ++s) {
        for (std::size_t t = 0; t < T; ++t) {
            const double sim = cosine_similarity(ea[s], eb[t]);
            if (cfg.record_scores) {
                scores(s, t) = sim;
            }
            if (sim > cfg.threshold) {
                ++accepts;
            }
        }
    }
    VerificationTrial trial;
    trial.accept_fraction = static_cast<double>(accepts) / static_cast<double>(T * T);
    trial.entropy = binary_entropy(trial.accept_fraction);
    trial.accepted = trial.accept_fraction > 0.5;
    if (cfg.record_scores) {
        trial.pair_scores = std::move(scores);
    }
    return trial;
}

MorphSweep morph_sweep(const ResidualNet& net, const std::vector<MorphPair>& pairs,
                       const std::vector<double>& alphas, const DepthSchedule& schedule,
                       const VerificationConfig& cfg) {
    if (pairs.empty()) {
        throw UsageError("morph_sweep: need at least one pair");
    }
    for (double a : alphas) {
        if (a < 0.0 || a > 1.0) {
            throw UsageError("morph_sweep: blending factors must be in [0, 1]");
        }
    }
    MorphSweep sweep;
    sweep.alphas = alphas;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        const double alpha = alphas[ai];
        std::size_t successes = 0;
        double entropy_sum = 0.0;
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const MorphPair& pair = pairs[pi];
            if (!pair.accomplice.same_shape(pair.impostor)) {
                throw ShapeError("morph_sweep: pair inputs must share dimensionality");
            }
            Matrix blended = add(scale(pair.accomplice, alpha), scale(pair.impostor, 1.0 - alpha));

            VerificationConfig trial_cfg = cfg;
            trial_cfg.base_seed = derive_key(cfg.base_seed, StreamKind::verify, ai, 2 * pi);
            const VerificationTrial va = mc_verify(net, blended, pair.accomplice, schedule, trial_cfg);
            trial_cfg.base_seed = derive_key(cfg.base_seed, StreamKind::verify, ai, 2 * pi + 1);
            const VerificationTrial vi = mc_verify(net, blended, pair.impostor, schedule, trial_cfg);

            if (va.accepted && vi.accepted) {
                ++successes;
            }
            entropy_sum += 0.5 * (va.entropy + vi.entropy);
        }
        sweep.attack_success_rate.push_back(static_cast<double>(successes) /
                                            static_cast<double>(pairs.size()));
        sweep.mean_entropy.push_back(entropy_sum / static_cast<double>(pairs.size()));
    }
    return sweep;
}

namespace {

std::string csv_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_morph_csv(std::ostream& out, const MorphSweep& sweep) {
    out << "alpha,attack_success_rate,mean_entropy\n";
    for (std::size_t i = 0; i < sweep.alphas.size(); ++i) {
        out << csv_double(sweep.alphas[i]) << "," << csv_double(sweep.attack_success_rate[i])
            << "," << csv_double(sweep.mean_entropy[i]) << "\n";
    }
}

nlohmann::json to_json(const VerificationTrial& trial) {
    return nlohmann::json{{"accept_fraction", trial.accept_fraction},
                          {"entropy", trial.entropy},
                          {"decision", trial.accepted ? "accept" : "reject"}};
}

}  // namespace uq
