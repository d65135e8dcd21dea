#include "uq/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "uq/errors.hpp"
#include "uq/layers.hpp"

namespace uq {

Regime regime_from_string(const std::string& s) {
    if (s == "DET" || s == "det") {
        return Regime::det;
    }
    if (s == "MCDO" || s == "mcdo") {
        return Regime::mcdo;
    }
    if (s == "MCSD" || s == "mcsd") {
        return Regime::mcsd;
    }
    throw UsageError("unknown regime '" + s + "' (expected DET, MCDO or MCSD)");
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::det:
            return "DET";
        case Regime::mcdo:
            return "MCDO";
        case Regime::mcsd:
            return "MCSD";
    }
    return "?";
}

DepthSchedule DepthSchedule::linear_decay(std::size_t blocks, double q_final) {
    if (blocks < 1) {
        throw UsageError("depth schedule: need at least one block");
    }
    if (!(q_final > 0.0) || q_final > 1.0) {
        throw UsageError("depth schedule: q_final must be in (0, 1]");
    }
    DepthSchedule s;
    s.survival.resize(blocks);
    const double ll = static_cast<double>(blocks);
    for (std::size_t i = 0; i < blocks; ++i) {
        const double l = static_cast<double>(i + 1);
        s.survival[i] = 1.0 - (l / ll) * (1.0 - q_final);
    }
    return s;
}

DepthSchedule DepthSchedule::constant(std::size_t blocks, double q) {
    if (blocks < 1) {
        throw UsageError("depth schedule: need at least one block");
    }
    if (!(q > 0.0) || q > 1.0) {
        throw UsageError("depth schedule: q must be in (0, 1]");
    }
    DepthSchedule s;
    s.survival.assign(blocks, q);
    return s;
}

void DepthSchedule::validate() const {
    if (survival.empty()) {
        throw UsageError("depth schedule: empty");
    }
    for (double q : survival) {
        if (!(q > 0.0) || q > 1.0 || !std::isfinite(q)) {
            throw UsageError("depth schedule: survival probabilities must be in (0, 1]");
        }
    }
}

namespace {

double kept_scale(double q, GateScaling scaling) {
    switch (scaling) {
        case GateScaling::none:
            return 1.0;
        case GateScaling::inverse_survival:
            return 1.0 / q;
        case GateScaling::paper_literal:
            // the printed algorithm divides by the complement; not mean
            // preserving unless q is reinterpreted as a drop rate
            return q < 1.0 ? 1.0 / (1.0 - q) : 1.0;
    }
    return 1.0;
}

}  // namespace

GateMask sample_gates(const DepthSchedule& schedule, RngStream& rng, GateScaling scaling) {
    GateMask mask;
    const std::size_t n = schedule.size();
    mask.gates.resize(n);
    mask.scales.assign(n, 1.0);
    for (std::size_t l = 0; l < n; ++l) {
        const bool on = rng.next_bernoulli(schedule.survival[l]);
        mask.gates[l] = on ? 1 : 0;
        if (on) {
            mask.scales[l] = kept_scale(schedule.survival[l], scaling);
        }
    }
    return mask;
}

std::vector<double> predictive_entropy(const Matrix& probs) {
    std::vector<double> out(probs.rows(), 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            const double p = probs(i, j);
            if (p > 0.0) {
                h -= p * std::log(p);
            }
        }
        // clamp the tiny negative values float error can produce at p ~ 1
        out[i] = std::max(h, 0.0);
    }
    return out;
}

namespace {

Matrix single_pass_probs(const ResidualNet& net, const Matrix& x, const DepthSchedule& schedule,
                         const McConfig& cfg, std::size_t pass) {
    switch (cfg.regime) {
        case Regime::det: {
            return softmax(net.forward(x, GateMask::all_on(net.spec().num_blocks)));
        }
        case Regime::mcdo: {
            const DropoutPlan plan{cfg.dropout_rate,
                                   derive_key(cfg.base_seed, StreamKind::dropout, pass)};
            return softmax(net.forward(x, GateMask::all_on(net.spec().num_blocks), &plan));
        }
        case Regime::mcsd: {
            RngStream gate_rng = derive_stream(cfg.base_seed, StreamKind::gates, pass);
            const GateMask mask = sample_gates(schedule, gate_rng, cfg.scaling);
            return softmax(net.forward(x, mask));
        }
    }
    throw UsageError("unknown regime");
}

}  // namespace

PredictiveSummary mc_predict(const ResidualNet& net, const Matrix& x,
                             const DepthSchedule& schedule, const McConfig& cfg) {
    if (cfg.passes < 1) {
        throw UsageError("mc_predict: need at least one pass");
    }
    if (cfg.regime == Regime::mcsd) {
        schedule.validate();
        if (schedule.size() != net.spec().num_blocks) {
            throw ShapeError("mc_predict: schedule length does not match block count");
        }
    }
    const std::size_t batch = x.rows();
    const std::size_t classes = net.spec().num_classes;
    const std::size_t T = cfg.passes;

    // fixed-size chunks keyed by pass index: whichever worker computes a chunk,
    // partial sums accumulate in pass order and the final reduction is ordered,
    // so the result is bit-stable for any thread count
    constexpr std::size_t kChunk = 64;
    const std::size_t num_chunks = (T + kChunk - 1) / kChunk;
    std::vector<Matrix> chunk_sums(num_chunks);
    std::vector<Matrix> recorded;
    if (cfg.record_passes) {
        recorded.assign(T, Matrix());
    }

    auto run_chunk = [&](std::size_t c) {
        Matrix sum(batch, classes, 0.0);
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(T, lo + kChunk);
        for (std::size_t t = lo; t < hi; ++t) {
            Matrix probs = single_pass_probs(net, x, schedule, cfg, t);
            add_in_place(sum, probs);
            if (cfg.record_passes) {
                recorded[t] = std::move(probs);
            }
        }
        chunk_sums[c] = std::move(sum);
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.max_threads, num_chunks));
    if (workers == 1) {
        for (std::size_t c = 0; c < num_chunks; ++c) {
            run_chunk(c);
        }
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t c = next.fetch_add(1);
                    if (c >= num_chunks) {
                        return;
                    }
                    run_chunk(c);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    Matrix total(batch, classes, 0.0);
    for (std::size_t c = 0; c < num_chunks; ++c) {
        add_in_place(total, chunk_sums[c]);
    }
    PredictiveSummary summary;
    summary.mean_probs = scale(total, 1.0 / static_cast<double>(T));
    summary.entropy = predictive_entropy(summary.mean_probs);
    if (cfg.record_passes) {
        summary.per_pass_probs = std::move(recorded);
    }
    summary.passes = T;
    summary.regime = cfg.regime;
    summary.seed = cfg.base_seed;
    return summary;
}

namespace {

// visits every gate pattern with its mixture weight
template <typename Fn>
void for_each_pattern(const DepthSchedule& schedule, GateScaling scaling, Fn&& fn) {
    const std::size_t L = schedule.size();
    if (L > 16) {
        throw UsageError("enumerate_predict: refused for more than 16 blocks (2^L patterns)");
    }
    schedule.validate();
    const std::size_t patterns = static_cast<std::size_t>(1) << L;
    for (std::size_t bits = 0; bits < patterns; ++bits) {
        GateMask mask;
        mask.gates.resize(L);
        mask.scales.assign(L, 1.0);
        double weight = 1.0;
        for (std::size_t l = 0; l < L; ++l) {
            const bool on = (bits >> l) & 1;
            const double q = schedule.survival[l];
            mask.gates[l] = on ? 1 : 0;
            if (on) {
                mask.scales[l] = kept_scale(q, scaling);
                weight *= q;
            } else {
                weight *= 1.0 - q;
            }
        }
        if (weight == 0.0) {
            continue;
        }
        fn(mask, weight);
    }
}

}  // namespace

PredictiveSummary enumerate_predict(const ResidualNet& net, const Matrix& x,
                                    const DepthSchedule& schedule, GateScaling scaling) {
    if (schedule.size() != net.spec().num_blocks) {
        throw ShapeError("enumerate_predict: schedule length does not match block count");
    }
    Matrix mean(x.rows(), net.spec().num_classes, 0.0);
    for_each_pattern(schedule, scaling, [&](const GateMask& mask, double weight) {
        axpy_in_place(mean, weight, softmax(net.forward(x, mask)));
    });
    PredictiveSummary summary;
    summary.mean_probs = std::move(mean);
    summary.entropy = predictive_entropy(summary.mean_probs);
    summary.passes = 0;
    summary.regime = Regime::mcsd;
    summary.seed = 0;
    return summary;
}

Matrix enumerate_penultimate(const ResidualNet& net, const Matrix& x,
                             const DepthSchedule& schedule, GateScaling scaling) {
    if (schedule.size() != net.spec().num_blocks) {
        throw ShapeError("enumerate_penultimate: schedule length does not match block count");
    }
    Matrix mean(x.rows(), net.spec().hidden_dim, 0.0);
    for_each_pattern(schedule, scaling, [&](const GateMask& mask, double weight) {
        axpy_in_place(mean, weight, net.penultimate(x, mask));
    });
    return mean;
}

Matrix mcdo_forward(const ResidualNet& net, const Matrix& x, double rate, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw UsageError("mcdo_forward: rate must be in [0, 1)");
    }
    const DropoutPlan plan{rate, rng.next_u64()};
    return net.forward(x, GateMask::all_on(net.spec().num_blocks), &plan);
}

nlohmann::json to_json(const PredictiveSummary& summary) {
    nlohmann::json j;
    j["mean_probs"] = nlohmann::json::array();
    for (std::size_t i = 0; i < summary.mean_probs.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < summary.mean_probs.cols(); ++c) {
            row.push_back(summary.mean_probs(i, c));
        }
        j["mean_probs"].push_back(std::move(row));
    }
    j["entropy"] = summary.entropy;
    j["T"] = summary.passes;
    j["regime"] = to_string(summary.regime);
    j["seed"] = summary.seed;
    return j;
}

}  // namespace uq
