#include "uq/train.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "uq/errors.hpp"
#include "uq/metrics.hpp"

namespace uq {

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw UsageError("train config: lr must be finite and >= 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw UsageError("train config: momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0) {
        throw UsageError("train config: weight_decay must be >= 0");
    }
    if (epochs < 1) {
        throw UsageError("train config: epochs must be >= 1");
    }
    if (batch_size < 2) {
        throw UsageError("train config: batch_size must be >= 2");
    }
    if (!(q_final > 0.0) || q_final > 1.0) {
        throw UsageError("train config: q_final must be in (0, 1]");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw UsageError("train config: dropout_rate must be in [0, 1)");
    }
}

namespace {

double decay_factor(double q, DecayScaling scaling) {
    return scaling == DecayScaling::survival ? q : 1.0 - q;
}

// decay term by itself; depends only on the parameters, never the batch content
double decay_term(ResidualNet& net, double weight_decay, const DepthSchedule& schedule,
                  DecayScaling scaling, std::size_t batch_size) {
    if (weight_decay == 0.0) {
        return 0.0;
    }
    double total = 0.0;
    for (const ParamRef& p : net.parameters()) {
        if (!p.is_weight) {
            continue;
        }
        const double s = p.block >= 0
                             ? decay_factor(schedule.survival[static_cast<std::size_t>(p.block)], scaling)
                             : 1.0;
        total += s * sum_squares(*p.value);
    }
    return weight_decay * total / static_cast<double>(batch_size);
}

void decay_grad(ResidualNet& net, double weight_decay, const DepthSchedule& schedule,
                DecayScaling scaling, std::size_t batch_size) {
    if (weight_decay == 0.0) {
        return;
    }
    const double c = 2.0 * weight_decay / static_cast<double>(batch_size);
    for (const ParamRef& p : net.parameters()) {
        if (!p.is_weight) {
            continue;
        }
        const double s = p.block >= 0
                             ? decay_factor(schedule.survival[static_cast<std::size_t>(p.block)], scaling)
                             : 1.0;
        axpy_in_place(*p.grad, c * s, *p.value);
    }
}

double loss_impl(ResidualNet& net, const Matrix& x, std::span<const int> labels,
                 const GateMask& mask, double weight_decay, const DepthSchedule& schedule,
                 DecayScaling decay_scaling, const DropoutPlan* dropout, bool compute_grad) {
    if (schedule.size() != net.spec().num_blocks) {
        throw ShapeError("mcsd_loss: schedule length does not match block count");
    }
    double loss;
    if (compute_grad) {
        ResidualNet::Trace trace;
        const Matrix logits = net.forward_trace(x, mask, dropout, trace);
        Matrix probs;
        loss = softmax_cross_entropy(logits, labels, &probs);
        net.backward_trace(trace, softmax_cross_entropy_backward(probs, labels));
        decay_grad(net, weight_decay, schedule, decay_scaling, x.rows());
    } else {
        ResidualNet::Trace trace;
        const Matrix logits = net.forward_trace(x, mask, dropout, trace);
        loss = softmax_cross_entropy(logits, labels);
    }
    return loss + decay_term(net, weight_decay, schedule, decay_scaling, x.rows());
}

}  // namespace

double mcsd_loss(ResidualNet& net, const Matrix& x, std::span<const int> labels,
                 const GateMask& mask, double weight_decay, const DepthSchedule& schedule,
                 DecayScaling decay_scaling, const DropoutPlan* dropout) {
    return loss_impl(net, x, labels, mask, weight_decay, schedule, decay_scaling, dropout, false);
}

double mcsd_loss_grad(ResidualNet& net, const Matrix& x, std::span<const int> labels,
                      const GateMask& mask, double weight_decay, const DepthSchedule& schedule,
                      DecayScaling decay_scaling, const DropoutPlan* dropout) {
    return loss_impl(net, x, labels, mask, weight_decay, schedule, decay_scaling, dropout, true);
}

namespace {

Matrix gather_rows(const Dataset& ds, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), ds.dim());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out(i, j) = ds.features(idx[i], j);
        }
    }
    return out;
}

double eval_error_det(const ResidualNet& net, const Dataset& ds) {
    if (ds.size() == 0) {
        return 0.0;
    }
    const Matrix logits = net.forward(ds.features, GateMask::all_on(net.spec().num_blocks));
    return test_error(PredictionSet::create(softmax(logits), ds.labels));
}

}  // namespace

TrainReport train(ResidualNet& net, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    train_set.validate();
    if (train_set.size() == 0) {
        throw UsageError("train: empty training set");
    }
    const auto t0 = std::chrono::steady_clock::now();

    const std::size_t L = net.spec().num_blocks;
    const DepthSchedule schedule = cfg.regime == Regime::mcsd
                                       ? DepthSchedule::linear_decay(L, cfg.q_final)
                                       : DepthSchedule::constant(L, 1.0);

    std::vector<ParamRef> params = net.parameters();
    std::vector<Matrix> velocity;
    velocity.reserve(params.size());
    for (const ParamRef& p : params) {
        velocity.emplace_back(p.value->rows(), p.value->cols());
    }

    TrainReport report;
    const std::size_t milestone1 = cfg.epochs / 2;
    const std::size_t milestone2 = 3 * cfg.epochs / 4;
    std::uint64_t batch_counter = 0;
    std::vector<std::size_t> order(train_set.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        if (epoch >= milestone1 && cfg.epochs > 1) {
            lr *= 0.1;
        }
        if (epoch >= milestone2 && cfg.epochs > 1) {
            lr *= 0.1;
        }

        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        RngStream shuffle_rng = derive_stream(cfg.seed, StreamKind::shuffle, epoch);
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) {
                break;  // a leftover single sample cannot go through batch norm
            }
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix bx = gather_rows(train_set, idx);
            std::vector<int> by(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                by[i] = train_set.labels[idx[i]];
            }

            GateMask mask = GateMask::all_on(L);
            DropoutPlan plan;
            const DropoutPlan* plan_ptr = nullptr;
            if (cfg.regime == Regime::mcsd) {
                RngStream gate_rng = derive_stream(cfg.seed, StreamKind::gates, batch_counter);
                // kept blocks are not scaled during training; the 1/q factor
                // applies at MC prediction time only
                mask = sample_gates(schedule, gate_rng, GateScaling::none);
            } else if (cfg.regime == Regime::mcdo) {
                plan = DropoutPlan{cfg.dropout_rate,
                                   derive_key(cfg.seed, StreamKind::dropout, batch_counter)};
                plan_ptr = &plan;
            }

            net.zero_grad();
            const double loss = mcsd_loss_grad(net, bx, by, mask, cfg.weight_decay, schedule,
                                               cfg.decay_scaling, plan_ptr);
            if (!std::isfinite(loss)) {
                throw NumericalError("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batches));
            }
            for (std::size_t p = 0; p < params.size(); ++p) {
                Matrix& v = velocity[p];
                for (std::size_t k = 0; k < v.size(); ++k) {
                    v.data()[k] = cfg.momentum * v.data()[k] - lr * params[p].grad->data()[k];
                    params[p].value->data()[k] += v.data()[k];
                }
            }
            epoch_loss += loss;
            ++batches;
            ++batch_counter;
        }
        if (batches == 0) {
            throw UsageError("train: batch size larger than the training set");
        }
        epoch_loss /= static_cast<double>(batches);
        const double err = eval_error_det(net, eval_set);
        report.train_loss.push_back(epoch_loss);
        report.eval_error.push_back(err);
        if (progress) {
            progress(epoch, epoch_loss, err);
        }
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

DropSearchResult search_drop_rate(const NetworkSpec& spec, const Dataset& train_set,
                                  const Dataset& val_set, const std::vector<double>& candidates,
                                  const TrainConfig& cfg, std::size_t eval_passes) {
    if (candidates.empty()) {
        throw UsageError("search_drop_rate: need at least one candidate");
    }
    DropSearchResult result;
    double best_nll = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        TrainConfig c = cfg;
        if (cfg.regime == Regime::mcdo) {
            c.dropout_rate = candidates[i];
        } else {
            c.q_final = candidates[i];
        }
        ResidualNet net = ResidualNet::init(spec, c.seed);
        train(net, train_set, val_set, c);

        McConfig mc;
        mc.passes = eval_passes;
        mc.base_seed = c.seed;
        mc.regime = c.regime;
        mc.dropout_rate = c.dropout_rate;
        const DepthSchedule schedule =
            c.regime == Regime::mcsd ? DepthSchedule::linear_decay(spec.num_blocks, c.q_final)
                                     : DepthSchedule::constant(spec.num_blocks, 1.0);
        const PredictiveSummary summary = mc_predict(net, val_set.features, schedule, mc);
        const PredictionSet preds = PredictionSet::create(summary.mean_probs, val_set.labels);

        DropSearchRow row;
        row.candidate = candidates[i];
        row.val_nll = nll(preds);
        row.val_error = test_error(preds);
        result.table.push_back(row);
        if (i == 0 || row.val_nll < best_nll) {
            best_nll = row.val_nll;
            result.best_candidate = candidates[i];
            result.best_index = i;
            result.best_net = std::move(net);
        }
    }
    return result;
}

}  // namespace uq
