#include "uq/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "uq/errors.hpp"

namespace uq {

PredictionSet PredictionSet::create(Matrix probs, std::vector<int> labels) {
    if (labels.size() != probs.rows()) {
        throw ShapeError("prediction set: label count does not match probability rows");
    }
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            const double p = probs(i, j);
            if (p < -1e-12 || p > 1.0 + 1e-12) {
                throw UsageError("prediction set: probability out of [0, 1]");
            }
            row_sum += p;
        }
        if (std::fabs(row_sum - 1.0) > 1e-9) {
            throw UsageError("prediction set: row " + std::to_string(i) +
                             " does not sum to 1 (got " + std::to_string(row_sum) + ")");
        }
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols()) {
            throw UsageError("prediction set: label out of range");
        }
    }
    PredictionSet s;
    s.probs = std::move(probs);
    s.labels = std::move(labels);
    return s;
}

double nll(const PredictionSet& preds) {
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double p = preds.probs(i, static_cast<std::size_t>(preds.labels[i]));
        total -= std::log(std::max(p, 1e-12));
    }
    return total / static_cast<double>(preds.size());
}

double brier(const PredictionSet& preds, BrierConvention convention) {
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double sq = 0.0;
        for (std::size_t c = 0; c < preds.classes(); ++c) {
            const double target = static_cast<std::size_t>(preds.labels[i]) == c ? 1.0 : 0.0;
            const double d = preds.probs(i, c) - target;
            sq += d * d;
        }
        if (convention == BrierConvention::mean_over_classes) {
            sq /= static_cast<double>(preds.classes());
        }
        total += sq;
    }
    return total / static_cast<double>(preds.size());
}

namespace {

std::size_t argmax_row(const Matrix& probs, std::size_t i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c) {
        if (probs(i, c) > probs(i, best)) {
            best = c;  // strict comparison keeps the lowest index on ties
        }
    }
    return best;
}

}  // namespace

EceResult ece(const PredictionSet& preds, std::size_t num_bins) {
    if (num_bins < 1) {
        throw UsageError("ece: need at least one bin");
    }
    const std::size_t m = num_bins;
    std::vector<std::size_t> counts(m, 0), correct(m, 0);
    std::vector<double> conf_sum(m, 0.0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t pred = argmax_row(preds.probs, i);
        const double conf = preds.probs(i, pred);
        // interval convention (lo, hi]: a confidence exactly on a boundary
        // belongs to the bin below it
        std::ptrdiff_t bin = static_cast<std::ptrdiff_t>(
                                 std::ceil(conf * static_cast<double>(m))) - 1;
        bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(m) - 1);
        const auto b = static_cast<std::size_t>(bin);
        counts[b] += 1;
        conf_sum[b] += conf;
        if (pred == static_cast<std::size_t>(preds.labels[i])) {
            correct[b] += 1;
        }
    }
    EceResult result;
    result.bins.resize(m);
    const double n = static_cast<double>(preds.size());
    for (std::size_t b = 0; b < m; ++b) {
        ReliabilityBin& rb = result.bins[b];
        rb.lo = static_cast<double>(b) / static_cast<double>(m);
        rb.hi = static_cast<double>(b + 1) / static_cast<double>(m);
        rb.count = counts[b];
        if (counts[b] > 0) {
            rb.accuracy = static_cast<double>(correct[b]) / static_cast<double>(counts[b]);
            rb.confidence = conf_sum[b] / static_cast<double>(counts[b]);
            result.ece += static_cast<double>(counts[b]) / n * std::fabs(rb.accuracy - rb.confidence);
        }
    }
    return result;
}

double test_error(const PredictionSet& preds) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (argmax_row(preds.probs, i) != static_cast<std::size_t>(preds.labels[i])) {
            ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(preds.size());
}

std::vector<std::pair<double, double>> entropy_cdf(std::vector<double> entropies) {
    for (double e : entropies) {
        if (!(e >= 0.0) || !std::isfinite(e)) {
            throw UsageError("entropy_cdf: entropies must be finite and >= 0");
        }
    }
    std::sort(entropies.begin(), entropies.end());
    std::vector<std::pair<double, double>> points;
    const double n = static_cast<double>(entropies.size());
    for (std::size_t k = 0; k < entropies.size(); ++k) {
        const bool last_of_value = k + 1 == entropies.size() || entropies[k + 1] != entropies[k];
        if (last_of_value) {
            points.emplace_back(entropies[k], static_cast<double>(k + 1) / n);
        }
    }
    return points;
}

CalibrationReport evaluate_calibration(const PredictionSet& preds, std::size_t num_bins,
                                       std::size_t num_passes) {
    CalibrationReport report;
    report.test_error = test_error(preds);
    report.nll = nll(preds);
    report.brier = brier(preds);
    EceResult e = ece(preds, num_bins);
    report.ece = e.ece;
    report.bins = std::move(e.bins);
    report.num_bins = num_bins;
    report.num_passes = num_passes;
    return report;
}

nlohmann::json to_json(const CalibrationReport& report) {
    nlohmann::json bins = nlohmann::json::array();
    for (const ReliabilityBin& b : report.bins) {
        bins.push_back({{"lo", b.lo},
                        {"hi", b.hi},
                        {"count", b.count},
                        {"accuracy", b.accuracy},
                        {"confidence", b.confidence}});
    }
    return nlohmann::json{{"test_error", report.test_error},
                          {"nll", report.nll},
                          {"brier", report.brier},
                          {"ece", report.ece},
                          {"bins", std::move(bins)},
                          {"num_bins", report.num_bins},
                          {"num_passes", report.num_passes}};
}

namespace {

std::string csv_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_reliability_csv(std::ostream& out, const std::vector<ReliabilityBin>& bins) {
    out << "bin_lo,bin_hi,count,accuracy,confidence\n";
    for (const ReliabilityBin& b : bins) {
        out << csv_double(b.lo) << "," << csv_double(b.hi) << "," << b.count << ","
            << csv_double(b.accuracy) << "," << csv_double(b.confidence) << "\n";
    }
}

void write_entropy_cdf_csv(std::ostream& out,
                           const std::vector<std::pair<double, double>>& points) {
    out << "entropy,cdf\n";
    for (const auto& [e, c] : points) {
        out << csv_double(e) << "," << csv_double(c) << "\n";
    }
}

}  // namespace uq
