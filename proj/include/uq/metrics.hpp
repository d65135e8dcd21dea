#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uq/matrix.hpp"

namespace uq {

// predicted class probabilities with ground-truth labels; probs are expected
// to be the MC-averaged outputs, one row per sample on the simplex
struct PredictionSet {
    Matrix probs;
    std::vector<int> labels;

    static PredictionSet create(Matrix probs, std::vector<int> labels);  // validates
    std::size_t size() const { return probs.rows(); }
    std::size_t classes() const { return probs.cols(); }
};

// mean negative log of the true-class probability, floored at 1e-12
double nll(const PredictionSet& preds);

enum class BrierConvention { sum_over_classes, mean_over_classes };

// mean squared deviation from the one-hot label; the multiclass sum-over-
// classes convention by default, mean_over_classes divides by C
double brier(const PredictionSet& preds,
             BrierConvention convention = BrierConvention::sum_over_classes);

struct ReliabilityBin {
    double lo = 0.0, hi = 0.0;  // confidence interval (lo, hi]
    std::size_t count = 0;
    double accuracy = 0.0;
    double confidence = 0.0;
};

struct EceResult {
    double ece = 0.0;
    std::vector<ReliabilityBin> bins;
};

// bins partition (0, 1] into num_bins equal intervals; confidence is the max
// class probability, a prediction is correct iff argmax == label (ties to the
// lowest class index); empty bins contribute 0
EceResult ece(const PredictionSet& preds, std::size_t num_bins);

// fraction misclassified, argmax ties broken by lowest class index
double test_error(const PredictionSet& preds);

// sorted (entropy, k/N) points of the right-continuous empirical CDF; tied
// entropies collapse into a single step
std::vector<std::pair<double, double>> entropy_cdf(std::vector<double> entropies);

struct CalibrationReport {
    double test_error = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece = 0.0;
    std::vector<ReliabilityBin> bins;
    std::size_t num_bins = 0;
    std::size_t num_passes = 0;
};

CalibrationReport evaluate_calibration(const PredictionSet& preds, std::size_t num_bins,
                                       std::size_t num_passes);

nlohmann::json to_json(const CalibrationReport& report);
void write_reliability_csv(std::ostream& out, const std::vector<ReliabilityBin>& bins);
void write_entropy_cdf_csv(std::ostream& out,
                           const std::vector<std::pair<double, double>>& points);

}  // namespace uq
