#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/matrix.hpp"

namespace uq {

struct Dataset {
    Matrix features;  // n x d
    std::vector<int> labels;
    std::string name;
    std::uint64_t seed = 0;
    bool out_of_distribution = false;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    int num_classes() const;  // 1 + max label
    void validate() const;
};

// two interleaving unit half-circles with gaussian noise; balanced classes
// (odd n gives the extra point to class 0)
Dataset gen_moons(std::size_t n, double noise_sigma, std::uint64_t seed);

// isotropic gaussian clusters, one class per center, labels enumerate centers
Dataset gen_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sigma,
                  std::uint64_t seed);

// base features mapped through x*scale + shift; labels retained, marked OOD
Dataset gen_ood(const Dataset& base, const std::vector<double>& shift, double scale,
                std::uint64_t seed);

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 0;
    void validate() const;
};

struct Split {
    Dataset train, val, test;
};

// disjoint partition; val/test sizes are the rounded fractions, the remainder
// goes to train
Split split_dataset(const Dataset& ds, const SplitSpec& spec);

// header "f0,...,f{d-1},label"; features written with shortest round-trip
// precision, so save/load is lossless
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

nlohmann::json dataset_metadata(const Dataset& ds);  // {name, n, d, C, seed}

// per-feature affine transform fitted on the training split
struct Standardizer {
    std::vector<double> mean, stddev;

    static Standardizer fit(const Dataset& train);
    Dataset apply(const Dataset& ds) const;
    nlohmann::json to_json() const;
    static Standardizer from_json(const nlohmann::json& j);
};

}  // namespace uq
