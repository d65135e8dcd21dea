#include "uq/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "uq/errors.hpp"
#include "uq/rng.hpp"

namespace uq {

int Dataset::num_classes() const {
    int mx = -1;
    for (int y : labels) {
        mx = std::max(mx, y);
    }
    return mx + 1;
}

void Dataset::validate() const {
    if (labels.size() != features.rows()) {
        throw ShapeError("dataset: label count does not match feature rows");
    }
    for (int y : labels) {
        if (y < 0) {
            throw UsageError("dataset: negative label");
        }
    }
}

Dataset gen_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
    if (n < 2) {
        throw UsageError("gen_moons: need at least 2 samples");
    }
    const std::size_t n0 = n / 2 + n % 2;
    const std::size_t n1 = n / 2;
    Dataset ds;
    ds.name = "moons";
    ds.seed = seed;
    ds.features = Matrix(n, 2);
    ds.labels.resize(n);
    RngStream rng = derive_stream(seed, StreamKind::data);
    std::size_t row = 0;
    auto place = [&](double x, double y, int label) {
        ds.features(row, 0) = x + noise_sigma * rng.next_gaussian();
        ds.features(row, 1) = y + noise_sigma * rng.next_gaussian();
        ds.labels[row] = label;
        ++row;
    };
    for (std::size_t i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n0 - 1)
                                : 0.0;
        place(std::cos(t), std::sin(t), 0);
    }
    for (std::size_t i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n1 - 1)
                                : 0.0;
        place(1.0 - std::cos(t), 0.5 - std::sin(t), 1);
    }
    return ds;
}

Dataset gen_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sigma,
                  std::uint64_t seed) {
    if (centers.size() < 2) {
        throw UsageError("gen_blobs: need at least 2 centers");
    }
    const std::size_t d = centers.front().size();
    for (const auto& c : centers) {
        if (c.size() != d) {
            throw ShapeError("gen_blobs: centers have mixed dimensionality");
        }
    }
    Dataset ds;
    ds.name = "blobs";
    ds.seed = seed;
    ds.features = Matrix(n, d);
    ds.labels.resize(n);
    RngStream rng = derive_stream(seed, StreamKind::data);
    const std::size_t k = centers.size();
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t count = n / k + (c < n % k ? 1 : 0);
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                ds.features(row, j) = centers[c][j] + sigma * rng.next_gaussian();
            }
            ds.labels[row] = static_cast<int>(c);
            ++row;
        }
    }
    return ds;
}

Dataset gen_ood(const Dataset& base, const std::vector<double>& shift, double scale,
                std::uint64_t seed) {
    if (shift.size() != base.dim()) {
        throw ShapeError("gen_ood: shift dimension does not match dataset");
    }
    Dataset ds = base;
    ds.name = base.name + "_ood";
    ds.seed = seed;
    ds.out_of_distribution = true;
    for (std::size_t i = 0; i < ds.features.rows(); ++i) {
        for (std::size_t j = 0; j < ds.features.cols(); ++j) {
            ds.features(i, j) = ds.features(i, j) * scale + shift[j];
        }
    }
    return ds;
}

void SplitSpec::validate() const {
    if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0) {
        throw UsageError("split: fractions must be non-negative");
    }
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-12) {
        throw UsageError("split: fractions must sum to 1");
    }
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx, const char* suffix) {
    Dataset out;
    out.name = ds.name + suffix;
    out.seed = ds.seed;
    out.out_of_distribution = ds.out_of_distribution;
    out.features = Matrix(idx.size(), ds.dim());
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out.features(i, j) = ds.features(idx[i], j);
        }
        out.labels[i] = ds.labels[idx[i]];
    }
    return out;
}

}  // namespace

Split split_dataset(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    RngStream rng = derive_stream(spec.seed, StreamKind::shuffle);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n)));
    const std::size_t n_test = static_cast<std::size_t>(std::llround(spec.test_frac * static_cast<double>(n)));
    if (n_val + n_test > n) {
        throw UsageError("split: rounded val+test exceed dataset size");
    }
    const std::size_t n_train = n - n_val - n_test;

    std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> va(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                                order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    std::vector<std::size_t> te(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    Split s;
    s.train = take_rows(ds, tr, "_train");
    s.val = take_rows(ds, va, "_val");
    s.test = take_rows(ds, te, "_test");
    return s;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, std::size_t line) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ParseError("line " + std::to_string(line) + ": non-numeric cell '" + cell + "'");
    }
    if (!std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line) + ": non-finite value");
    }
    return v;
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open csv file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty csv file: " + path);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const std::vector<std::string> header = split_cells(line);
    if (header.size() < 2 || header.back() != "label") {
        throw ParseError("line 1: expected header f0,...,f{d-1},label");
    }
    const std::size_t d = header.size() - 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            throw ParseError("line 1: unexpected header column '" + header[j] + "'");
        }
    }

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> cells = split_cells(line);
        if (cells.size() != d + 1) {
            throw ParseError("line " + std::to_string(lineno) + ": ragged row (" +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(d + 1) + ")");
        }
        for (std::size_t j = 0; j < d; ++j) {
            values.push_back(parse_double(cells[j], lineno));
        }
        const double ly = parse_double(cells[d], lineno);
        const int y = static_cast<int>(ly);
        if (static_cast<double>(y) != ly || y < 0) {
            throw ParseError("line " + std::to_string(lineno) + ": label must be a non-negative integer");
        }
        labels.push_back(y);
    }
    if (labels.empty()) {
        throw ParseError("no samples in " + path);
    }
    Dataset ds;
    ds.features = Matrix::from_data(labels.size(), d, std::move(values));
    ds.labels = std::move(labels);
    ds.name = path;
    ds.validate();
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw UsageError("cannot open csv file for writing: " + path);
    }
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        out << "f" << j << ",";
    }
    out << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out << format_double(ds.features(i, j)) << ",";
        }
        out << ds.labels[i] << "\n";
    }
}

nlohmann::json dataset_metadata(const Dataset& ds) {
    return nlohmann::json{{"name", ds.name},
                          {"n", ds.size()},
                          {"d", ds.dim()},
                          {"C", ds.num_classes()},
                          {"seed", ds.seed},
                          {"out_of_distribution", ds.out_of_distribution}};
}

Standardizer Standardizer::fit(const Dataset& train) {
    if (train.size() == 0) {
        throw UsageError("standardizer: empty training set");
    }
    const std::size_t d = train.dim();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    const double n = static_cast<double>(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            s.mean[j] += train.features(i, j);
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        s.mean[j] /= n;
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = train.features(i, j) - s.mean[j];
            s.stddev[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        s.stddev[j] = std::sqrt(s.stddev[j] / n);
        if (s.stddev[j] < 1e-12) {
            s.stddev[j] = 1.0;  // constant feature, leave it centered only
        }
    }
    return s;
}

Dataset Standardizer::apply(const Dataset& ds) const {
    if (ds.dim() != mean.size()) {
        throw ShapeError("standardizer: dimension mismatch");
    }
    Dataset out = ds;
    for (std::size_t i = 0; i < out.features.rows(); ++i) {
        for (std::size_t j = 0; j < out.features.cols(); ++j) {
            out.features(i, j) = (out.features(i, j) - mean[j]) / stddev[j];
        }
    }
    return out;
}

nlohmann::json Standardizer::to_json() const {
    return nlohmann::json{{"mean", mean}, {"stddev", stddev}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    if (s.mean.size() != s.stddev.size()) {
        throw ParseError("standardizer: mean/stddev length mismatch");
    }
    return s;
}

}  // namespace uq
