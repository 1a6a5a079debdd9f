#pragma once

#include "umtn/error.hpp"
#include "umtn/kernels.hpp"
#include "umtn/sites.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace umtn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "unknown";
}

inline Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val" || s == "validation") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(s) + "'");
}

/// Scalar mean/variance of the training split.
struct NormalizationStats {
    double mean = 0.0;
    double variance = 1.0;

    /// Divisor used for normalization; 1 when the variance is zero.
    double scale() const { return variance > 0.0 ? std::sqrt(variance) : 1.0; }
    bool degenerate() const { return !(variance > 0.0); }

    double normalize(double v) const { return (v - mean) / scale(); }
    double denormalize(double v) const { return v * scale() + mean; }
};

/// N sequences of measurement vectors over one shared site set.
///
/// Values are stored flat in sequence-major, then time, then site order.
struct SequenceDataset {
    SiteSet sites;
    std::size_t n_sequences = 0;
    std::size_t length = 0;  // tau + horizon
    int tau = 5;
    int horizon = 15;
    std::vector<double> values;
    std::vector<Split> split;
    NormalizationStats stats;
    bool normalized = false;
    std::optional<RadialKernel> kernel;
    std::uint64_t seed = 0;

    std::size_t n_sites() const { return static_cast<std::size_t>(sites.size()); }

    Eigen::Map<const RowMatrix> sequence(std::size_t k) const {
        return {values.data() + k * length * n_sites(), static_cast<Eigen::Index>(length),
                static_cast<Eigen::Index>(n_sites())};
    }
    Eigen::Map<RowMatrix> sequence(std::size_t k) {
        return {values.data() + k * length * n_sites(), static_cast<Eigen::Index>(length),
                static_cast<Eigen::Index>(n_sites())};
    }
    Eigen::Map<const Vector> frame(std::size_t k, std::size_t t) const {
        return {values.data() + (k * length + t) * n_sites(), static_cast<Eigen::Index>(n_sites())};
    }

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < split.size(); ++k)
            if (split[k] == s) out.push_back(k);
        return out;
    }
    std::size_t count(Split s) const { return indices(s).size(); }

    /// Throws ValidationError when sizes disagree or values are not finite.
    void validate() const {
        if (values.size() != n_sequences * length * n_sites())
            throw ValidationError("dataset payload has " + std::to_string(values.size()) +
                                  " values, expected " +
                                  std::to_string(n_sequences * length * n_sites()));
        if (split.size() != n_sequences) throw ValidationError("split assignment length mismatch");
        for (double v : values)
            if (!std::isfinite(v)) throw DataError("dataset contains non-finite values");
        if (tau < 1 || horizon < 0 || static_cast<std::size_t>(tau + horizon) > length)
            throw ValidationError("tau + horizon exceeds sequence length");
    }
};

/// Mean and (population) variance over every value of the training split.
inline NormalizationStats compute_training_stats(const SequenceDataset& ds) {
    const auto train = ds.indices(Split::train);
    if (train.empty()) throw ConfigError("training split is empty");
    const std::size_t per = ds.length * ds.n_sites();
    double sum = 0.0;
    for (auto k : train)
        for (std::size_t i = 0; i < per; ++i) sum += ds.values[k * per + i];
    const double count = static_cast<double>(train.size() * per);
    const double mean = sum / count;
    double ss = 0.0;
    for (auto k : train)
        for (std::size_t i = 0; i < per; ++i) {
            const double d = ds.values[k * per + i] - mean;
            ss += d * d;
        }
    return {mean, ss / count};
}

/// Assign splits in index order: first `train` sequences, then `val`, then `test`.
inline std::vector<Split> sequential_split(std::size_t train, std::size_t val, std::size_t test) {
    std::vector<Split> out;
    out.reserve(train + val + test);
    out.insert(out.end(), train, Split::train);
    out.insert(out.end(), val, Split::val);
    out.insert(out.end(), test, Split::test);
    return out;
}

}  // namespace umtn
