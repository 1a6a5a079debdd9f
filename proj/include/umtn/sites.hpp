#pragma once

#include "umtn/error.hpp"

#include <Eigen/Dense>
#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <iomanip>

namespace umtn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// crc32 over an arbitrary byte range.
inline std::uint32_t checksum_bytes(std::span<const unsigned char> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t checksum_doubles(std::span<const double> values) {
    return checksum_bytes({reinterpret_cast<const unsigned char*>(values.data()),
                           values.size() * sizeof(double)});
}

inline std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

/// n distinct data sites in R^d with a cached pairwise-distance matrix.
class SiteSet {
public:
    SiteSet() = default;

    /// `coords` is n x d, one site per row. Throws ValidationError on
    /// duplicate sites or non-finite coordinates.
    explicit SiteSet(Matrix coords) : coords_(std::move(coords)) {
        if (coords_.rows() == 0 || coords_.cols() == 0)
            throw ValidationError("site set must contain at least one site of dimension >= 1");
        if (!coords_.allFinite()) throw ValidationError("site coordinates must be finite");
        const auto n = coords_.rows();
        dist_.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            dist_(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double d = (coords_.row(i) - coords_.row(j)).norm();
                if (d == 0.0)
                    throw ValidationError("duplicate sites " + std::to_string(i) + " and " +
                                          std::to_string(j));
                dist_(i, j) = d;
                dist_(j, i) = d;
            }
        }
    }

    Eigen::Index size() const noexcept { return coords_.rows(); }
    Eigen::Index dim() const noexcept { return coords_.cols(); }
    const Matrix& coords() const noexcept { return coords_; }
    const Matrix& distances() const noexcept { return dist_; }
    Vector site(Eigen::Index i) const { return coords_.row(i).transpose(); }

    double min_separation() const {
        double m = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < size(); ++i)
            for (Eigen::Index j = i + 1; j < size(); ++j) m = std::min(m, dist_(i, j));
        return m;
    }

    /// Stable identity of the coordinates (crc32 of n, d and the row-major values).
    std::string hash() const {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(coords_.size()) + 2);
        flat.push_back(static_cast<double>(size()));
        flat.push_back(static_cast<double>(dim()));
        for (Eigen::Index i = 0; i < size(); ++i)
            for (Eigen::Index k = 0; k < dim(); ++k) flat.push_back(coords_(i, k));
        return hex32(checksum_doubles(flat));
    }

    /// Same sites reordered: result site k is this site perm[k].
    SiteSet permuted(std::span<const Eigen::Index> perm) const {
        Matrix c(size(), dim());
        for (Eigen::Index k = 0; k < size(); ++k) c.row(k) = coords_.row(perm[static_cast<std::size_t>(k)]);
        return SiteSet(std::move(c));
    }

private:
    Matrix coords_;
    Matrix dist_;
};

}  // namespace umtn
