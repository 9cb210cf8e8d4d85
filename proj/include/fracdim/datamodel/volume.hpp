#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"

namespace fracdim {

using Index3 = std::array<int, 3>;

struct Dims4 {
    int nx = 1, ny = 1, nz = 1, nt = 1;

    std::size_t spatial() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
    std::size_t total() const { return spatial() * std::size_t(nt); }
    bool operator==(const Dims4&) const = default;
};

struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;

    double axis(int a) const { return a == 0 ? sx : (a == 1 ? sy : sz); }
    bool operator==(const Spacing&) const = default;
};

/// 3-D voxel grid evolving over time. Storage is x fastest, then y, z, t.
class Volume4D {
public:
    Volume4D() = default;

    Volume4D(Dims4 dims, Spacing spacing, std::vector<double> values)
        : dims_(dims), spacing_(spacing), values_(std::move(values)) {
        validate();
    }

    Volume4D(Dims4 dims, Spacing spacing) : Volume4D(dims, spacing, std::vector<double>(dims.total(), 0.0)) {}

    const Dims4& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    std::size_t voxel(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(dims_.nx) * (std::size_t(y) + std::size_t(dims_.ny) * std::size_t(z));
    }
    std::size_t offset(int x, int y, int z, int t) const { return voxel(x, y, z) + dims_.spatial() * std::size_t(t); }

    double& at(int x, int y, int z, int t) { return values_[offset(x, y, z, t)]; }
    double at(int x, int y, int z, int t) const { return values_[offset(x, y, z, t)]; }

    bool operator==(const Volume4D&) const = default;

private:
    void validate() const {
        if (dims_.nx < 1 || dims_.ny < 1 || dims_.nz < 1 || dims_.nt < 1)
            throw InvalidArgument("Volume4D: every dimension must be >= 1");
        if (!(spacing_.sx > 0) || !(spacing_.sy > 0) || !(spacing_.sz > 0))
            throw InvalidArgument("Volume4D: voxel spacing must be positive");
        if (values_.size() != dims_.total())
            throw InvalidArgument("Volume4D: value count " + std::to_string(values_.size()) +
                                  " does not match dims product " + std::to_string(dims_.total()));
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgument("Volume4D: non-finite value");
    }

    Dims4 dims_;
    Spacing spacing_;
    std::vector<double> values_;
};

struct VoxelMask {
    int nx = 1, ny = 1, nz = 1;
    std::vector<bool> included;  // x fastest

    static VoxelMask all(int nx, int ny, int nz) {
        return {nx, ny, nz, std::vector<bool>(std::size_t(nx) * ny * nz, true)};
    }

    bool at(int x, int y, int z) const {
        return included[std::size_t(x) + std::size_t(nx) * (std::size_t(y) + std::size_t(ny) * std::size_t(z))];
    }
    std::size_t count() const {
        std::size_t c = 0;
        for (bool b : included) c += b;
        return c;
    }
};

/// The t x n analysis matrix: one row per time point, one column per retained voxel.
struct DataMatrix {
    Eigen::MatrixXd values;
    std::vector<Index3> voxel_index;

    Eigen::Index t() const { return values.rows(); }
    Eigen::Index n() const { return values.cols(); }

    /// Columns laid out on a single row (y = 0, z = 0) when no grid is attached.
    static DataMatrix from_values(Eigen::MatrixXd values) {
        DataMatrix m;
        m.voxel_index.reserve(std::size_t(values.cols()));
        for (Eigen::Index j = 0; j < values.cols(); ++j) m.voxel_index.push_back({int(j), 0, 0});
        m.values = std::move(values);
        return m;
    }

    void validate() const {
        if (std::size_t(values.cols()) != voxel_index.size())
            throw InvalidArgument("DataMatrix: voxel_index size does not match column count");
        std::set<Index3> seen;
        for (const auto& v : voxel_index) {
            if (v[0] < 0 || v[1] < 0 || v[2] < 0) throw InvalidArgument("DataMatrix: negative voxel coordinate");
            if (!seen.insert(v).second) throw InvalidArgument("DataMatrix: duplicate voxel_index entry");
        }
        if (!values.allFinite()) throw InvalidArgument("DataMatrix: non-finite value");
    }
};

}  // namespace fracdim
