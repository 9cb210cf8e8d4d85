#pragma once

// Pair-count and box-count log-log curves. Samples are the rows of the matrix
// (one point per time point in voxel space); x = log(1/r).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"

namespace fracdim {

enum class CurveMethod { pair_count, box_count };

inline const char* to_string(CurveMethod m) { return m == CurveMethod::pair_count ? "pair-count" : "box-count"; }

inline CurveMethod parse_curve_method(const std::string& s) {
    if (s == "pair-count" || s == "pc") return CurveMethod::pair_count;
    if (s == "box-count" || s == "bc") return CurveMethod::box_count;
    throw InvalidArgument("unknown curve method '" + s + "'");
}

struct LogLogCurve {
    CurveMethod method = CurveMethod::pair_count;
    std::vector<double> r;  // strictly decreasing
    std::vector<double> x;  // log(1/r), strictly increasing
    std::vector<double> y;  // log PC(r) or log sum_i R_i^2
    std::vector<double> dropped_r;  // radii whose measure was zero

    std::size_t size() const { return x.size(); }
};

namespace curve_detail {

inline void check_radii(std::span<const double> r_values) {
    if (r_values.empty()) throw InvalidArgument("radius list is empty");
    for (std::size_t i = 0; i < r_values.size(); ++i) {
        if (!(r_values[i] > 0) || !std::isfinite(r_values[i])) throw InvalidArgument("radii must be positive and finite");
        if (i > 0 && !(r_values[i] < r_values[i - 1])) throw InvalidArgument("radii must be strictly decreasing");
    }
}

}  // namespace curve_detail

/// All t(t-1)/2 squared Euclidean distances between rows, ascending.
inline std::vector<double> sorted_squared_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index t = points.rows();
    // Row-major copy so each point is contiguous.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> p = points;
    std::vector<double> d2;
    d2.reserve(std::size_t(t) * std::size_t(t - 1) / 2);
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = i + 1; j < t; ++j) d2.push_back((p.row(i) - p.row(j)).squaredNorm());
    std::sort(d2.begin(), d2.end());
    return d2;
}

/// Number of unordered pairs with distance <= r, from a sorted squared-distance list.
inline std::uint64_t pair_count_at(std::span<const double> sorted_d2, double r) {
    return std::uint64_t(std::upper_bound(sorted_d2.begin(), sorted_d2.end(), r * r) - sorted_d2.begin());
}

inline LogLogCurve pair_count_curve_from_distances(std::span<const double> sorted_d2, std::span<const double> r_values) {
    curve_detail::check_radii(r_values);
    LogLogCurve c;
    c.method = CurveMethod::pair_count;
    for (double r : r_values) {
        const auto pc = pair_count_at(sorted_d2, r);
        if (pc == 0) {
            c.dropped_r.push_back(r);
            continue;
        }
        c.r.push_back(r);
        c.x.push_back(-std::log(r));
        c.y.push_back(std::log(double(pc)));
    }
    if (c.size() < 2) throw EmptyResult("pair_count_curve: fewer than 2 radii with nonzero pair count");
    return c;
}

inline LogLogCurve pair_count_curve(const Eigen::MatrixXd& points, std::span<const double> r_values) {
    if (points.rows() < 2) throw InvalidArgument("pair_count_curve: need at least 2 rows");
    curve_detail::check_radii(r_values);
    const auto d2 = sorted_squared_distances(points);
    return pair_count_curve_from_distances(d2, r_values);
}

/// sum_i (count_i / t)^2 over the cells of a side-r grid anchored at the bounding-box minimum.
/// Sum of squared cell frequencies for a grid of side r whose origin sits at
/// the bounding-box minimum moved back by shift * r along every axis.
inline double occupancy_sum(const Eigen::MatrixXd& points, double r, double shift = 0.0) {
    const Eigen::Index t = points.rows(), n = points.cols();
    const Eigen::RowVectorXd lo = points.colwise().minCoeff();
    std::vector<std::int64_t> cells(static_cast<std::size_t>(t * n));
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index k = 0; k < n; ++k) {
            const double q = std::floor((points(i, k) - lo[k]) / r + shift);
            if (q > 9.0e18) throw InvalidArgument("occupancy_sum: radius too small for the data extent");
            cells[std::size_t(i * n + k)] = std::int64_t(q);
        }
    std::vector<std::size_t> order(static_cast<std::size_t>(t));
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto row = [&](std::size_t i) { return std::span<const std::int64_t>(cells.data() + i * std::size_t(n), std::size_t(n)); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = row(a), rb = row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    std::uint64_t sum_sq = 0, run = 1;
    for (std::size_t i = 1; i <= order.size(); ++i) {
        if (i < order.size() && std::ranges::equal(row(order[i]), row(order[i - 1]))) {
            ++run;
            continue;
        }
        sum_sq += run * run;
        run = 1;
    }
    return double(sum_sq) / (double(t) * double(t));
}

/// With grid_shifts = K > 1 the occupancy sum is averaged over K grids moved
/// diagonally by j/K of a cell (j = 0..K-1) before taking the log.
inline LogLogCurve box_count_curve(const Eigen::MatrixXd& points, std::span<const double> r_values, int grid_shifts = 1) {
    if (points.rows() < 2) throw InvalidArgument("box_count_curve: need at least 2 rows");
    if (grid_shifts < 1) throw InvalidArgument("box_count_curve: grid_shifts must be >= 1");
    curve_detail::check_radii(r_values);
    const Eigen::RowVectorXd side = points.colwise().maxCoeff() - points.colwise().minCoeff();
    if (side.maxCoeff() <= 0.0) throw InvalidArgument("box_count_curve: degenerate bounding box (all rows identical)");
    LogLogCurve c;
    c.method = CurveMethod::box_count;
    for (double r : r_values) {
        c.r.push_back(r);
        c.x.push_back(-std::log(r));
        double sum = 0.0;
        for (int j = 0; j < grid_shifts; ++j) sum += occupancy_sum(points, r, double(j) / grid_shifts);
        c.y.push_back(std::log(sum / grid_shifts));
    }
    if (c.size() < 2) throw EmptyResult("box_count_curve: fewer than 2 radii");
    return c;
}

/// n radii geometrically spaced from hi down to lo (both included).
inline std::vector<double> geometric_radii(double hi, double lo, int n) {
    if (!(hi > lo) || !(lo > 0) || n < 2) throw InvalidArgument("geometric_radii: need hi > lo > 0 and n >= 2");
    std::vector<double> r(static_cast<std::size_t>(n));
    const double step = std::log(lo / hi) / (n - 1);
    for (int i = 0; i < n; ++i) r[std::size_t(i)] = hi * std::exp(step * i);
    r.front() = hi;
    r.back() = lo;
    return r;
}

/// Quantile of a sorted sample by linear interpolation between order statistics.
inline double sorted_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
    const double pos = std::clamp(p, 0.0, 1.0) * double(sorted.size() - 1);
    const auto i = std::size_t(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double f = pos - double(i);
    return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

}  // namespace fracdim
