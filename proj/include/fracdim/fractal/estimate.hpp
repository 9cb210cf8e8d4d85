#pragma once

#include <cmath>
#include <utility>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"
#include "fracdim/fractal/curves.hpp"
#include "fracdim/fractal/sigmoid.hpp"

namespace fracdim {

/// Coordinate frame the row-points are expressed in before building the curve.
/// `principal` rotates the centered rows onto their principal axes (an isometry:
/// pair counts are unchanged, box-count grids become aligned with the data).
enum class PointFrame { native, principal };

inline const char* to_string(PointFrame f) { return f == PointFrame::native ? "native" : "principal"; }

inline PointFrame parse_point_frame(const std::string& s) {
    if (s == "native") return PointFrame::native;
    if (s == "principal") return PointFrame::principal;
    throw InvalidArgument("unknown point frame '" + s + "'");
}

struct RadiusPolicy {
    enum class Kind { distance_percentiles, diagonal_octaves, occupancy_bracket, explicit_list };

    Kind kind = Kind::distance_percentiles;
    int count = 24;
    double lo_percentile = 1e-4;  // distance_percentiles
    double hi_percentile = 0.99;
    double hi_octave = 1.0;       // diagonal_octaves: diagonal * 2^-hi_octave ...
    double lo_octave = 12.0;      //                   ... down to diagonal * 2^-lo_octave
    double margin_octaves = 1.0;  // occupancy_bracket: padding beyond the transition on each side
    std::vector<double> radii;    // explicit_list, strictly decreasing

    static RadiusPolicy default_for(CurveMethod m) {
        RadiusPolicy p;
        if (m == CurveMethod::box_count) p.kind = Kind::occupancy_bracket;
        return p;
    }
};

struct FdOptions {
    CurveMethod method = CurveMethod::box_count;
    double q = 0.75;
    RadiusPolicy radii = RadiusPolicy::default_for(CurveMethod::box_count);
    PointFrame frame = PointFrame::principal;
    int grid_shifts = 8;  // box-count only
    SigmoidFitOptions fit;

    static FdOptions for_method(CurveMethod m) {
        FdOptions o;
        o.method = m;
        o.radii = RadiusPolicy::default_for(m);
        o.frame = m == CurveMethod::box_count ? PointFrame::principal : PointFrame::native;
        o.grid_shifts = m == CurveMethod::box_count ? 8 : 1;
        return o;
    }
};

struct FdEstimate {
    LogLogCurve curve;
    SigmoidFit fit;

    double fd() const { return fit.fd(); }
};

/// Coordinates of the centered rows along their principal axes (t x k, k = numerical rank).
inline Eigen::MatrixXd principal_coordinates(const Eigen::MatrixXd& points, double rel_tol = 1e-10) {
    const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw Error("principal_coordinates: eigendecomposition failed");
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd vec = es.eigenvectors().rowwise().reverse();
    const double top = ev.size() ? ev[0] : 0.0;
    Eigen::Index k = 0;
    while (k < ev.size() && ev[k] > rel_tol * top && ev[k] > 0) ++k;
    if (k == 0) return Eigen::MatrixXd::Zero(points.rows(), 1);
    Eigen::MatrixXd coords = vec.leftCols(k) * ev.head(k).cwiseSqrt().asDiagonal();
    // Fix each axis's sign so the frame is reproducible.
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index arg;
        coords.col(j).cwiseAbs().maxCoeff(&arg);
        if (coords(arg, j) < 0) coords.col(j) *= -1.0;
    }
    return coords;
}

/// Radii bracketing the box-count transition: above `hi` every point shares one
/// cell (largest bounding-box side); at `lo` every point sits alone in its cell.
inline std::pair<double, double> occupancy_transition(const Eigen::MatrixXd& points) {
    const Eigen::Index t = points.rows();
    const double hi = (points.colwise().maxCoeff() - points.colwise().minCoeff()).maxCoeff();
    if (!(hi > 0)) throw InvalidArgument("radius schedule: degenerate bounding box (all rows identical)");
    if (t < 2) throw InvalidArgument("radius schedule: need at least 2 rows");
    const double singleton = 1.0 / double(t);
    auto all_alone = [&](double r) { return occupancy_sum(points, r) <= singleton * (1.0 + 1e-12); };
    double lo = hi;
    int halvings = 0;
    while (!all_alone(lo)) {
        lo /= 2.0;
        if (++halvings > 200) throw InvalidArgument("radius schedule: rows are not separable by any grid");
    }
    // Largest radius at which everything is still separated (bisection in log-radius).
    double sep = lo, joined = lo * 2.0;
    for (int i = 0; i < 30 && joined / sep > 1.0 + 1e-6; ++i) {
        const double mid = std::sqrt(sep * joined);
        (all_alone(mid) ? sep : joined) = mid;
    }
    return {hi, sep};
}

inline std::vector<double> make_radii(const Eigen::MatrixXd& points, CurveMethod method, const RadiusPolicy& policy,
                                      const std::vector<double>* sorted_d2 = nullptr) {
    using Kind = RadiusPolicy::Kind;
    switch (policy.kind) {
        case Kind::explicit_list: return policy.radii;
        case Kind::distance_percentiles: {
            std::vector<double> local;
            if (!sorted_d2) {
                local = sorted_squared_distances(points);
                sorted_d2 = &local;
            }
            std::vector<double> d(sorted_d2->size());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::sqrt((*sorted_d2)[i]);
            const double lo = sorted_quantile(d, policy.lo_percentile);
            const double hi = sorted_quantile(d, policy.hi_percentile);
            if (!(hi > lo) || !(lo > 0)) throw EmptyResult("radius schedule: pairwise distance percentiles collapse");
            return geometric_radii(hi, lo, policy.count);
        }
        case Kind::occupancy_bracket: {
            const auto [hi, lo] = occupancy_transition(points);
            return geometric_radii(hi * std::exp2(policy.margin_octaves), lo * std::exp2(-policy.margin_octaves), policy.count);
        }
        case Kind::diagonal_octaves: {
            const double diag = (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
            if (!(diag > 0)) throw InvalidArgument("radius schedule: degenerate bounding box (all rows identical)");
            return geometric_radii(diag * std::exp2(-policy.hi_octave), diag * std::exp2(-policy.lo_octave), policy.count);
        }
    }
    (void)method;
    return {};
}

/// Curve construction followed by the sigmoid fit; fd is the slope magnitude.
inline FdEstimate estimate_fd(const Eigen::MatrixXd& points, const FdOptions& opt) {
    check_tukey_q(opt.q);
    if (points.rows() < 2) throw InvalidArgument("estimate_fd: need at least 2 rows");
    const Eigen::MatrixXd frame = opt.frame == PointFrame::principal ? principal_coordinates(points) : points;

    FdEstimate est;
    if (opt.method == CurveMethod::pair_count) {
        const auto d2 = sorted_squared_distances(frame);
        const auto radii = make_radii(frame, opt.method, opt.radii, &d2);
        if (radii.size() < 8) throw InvalidArgument("estimate_fd: radius schedule must yield at least 8 radii");
        est.curve = pair_count_curve_from_distances(d2, radii);
    } else {
        const auto radii = make_radii(frame, opt.method, opt.radii);
        if (radii.size() < 8) throw InvalidArgument("estimate_fd: radius schedule must yield at least 8 radii");
        est.curve = box_count_curve(frame, radii, opt.grid_shifts);
    }
    est.fit = fit_sigmoid(est.curve, opt.q, opt.fit);
    return est;
}

}  // namespace fracdim
