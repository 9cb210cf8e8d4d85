#pragma once

// Tukey-weighted least-squares fit of
//
//     y = y0 + Cy / (1 + exp(-s * Cx * (x - x0))),   Cx, Cy > 0,  s = +-1
//
// The orientation s follows the curve (log-log curves against log(1/r) fall,
// so s = -1 there). The slope magnitude at the inflection point is Cx*Cy/4.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"
#include "fracdim/fractal/curves.hpp"
#include "fracdim/fractal/tukey.hpp"

namespace fracdim {

struct SigmoidParams {
    double x0 = 0.0, y0 = 0.0, cx = 1.0, cy = 1.0;
    int orientation = 1;

    double logistic(double x) const { return 1.0 / (1.0 + std::exp(-orientation * cx * (x - x0))); }
    double operator()(double x) const { return y0 + cy * logistic(x); }
    double slope(double x) const {
        const double s = logistic(x);
        return orientation * cx * cy * s * (1.0 - s);
    }
};

struct SigmoidFit {
    SigmoidParams params;
    double q = 0.75;
    double weighted_rmse = 0.0;
    int iterations = 0;
    int start = 0;  // which multi-start won

    /// Slope magnitude at the inflection point.
    double fd() const { return params.cx * params.cy / 4.0; }
    double operator()(double x) const { return params(x); }
};

struct SigmoidFitOptions {
    int max_iterations = 500;
    double tolerance = 1e-12;  // relative step / cost change
    std::vector<double> cx_starts{0.5, 1.0, 2.0, 4.0, 8.0};
    // Both asymptotes stay within the observed y-range widened by this fraction
    // of it on each side. Without a bound, zero-weight plateaus let the fit
    // slide toward an ever wider, flatter sigmoid.
    double asymptote_margin = 0.25;
};

namespace sigmoid_detail {

inline double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct Problem {
    std::span<const double> x, y, w;
    int orientation;
    double lower, upper;  // asymptote bounds
};

// theta = (x0, a, log cx, b):
//   lo = lower + (upper - lower) * logistic(a)
//   hi = lo + (upper - lo) * logistic(b)
//   y0 = lo, cy = hi - lo
inline SigmoidParams unpack(const Problem& pb, const Eigen::Vector4d& th) {
    const double lo = pb.lower + (pb.upper - pb.lower) * logistic(th[1]);
    const double cy = (pb.upper - lo) * logistic(th[3]);
    return {th[0], lo, std::exp(th[2]), cy, pb.orientation};
}

inline Eigen::Vector4d pack(const Problem& pb, double x0, double y0, double cx, double cy) {
    auto logit = [](double u) {
        u = std::clamp(u, 1e-12, 1.0 - 1e-12);
        return std::log(u / (1.0 - u));
    };
    const double a = logit((y0 - pb.lower) / (pb.upper - pb.lower));
    const double lo = pb.lower + (pb.upper - pb.lower) * logistic(a);
    return {x0, a, std::log(cx), logit(cy / (pb.upper - lo))};
}

inline double cost(const Problem& pb, const Eigen::Vector4d& th) {
    const auto p = unpack(pb, th);
    double c = 0.0;
    for (std::size_t j = 0; j < pb.x.size(); ++j) {
        const double r = pb.y[j] - p(pb.x[j]);
        c += pb.w[j] * r * r;
    }
    return c;
}

struct LmResult {
    Eigen::Vector4d theta;
    double cost;
    int iterations;
    bool converged;
};

inline LmResult levenberg_marquardt(const Problem& pb, Eigen::Vector4d th, const SigmoidFitOptions& opt) {
    double c = cost(pb, th);
    double lambda = 1e-3;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const auto p = unpack(pb, th);
        const double la = logistic(th[1]), lb = logistic(th[3]);
        const double dlo_da = (pb.upper - pb.lower) * la * (1.0 - la);
        const double dhi_da = dlo_da * (1.0 - lb);
        const double dhi_db = (pb.upper - p.y0) * lb * (1.0 - lb);
        Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
        Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
        for (std::size_t j = 0; j < pb.x.size(); ++j) {
            if (pb.w[j] == 0.0) continue;
            const double s = p.logistic(pb.x[j]);
            const double ds = s * (1.0 - s) * p.orientation;  // d logistic / d(cx * (x - x0))
            Eigen::Vector4d g;
            g << -p.cy * ds * p.cx, (1.0 - s) * dlo_da + s * dhi_da, p.cy * ds * p.cx * (pb.x[j] - p.x0),
                s * dhi_db;
            const double r = pb.y[j] - p(pb.x[j]);
            jtj.noalias() += pb.w[j] * g * g.transpose();
            jtr.noalias() += pb.w[j] * r * g;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 40 && !improved; ++attempt) {
            Eigen::Matrix4d a = jtj;
            a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
            const Eigen::Vector4d step = a.ldlt().solve(jtr);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            Eigen::Vector4d trial = th + step;
            for (int k = 1; k < 4; ++k) trial[k] = std::clamp(trial[k], -30.0, 30.0);
            const double tc = cost(pb, trial);
            if (std::isfinite(tc) && tc <= c) {
                const double rel_cost = (c - tc) / std::max(c, std::numeric_limits<double>::min());
                const double rel_step = step.norm() / (th.norm() + opt.tolerance);
                th = trial;
                c = tc;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = true;
                if (rel_step < opt.tolerance || rel_cost < opt.tolerance || c < 1e-30) return {th, c, it, true};
            } else {
                lambda *= 4.0;
            }
        }
        if (!improved) return {th, c, it, lambda > 1e10};  // stuck at a minimum: no descent direction left
    }
    return {th, c, opt.max_iterations, false};
}

}  // namespace sigmoid_detail

/// Weights from the Tukey taper at each point's relative position in the y-range.
inline std::vector<double> tukey_y_weights(std::span<const double> y, double q) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    std::vector<double> w(y.size(), 1.0);
    if (range <= 0) return w;
    for (std::size_t j = 0; j < y.size(); ++j) w[j] = tukey_weight((y[j] - *lo) / range, q);
    return w;
}

inline SigmoidFit fit_sigmoid(std::span<const double> x, std::span<const double> y, double q,
                              const SigmoidFitOptions& opt = {}) {
    check_tukey_q(q);
    if (x.size() != y.size()) throw InvalidArgument("fit_sigmoid: x and y lengths differ");
    if (x.size() < 5) throw InvalidArgument("fit_sigmoid: need at least 5 curve points");
    const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
    const double yrange = *yhi - *ylo;
    if (!(yrange > 0)) throw InvalidArgument("fit_sigmoid: degenerate (zero) y-range");

    const auto w = tukey_y_weights(y, q);
    // Orientation from the least-squares trend of y on x.
    const double xm = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
    double sxy = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) sxy += (x[j] - xm) * (y[j] - ym);
    const int orientation = sxy >= 0 ? 1 : -1;
    if (!(opt.asymptote_margin > 0)) throw InvalidArgument("fit_sigmoid: asymptote margin must be positive");
    const double margin = opt.asymptote_margin * yrange;
    const sigmoid_detail::Problem pb{x, y, w, orientation, *ylo - margin, *yhi + margin};

    // x0 starts at the point whose y is closest to the median y.
    std::vector<double> ys(y.begin(), y.end());
    std::nth_element(ys.begin(), ys.begin() + std::ptrdiff_t(ys.size() / 2), ys.end());
    const double ymed = ys[ys.size() / 2];
    std::size_t imed = 0;
    for (std::size_t j = 1; j < y.size(); ++j)
        if (std::fabs(y[j] - ymed) < std::fabs(y[imed] - ymed)) imed = j;

    SigmoidFit best;
    double best_cost = std::numeric_limits<double>::infinity();
    bool any = false;
    int worst_iter = 0;
    for (std::size_t k = 0; k < opt.cx_starts.size(); ++k) {
        const auto th = sigmoid_detail::pack(pb, x[imed], *ylo, opt.cx_starts[k], yrange);
        const auto res = sigmoid_detail::levenberg_marquardt(pb, th, opt);
        worst_iter = std::max(worst_iter, res.iterations);
        if (!res.converged || !std::isfinite(res.cost)) continue;
        if (res.cost < best_cost) {
            best_cost = res.cost;
            best.params = sigmoid_detail::unpack(pb, res.theta);
            best.iterations = res.iterations;
            best.start = int(k);
            any = true;
        }
    }
    if (!any) throw ConvergenceError("fit_sigmoid: no start converged within " + std::to_string(opt.max_iterations) + " iterations", best_cost);
    best.q = q;
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    best.weighted_rmse = wsum > 0 ? std::sqrt(best_cost / wsum) : 0.0;
    return best;
}

inline SigmoidFit fit_sigmoid(const LogLogCurve& curve, double q, const SigmoidFitOptions& opt = {}) {
    return fit_sigmoid(curve.x, curve.y, q, opt);
}

}  // namespace fracdim
