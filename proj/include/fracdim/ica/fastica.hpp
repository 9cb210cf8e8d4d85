#pragma once

// Symmetric fixed-point FastICA in the spatial direction: rows of S are
// independent maps over voxels, columns of T their time courses, and
// T * S approximates the row-centered data.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"
#include "fracdim/core/rng.hpp"
#include "fracdim/ica/whiten.hpp"

namespace fracdim {

enum class Nonlinearity { tanh, cube };

inline std::string to_string(Nonlinearity g) { return g == Nonlinearity::tanh ? "tanh" : "cube"; }

inline Nonlinearity parse_nonlinearity(const std::string& s) {
    if (s == "tanh") return Nonlinearity::tanh;
    if (s == "cube") return Nonlinearity::cube;
    throw InvalidArgument("unknown nonlinearity '" + s + "' (expected tanh or cube)");
}

struct FastIcaOptions {
    Nonlinearity nonlinearity = Nonlinearity::tanh;
    double tolerance = 1e-6;
    int max_iterations = 1000;
    int max_restarts = 5;
};

struct UnmixingModel {
    Eigen::MatrixXd T;                 // t x p
    Eigen::MatrixXd S;                 // p x n, unit-variance rows
    Eigen::MatrixXd W;                 // p x k, orthonormal rows in whitened space
    std::vector<Eigen::Index> order;   // 0-based component ids, ascending rank-1 RMSE
    std::vector<double> rank1_rmse;    // per component id
    std::vector<double> rmse_curve;    // p + 1 entries once sorted
    Eigen::Index p = 0, k = 0;
    bool converged = false;
    int iterations = 0;                // of the final attempt
    int restarts = 0;
    double achieved_tolerance = 0.0;
    std::uint64_t seed = 0;
    Nonlinearity nonlinearity = Nonlinearity::tanh;
};

namespace ica_detail {

inline Eigen::MatrixXd symmetric_decorrelate(const Eigen::MatrixXd& w) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
    const Eigen::VectorXd d = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose() * w;
}

inline double rms(const Eigen::MatrixXd& m) { return std::sqrt(m.squaredNorm() / double(m.size())); }

}  // namespace ica_detail

/// p = nullopt uses the whitened rank.
inline UnmixingModel fastica(const Eigen::MatrixXd& y, std::optional<Eigen::Index> p, std::uint64_t seed,
                             const FastIcaOptions& opt = {}) {
    const Whitened wh = whiten(y);
    const Eigen::Index k = wh.model.k;
    const Eigen::Index comps = p.value_or(k);
    if (comps < 1) throw InvalidArgument("fastica: p must be >= 1");
    if (comps > y.rows())
        throw InvalidArgument("fastica: p = " + std::to_string(comps) + " exceeds the number of time points t = " +
                              std::to_string(y.rows()));
    if (comps > k)
        throw InvalidArgument("fastica: p = " + std::to_string(comps) + " exceeds the whitened dimension k = " +
                              std::to_string(k));
    const Eigen::MatrixXd& z = wh.data;
    const double n = double(z.cols());

    UnmixingModel u;
    u.p = comps;
    u.k = k;
    u.seed = seed;
    u.nonlinearity = opt.nonlinearity;
    for (int attempt = 0; attempt <= opt.max_restarts; ++attempt) {
        Rng rng = Rng(seed).fork(std::uint64_t(attempt));
        Eigen::MatrixXd w(comps, k);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
        w = ica_detail::symmetric_decorrelate(w);
        double change = std::numeric_limits<double>::infinity();
        int it = 0;
        while (it < opt.max_iterations) {
            ++it;
            const Eigen::MatrixXd wz = w * z;
            Eigen::MatrixXd g(wz.rows(), wz.cols());
            Eigen::VectorXd gp_mean(wz.rows());
            if (opt.nonlinearity == Nonlinearity::tanh) {
                g = wz.array().tanh().matrix();
                gp_mean = (1.0 - g.array().square()).rowwise().mean().matrix();
            } else {
                g = wz.array().cube().matrix();
                gp_mean = (3.0 * wz.array().square()).rowwise().mean().matrix();
            }
            Eigen::MatrixXd next = g * z.transpose() / n - gp_mean.asDiagonal() * w;
            next = ica_detail::symmetric_decorrelate(next);
            // Directions only matter up to sign: compare |<w_new, w_old>| with 1.
            change = (1.0 - (next * w.transpose()).diagonal().array().abs()).abs().maxCoeff();
            w = next;
            if (change < opt.tolerance) break;
        }
        u.W = w;
        u.iterations = it;
        u.restarts = attempt;
        u.achieved_tolerance = change;
        u.converged = change < opt.tolerance;
        if (u.converged) break;
    }
    u.S = u.W * z;
    u.T = wh.model.dewhitening * u.W.transpose();
    return u;
}

/// RMSE of the rank-1 reconstruction T_i S_i against the row-centered data, per component.
inline std::vector<double> rank1_rmse(const UnmixingModel& u, const Eigen::MatrixXd& centered) {
    std::vector<double> out(static_cast<std::size_t>(u.p));
    for (Eigen::Index i = 0; i < u.p; ++i)
        out[std::size_t(i)] = ica_detail::rms(centered - u.T.col(i) * u.S.row(i));
    return out;
}

/// Entry j is the RMSE of reconstructing the centered data from the first j ordered components.
inline std::vector<double> rmse_curve(const UnmixingModel& u, const Eigen::MatrixXd& centered) {
    if (u.order.size() != std::size_t(u.p)) throw InvalidArgument("rmse_curve: model is not sorted");
    std::vector<double> curve{ica_detail::rms(centered)};
    Eigen::MatrixXd residual = centered;
    for (Eigen::Index id : u.order) {
        residual -= u.T.col(id) * u.S.row(id);
        curve.push_back(ica_detail::rms(residual));
    }
    return curve;
}

/// Orders components by ascending rank-1 RMSE (ties keep the lower id first) and fills rmse_curve.
inline UnmixingModel sort_components(UnmixingModel u, const Eigen::MatrixXd& y) {
    const Eigen::MatrixXd centered = center_rows(y);
    u.rank1_rmse = rank1_rmse(u, centered);
    u.order.resize(std::size_t(u.p));
    std::iota(u.order.begin(), u.order.end(), Eigen::Index{0});
    std::stable_sort(u.order.begin(), u.order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return u.rank1_rmse[std::size_t(a)] < u.rank1_rmse[std::size_t(b)]; });
    u.rmse_curve = rmse_curve(u, centered);
    return u;
}

}  // namespace fracdim
