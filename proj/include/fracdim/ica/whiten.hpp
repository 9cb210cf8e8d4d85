#pragma once

// Spatial-ICA whitening. Voxels are the samples and time points the variables:
// every row (time point) is centered over voxels, the t x t covariance is
// eigendecomposed, and the data is projected onto the top-k eigenvectors
// scaled by 1/sqrt(eigenvalue).

#include <optional>

#include <Eigen/Dense>

#include "fracdim/core/error.hpp"

namespace fracdim {

struct WhiteningModel {
    Eigen::VectorXd mean;         // per time point, over voxels
    Eigen::MatrixXd projection;   // k x t
    Eigen::MatrixXd dewhitening;  // t x k, inverse map on the retained subspace
    Eigen::VectorXd eigenvalues;  // k, descending
    Eigen::Index k = 0;
};

struct Whitened {
    WhiteningModel model;
    Eigen::MatrixXd data;  // k x n, identity covariance
};

inline constexpr double kAutoRankTolerance = 1e-10;

inline Eigen::MatrixXd center_rows(const Eigen::MatrixXd& y) { return y.colwise() - y.rowwise().mean(); }

/// k = nullopt keeps every eigenvalue above 1e-10 of the largest.
inline Whitened whiten(const Eigen::MatrixXd& y, std::optional<Eigen::Index> k = std::nullopt) {
    if (y.rows() < 2) throw InvalidArgument("whiten: need at least 2 time points");
    if (y.cols() < 2) throw InvalidArgument("whiten: need at least 2 voxels");
    if (!y.allFinite()) throw InvalidArgument("whiten: non-finite input");
    Whitened w;
    w.model.mean = y.rowwise().mean();
    const Eigen::MatrixXd centered = y.colwise() - w.model.mean;
    const Eigen::MatrixXd cov = centered * centered.transpose() / double(y.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw Error("whiten: eigendecomposition failed");
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd vec = es.eigenvectors().rowwise().reverse();
    if (!(ev[0] > 0)) throw InvalidArgument("whiten: zero-variance data");

    Eigen::Index rank = 0;
    while (rank < ev.size() && ev[rank] > kAutoRankTolerance * ev[0]) ++rank;
    Eigen::Index keep = rank;
    if (k) {
        if (*k < 1) throw InvalidArgument("whiten: k must be >= 1");
        if (*k > rank)
            throw InvalidArgument("whiten: k = " + std::to_string(*k) + " exceeds the numerical rank " + std::to_string(rank));
        keep = *k;
    }
    w.model.k = keep;
    w.model.eigenvalues = ev.head(keep);
    const Eigen::MatrixXd e = vec.leftCols(keep);
    w.model.projection = w.model.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * e.transpose();
    w.model.dewhitening = e * w.model.eigenvalues.cwiseSqrt().asDiagonal();
    w.data = w.model.projection * centered;
    return w;
}

}  // namespace fracdim
