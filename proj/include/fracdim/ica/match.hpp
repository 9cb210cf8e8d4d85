#pragma once

// Scores recovered time courses against ground truth.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>

#include "fracdim/core/error.hpp"
#include "fracdim/core/matrix_io.hpp"
#include "fracdim/ica/fastica.hpp"

namespace fracdim {

struct SourceMatchEntry {
    int source = 0;            // 1-based ground-truth id
    Eigen::Index component = 0;
    double r = 0.0;
    double p_value = 1.0;
    double rmse = 0.0;         // after sign and least-squares scale alignment, both centered
};

using SourceMatch = std::vector<SourceMatchEntry>;

inline double pearson_r(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd da = a.array() - a.mean(), db = b.array() - b.mean();
    const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
    return den > 0 ? std::clamp(da.dot(db) / den, -1.0, 1.0) : 0.0;
}

/// Two-sided p-value of r under the null of zero correlation, t = r sqrt((n-2)/(1-r^2)).
inline double pearson_p_value(double r, std::size_t n) {
    if (n < 3) return 1.0;
    if (std::fabs(r) >= 1.0) return 0.0;
    const double df = double(n - 2);
    const double t = std::fabs(r) * std::sqrt(df / (1.0 - r * r));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

inline double aligned_rmse(const Eigen::VectorXd& truth, const Eigen::VectorXd& comp) {
    const Eigen::VectorXd dt = truth.array() - truth.mean(), dc = comp.array() - comp.mean();
    const double cc = dc.squaredNorm();
    const double scale = cc > 0 ? dt.dot(dc) / cc : 0.0;
    return std::sqrt((dt - scale * dc).squaredNorm() / double(dt.size()));
}

inline SourceMatch match_sources(const UnmixingModel& u, const std::vector<Eigen::VectorXd>& truth) {
    SourceMatch out;
    for (std::size_t s = 0; s < truth.size(); ++s) {
        if (truth[s].size() != u.T.rows())
            throw InvalidArgument("match_sources: ground-truth length " + std::to_string(truth[s].size()) +
                                  " differs from t = " + std::to_string(u.T.rows()));
        SourceMatchEntry best;
        best.source = int(s) + 1;
        double best_abs = -1.0;
        for (Eigen::Index c = 0; c < u.p; ++c) {
            const double r = pearson_r(truth[s], u.T.col(c));
            if (std::fabs(r) > best_abs) {
                best_abs = std::fabs(r);
                best.component = c;
                best.r = r;
            }
        }
        best.p_value = pearson_p_value(best.r, std::size_t(u.T.rows()));
        best.rmse = aligned_rmse(truth[s], u.T.col(best.component));
        out.push_back(best);
    }
    return out;
}

inline std::string source_match_csv(const SourceMatch& m) {
    std::ostringstream os;
    os << "source,component,r,p_value,rmse\n";
    for (const auto& e : m)
        os << e.source << ',' << e.component << ',' << format_double(e.r) << ',' << format_double(e.p_value) << ','
           << format_double(e.rmse) << '\n';
    return os.str();
}

}  // namespace fracdim
