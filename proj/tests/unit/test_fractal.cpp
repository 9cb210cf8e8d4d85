#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "fracdim/core/rng.hpp"
#include "fracdim/fractal/estimate.hpp"
#include "fracdim/fractal/export.hpp"
#include "fracdim/fractal/summary.hpp"
#include "fracdim/fractal/tukey.hpp"

using namespace fracdim;

namespace {

Eigen::MatrixXd random_points(Rng& rng, int t, int n) {
    Eigen::MatrixXd p(t, n);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal();
    return p;
}

std::uint64_t brute_pairs(const Eigen::MatrixXd& p, double r) {
    std::uint64_t c = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = i + 1; j < p.rows(); ++j) {
            double d2 = 0.0;
            for (Eigen::Index k = 0; k < p.cols(); ++k) d2 += (p(i, k) - p(j, k)) * (p(i, k) - p(j, k));
            c += d2 <= r * r;
        }
    return c;
}

// Frequencies of occupied cells, grid origin at the bounding-box minimum minus shift * r.
double cell_dictionary(const Eigen::MatrixXd& p, double r, double shift) {
    std::map<std::vector<long long>, double> cells;
    const Eigen::RowVectorXd lo = p.colwise().minCoeff();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        std::vector<long long> key;
        for (Eigen::Index k = 0; k < p.cols(); ++k) key.push_back((long long)std::floor((p(i, k) - lo[k]) / r + shift));
        cells[key] += 1.0;
    }
    double s = 0.0;
    for (const auto& [key, c] : cells) s += (c / double(p.rows())) * (c / double(p.rows()));
    return s;
}

Eigen::MatrixXd embedded_cube(int dim, int t, int embed, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd u(t, dim);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.uniform();
    Eigen::MatrixXd g(embed, embed);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    return u * q.topRows(dim);
}

}  // namespace

TEST(PairCount, MatchesBruteForce) {
    Rng rng(11);
    for (int inst = 0; inst < 50; ++inst) {
        const int t = 2 + int(rng.uniform() * 60), n = 1 + int(rng.uniform() * 12);
        const Eigen::MatrixXd p = random_points(rng, t, n);
        const auto d2 = sorted_squared_distances(p);
        for (int k = 0; k < 10; ++k) {
            const double r = rng.uniform(0.0, 2.0 * std::sqrt(double(n)) + 1.0);
            EXPECT_EQ(pair_count_at(d2, r), brute_pairs(p, r)) << "instance " << inst;
        }
    }
}

TEST(PairCount, CollinearExample) {
    Eigen::MatrixXd p(3, 2);
    p << 0, 0, 1, 0, 2, 0;
    const auto d2 = sorted_squared_distances(p);
    EXPECT_EQ(pair_count_at(d2, 1.0), 2u);
    EXPECT_EQ(pair_count_at(d2, 2.0), 3u);
    EXPECT_EQ(pair_count_at(d2, 0.5), 0u);
}

TEST(PairCount, DropsEmptyRadiiAndLogsCounts) {
    Eigen::MatrixXd p(3, 1);
    p << 0, 1, 3;
    const std::vector<double> r{4.0, 2.5, 1.0, 0.5};
    const LogLogCurve c = pair_count_curve(p, r);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c.dropped_r, std::vector<double>{0.5});
    EXPECT_DOUBLE_EQ(c.y[0], std::log(3.0));
    EXPECT_DOUBLE_EQ(c.y[1], std::log(2.0));
    EXPECT_DOUBLE_EQ(c.y[2], 0.0);
    EXPECT_DOUBLE_EQ(c.x[2], 0.0);
}

TEST(PairCount, IdenticalRowsCountAtEveryRadius) {
    const Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 3, 2.0);
    const std::vector<double> r{1.0, 0.1};
    const LogLogCurve c = pair_count_curve(p, r);
    EXPECT_DOUBLE_EQ(c.y[0], std::log(6.0));
    EXPECT_DOUBLE_EQ(c.y[1], std::log(6.0));
}

TEST(PairCount, ScalingByTwoIsExact) {
    Rng rng(5);
    const Eigen::MatrixXd p = random_points(rng, 40, 6);
    const std::vector<double> r{3.0, 2.0, 1.5, 1.0};
    std::vector<double> r2;
    for (double x : r) r2.push_back(2 * x);
    EXPECT_EQ(pair_count_curve(p, r).y, pair_count_curve(2.0 * p, r2).y);
}

TEST(Radii, RejectsNonDecreasingSchedules) {
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(pair_count_curve(p, std::vector<double>{1.0, 1.0}), InvalidArgument);
    EXPECT_THROW(box_count_curve(p, std::vector<double>{0.5, 1.0}), InvalidArgument);
    EXPECT_THROW(box_count_curve(p, std::vector<double>{1.0, -1.0}), InvalidArgument);
}

TEST(BoxCount, MatchesCellDictionary) {
    Rng rng(12);
    for (int inst = 0; inst < 50; ++inst) {
        const int t = 1 + int(rng.uniform() * 80), n = 1 + int(rng.uniform() * 10);
        Eigen::MatrixXd p = random_points(rng, t, n);
        if (inst % 5 == 0) p = p.array().round();  // ties on cell boundaries
        for (int k = 0; k < 6; ++k) {
            const double r = std::exp(rng.uniform(-3.0, 1.5));
            EXPECT_NEAR(occupancy_sum(p, r), cell_dictionary(p, r, 0.0), 1e-12 * cell_dictionary(p, r, 0.0));
            const double shift = double(k) / 6.0;
            EXPECT_NEAR(occupancy_sum(p, r, shift), cell_dictionary(p, r, shift), 1e-12);
        }
    }
}

TEST(BoxCount, ShiftedCurveAveragesShiftedGrids) {
    Rng rng(13);
    const Eigen::MatrixXd p = random_points(rng, 30, 3);
    const std::vector<double> r{2.0, 1.0, 0.5};
    const LogLogCurve c = box_count_curve(p, r, 4);
    for (std::size_t i = 0; i < r.size(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < 4; ++j) mean += cell_dictionary(p, r[i], j / 4.0) / 4.0;
        EXPECT_NEAR(c.y[i], std::log(mean), 1e-12);
    }
    EXPECT_THROW(box_count_curve(p, r, 0), InvalidArgument);
}

TEST(BoxCount, SingletonsAndOneCell) {
    Eigen::MatrixXd p(4, 1);
    p << 0, 1, 2, 3;
    EXPECT_DOUBLE_EQ(occupancy_sum(p, 0.5), 0.25);  // every point alone
    EXPECT_DOUBLE_EQ(occupancy_sum(p, 10.0), 1.0);  // one cell
}

TEST(BoxCount, ScalingByTwoIsExact) {
    Rng rng(14);
    const Eigen::MatrixXd p = random_points(rng, 50, 4);
    const std::vector<double> r{2.0, 1.0, 0.25}, r2{4.0, 2.0, 0.5};
    EXPECT_EQ(box_count_curve(p, r, 8).y, box_count_curve(2.0 * p, r2, 8).y);
}

TEST(Frame, PrincipalCoordinatesPreserveDistances) {
    const Eigen::MatrixXd p = embedded_cube(3, 60, 9, 3);
    const Eigen::MatrixXd q = principal_coordinates(p);
    EXPECT_EQ(q.cols(), 3);
    for (int i = 0; i < 60; i += 7)
        for (int j = i + 1; j < 60; j += 5)
            EXPECT_NEAR((p.row(i) - p.row(j)).norm(), (q.row(i) - q.row(j)).norm(), 1e-10);
}

TEST(Frame, EstimateIsRotationInvariant) {
    const Eigen::MatrixXd p = embedded_cube(2, 300, 6, 21);
    Rng rng(4);
    Eigen::MatrixXd g(6, 6);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    const Eigen::MatrixXd moved = (p * q).rowwise() + Eigen::RowVectorXd::Constant(6, 3.0);
    for (auto m : {CurveMethod::pair_count, CurveMethod::box_count}) {
        const FdOptions o = FdOptions::for_method(m);
        EXPECT_NEAR(estimate_fd(p, o).fd(), estimate_fd(moved, o).fd(), 1e-6) << to_string(m);
    }
}

TEST(Tukey, RectangularAndHannLimits) {
    for (double w : tukey_window(5, 0.0)) EXPECT_EQ(w, 1.0);
    const auto h = tukey_window(9, 1.0);
    for (int j = 0; j < 9; ++j) EXPECT_NEAR(h[std::size_t(j)], 0.5 * (1 - std::cos(2 * M_PI * j / 8.0)), 1e-15);
    EXPECT_EQ(tukey_window(1, 0.5), std::vector<double>{1.0});
    EXPECT_THROW(tukey_window(5, 1.5), InvalidArgument);
    EXPECT_THROW(tukey_window(0, 0.5), InvalidArgument);
}

TEST(Tukey, IntermediateTaperIsFlatInTheMiddle) {
    const auto w = tukey_window(101, 0.5);
    EXPECT_EQ(w[0], 0.0);
    EXPECT_EQ(w[100], 0.0);
    for (int j = 25; j <= 75; ++j) EXPECT_EQ(w[std::size_t(j)], 1.0);
    EXPECT_NEAR(w[12], 0.5 * (1 + std::cos(M_PI * (2 * 0.12 / 0.5 - 1))), 1e-15);
}

TEST(Tukey, WeightsFollowNormalizedY) {
    const std::vector<double> y{10, 0, 5, 2.5};
    const auto w = tukey_y_weights(y, 1.0);
    EXPECT_EQ(w[0], 0.0);
    EXPECT_EQ(w[1], 0.0);
    EXPECT_NEAR(w[2], 1.0, 1e-15);
    EXPECT_NEAR(w[3], 0.5, 1e-15);
}

TEST(Sigmoid, SlopeAtInflectionEqualsCxCyOverFour) {
    for (int orient : {1, -1}) {
        const SigmoidParams p{0.7, -1.0, 2.3, 5.0, orient};
        const double h = 1e-5;
        const double fdiff = (p(p.x0 + h) - p(p.x0 - h)) / (2 * h);
        EXPECT_NEAR(std::fabs(fdiff), p.cx * p.cy / 4.0, 1e-8);
        EXPECT_NEAR(p.slope(p.x0), orient * p.cx * p.cy / 4.0, 1e-15);
    }
}

TEST(Sigmoid, RecoversExactCurves) {
    struct Case {
        double x0, y0, cx, cy;
        int orient;
    };
    for (const Case c : {Case{0, 0, 4, 4, -1}, Case{1, 2, 2, 6, -1}, Case{-0.5, 3, 1.5, 2, 1}}) {
        const SigmoidParams truth{c.x0, c.y0, c.cx, c.cy, c.orient};
        std::vector<double> x, y;
        for (int i = 0; i < 41; ++i) {
            x.push_back(c.x0 - 4.0 + 0.2 * i);
            y.push_back(truth(x.back()));
        }
        const SigmoidFit f = fit_sigmoid(x, y, 0.75);
        EXPECT_EQ(f.params.orientation, c.orient);
        EXPECT_NEAR(f.fd(), c.cx * c.cy / 4.0, 1e-3);
        EXPECT_NEAR(f.params.x0, c.x0, 1e-3);
        EXPECT_NEAR(f.params.cy, c.cy, 1e-3);
        EXPECT_LT(f.weighted_rmse, 1e-6);
    }
}

TEST(Sigmoid, FitIsDeterministic) {
    std::vector<double> x, y;
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        x.push_back(0.3 * i);
        y.push_back(5.0 / (1 + std::exp(1.7 * (x.back() - 4.0))) + 0.05 * rng.normal());
    }
    const SigmoidFit a = fit_sigmoid(x, y, 0.5), b = fit_sigmoid(x, y, 0.5);
    EXPECT_EQ(a.params.cx, b.params.cx);
    EXPECT_EQ(a.params.cy, b.params.cy);
    EXPECT_NEAR(a.fd(), 1.7 * 5.0 / 4.0, 0.3);
}

TEST(Sigmoid, RejectsBadInput) {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 2, 3, 4};
    EXPECT_THROW(fit_sigmoid(x, y, 0.5), InvalidArgument);  // fewer than 5 points
    const std::vector<double> x5{0, 1, 2, 3, 4}, flat{1, 1, 1, 1, 1};
    EXPECT_THROW(fit_sigmoid(x5, flat, 0.5), Error);
    EXPECT_THROW(fit_sigmoid(x5, std::vector<double>{1, 2, 3, 4, 5}, 1.2), InvalidArgument);
}

TEST(Estimate, LineInTenDimensionsBoxCount) {
    Rng rng(8);
    Eigen::VectorXd dir(10);
    for (Eigen::Index i = 0; i < 10; ++i) dir[i] = rng.normal();
    dir.normalize();
    Eigen::MatrixXd p(500, 10);
    for (int i = 0; i < 500; ++i) p.row(i) = rng.uniform() * dir.transpose();
    EXPECT_NEAR(estimate_fd(p, FdOptions::for_method(CurveMethod::box_count)).fd(), 1.0, 0.15);
}

TEST(Estimate, KnownManifoldsPairCount) {
    for (int dim = 1; dim <= 3; ++dim)
        EXPECT_NEAR(estimate_fd(embedded_cube(dim, 1000, 10, 77 + dim), FdOptions::for_method(CurveMethod::pair_count)).fd(),
                    double(dim), 0.2);
}

// Known gap: with 1000 points the principal-frame box count saturates near 2.5 for a cube.
TEST(Estimate, DISABLED_CubeInTwentyDimensionsBoxCount) {
    EXPECT_NEAR(estimate_fd(embedded_cube(3, 1000, 20, 5), FdOptions::for_method(CurveMethod::box_count)).fd(), 3.0, 0.2);
}

TEST(Estimate, DegenerateInputs) {
    const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(20, 4);
    EXPECT_THROW(estimate_fd(same, FdOptions::for_method(CurveMethod::box_count)), InvalidArgument);
    EXPECT_THROW(estimate_fd(same, FdOptions::for_method(CurveMethod::pair_count)), EmptyResult);
    EXPECT_THROW(estimate_fd(Eigen::MatrixXd::Ones(1, 4), FdOptions{}), InvalidArgument);
    FdOptions few = FdOptions::for_method(CurveMethod::pair_count);
    few.radii.count = 5;
    Rng rng(1);
    EXPECT_THROW(estimate_fd(random_points(rng, 30, 3), few), InvalidArgument);
}

TEST(Summary, ConstantAndOutlierExamples) {
    const std::vector<double> c{5, 5, 5, 5};
    const FdSummary s = fd_summary(c);
    EXPECT_EQ(s.trimmed.mean, 5.0);
    EXPECT_EQ(s.trimmed.stdev, 0.0);
    EXPECT_EQ(s.trimmed.count, 2u);

    const std::vector<double> o{1, 2, 3, 4, 100};
    const FdSummary t = fd_summary(o);
    EXPECT_DOUBLE_EQ(t.trimmed.mean, 3.0);
    EXPECT_DOUBLE_EQ(t.trimmed.stdev, 1.0);
    // With two degrees of freedom the t quantile has the closed form (2p - 1) sqrt(2 / (4 p (1 - p))).
    const double t975 = 0.95 * std::sqrt(2.0 / (4.0 * 0.975 * 0.025));
    EXPECT_NEAR(t.trimmed.conf_halfwidth, t975 / std::sqrt(3.0), 1e-12);
    EXPECT_DOUBLE_EQ(t.untrimmed.mean, 22.0);
    EXPECT_EQ(t.instance_count, 5u);
}

TEST(Summary, NeedsThreeFiniteValues) {
    EXPECT_THROW(fd_summary(std::vector<double>{1, 2}), InvalidArgument);
    EXPECT_THROW(fd_summary(std::vector<double>{1, 2, NAN}), InvalidArgument);
}

TEST(Export, CurveCsvHasOneRowPerRadius) {
    Eigen::MatrixXd p(4, 1);
    p << 0, 1, 3, 7;
    const LogLogCurve c = pair_count_curve(p, std::vector<double>{8, 4, 2, 1});
    const std::string csv = curve_csv(c, 0.5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,x,y,weight");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
