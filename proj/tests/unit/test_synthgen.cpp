#include <gtest/gtest.h>

#include "fracdim/synthgen/sources.hpp"

using namespace fracdim;

TEST(Synth, MixtureShape) {
    const DataMatrix m = mix(generate_sources(1), 0.0, 1001);
    EXPECT_EQ(m.t(), 100);
    EXPECT_EQ(m.n(), 3600);
    EXPECT_EQ(m.voxel_index.back(), (Index3{59, 59, 0}));
}

TEST(Synth, SameSeedSameBytes) {
    const DataMatrix a = mix(generate_sources(7), 0.3, 11), b = mix(generate_sources(7), 0.3, 11);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(mix(generate_sources(8), 0.3, 11).values, a.values);
}

TEST(Synth, SeedChangesTimeCoursesNotMaps) {
    const SourceSet a = generate_sources(1), b = generate_sources(2);
    for (int k = 0; k < kSourceCount; ++k) EXPECT_EQ(a.maps[std::size_t(k)], b.maps[std::size_t(k)]);
    EXPECT_NE(a.timecourses[3], b.timecourses[3]);
}

TEST(Synth, MapKurtosisMatchesDeclaredGaussianity) {
    const SourceSet s = generate_sources(1);
    for (int k = 0; k < kSourceCount; ++k) {
        const double kurt = excess_kurtosis(flatten_map(s.maps[std::size_t(k)]));
        switch (kSourceSpecs[std::size_t(k)].gaussianity) {
            case Gaussianity::super: EXPECT_GT(kurt, 1.0) << "source " << k + 1; break;
            case Gaussianity::sub: EXPECT_LT(kurt, -0.5) << "source " << k + 1; break;
            case Gaussianity::gaussian: EXPECT_LT(std::fabs(kurt), 0.3) << "source " << k + 1; break;
        }
    }
}

TEST(Synth, NoiselessMixtureHasRankEight) {
    const DataMatrix m = mix(generate_sources(3), 0.0, 0);
    const Eigen::MatrixXd c = m.values.colwise() - m.values.rowwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(c);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > 1e-8 * sv[0];
    EXPECT_EQ(rank, 8);
}

TEST(Synth, NoiseMakesMixtureFullRank) {
    const DataMatrix m = mix(generate_sources(3), 0.1, 5);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.values);
    EXPECT_GT(svd.singularValues().minCoeff(), 1e-6 * svd.singularValues()[0]);
}

TEST(Synth, SingleSourceIsRankOne) {
    SourceSet s = generate_sources(4);
    for (int k = 1; k < kSourceCount; ++k) s.timecourses[std::size_t(k)].setZero();
    const DataMatrix m = mix(s, 0.0, 0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.values);
    EXPECT_LT(svd.singularValues()[1], 1e-12 * svd.singularValues()[0]);
}

TEST(Synth, TermRmsEqualsAmplitude) {
    const SourceSet s = generate_sources(5);
    for (int k = 0; k < kSourceCount; ++k) {
        const Eigen::MatrixXd term = s.timecourses[std::size_t(k)] * flatten_map(s.maps[std::size_t(k)]).transpose();
        const double rms = std::sqrt(term.squaredNorm() / double(term.size()));
        EXPECT_NEAR(rms, s.constants.amplitude[std::size_t(k)], 1e-12);
    }
}

TEST(Synth, NoiseLevelScalesWithMixtureRms) {
    const SourceSet s = generate_sources(6);
    const DataMatrix clean = mix(s, 0.0, 0), noisy = mix(s, 0.5, 9);
    const double rms = std::sqrt(clean.values.squaredNorm() / double(clean.values.size()));
    const Eigen::MatrixXd e = noisy.values - clean.values;
    EXPECT_NEAR(std::sqrt(e.squaredNorm() / double(e.size())), 0.5 * rms, 0.02 * rms);
    EXPECT_THROW(mix(s, -0.1, 0), InvalidArgument);
}

TEST(Synth, HrfPeaksAtSixSeconds) {
    const SynthConstants c;
    const Eigen::VectorXd h = canonical_hrf(c);
    Eigen::Index peak;
    EXPECT_DOUBLE_EQ(h.maxCoeff(&peak), 1.0);
    EXPECT_DOUBLE_EQ(double(peak) * c.tr_s, 6.0);
    EXPECT_LT(h.minCoeff(), 0.0);  // undershoot
}

TEST(Synth, TaskSourceFollowsBlocks) {
    const SourceSet s = generate_sources(1);
    const Eigen::VectorXd& tc = s.timecourses[0];
    // Late "on" samples sit above late "off" samples.
    double on = 0.0, off = 0.0;
    for (int b = 0; b < 5; ++b) {
        on += tc[20 * b + 18];
        off += tc[20 * b + 8];
    }
    EXPECT_GT(on, off);
}

TEST(Synth, SourcesJsonRoundTripsTimeCourses) {
    const SourceSet s = generate_sources(2);
    const auto dir = std::filesystem::temp_directory_path() / "fracdim-test-synth";
    std::filesystem::create_directories(dir);
    export_sources(dir / "s2", s);
    const auto back = load_truth_timecourses(dir / "s2.json");
    ASSERT_EQ(back.size(), std::size_t(kSourceCount));
    for (int k = 0; k < kSourceCount; ++k) EXPECT_EQ(back[std::size_t(k)], s.timecourses[std::size_t(k)]);
}
