#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "fracdim/core/error.hpp"

namespace fracdim {

struct SampleStats {
    double mean = 0.0;
    double stdev = 0.0;            // sample (n - 1) standard deviation
    double conf_halfwidth = 0.0;   // two-sided 95% t interval for the mean
    std::size_t count = 0;
};

struct FdSummary {
    SampleStats trimmed;    // without one minimum and one maximum
    SampleStats untrimmed;
    std::size_t instance_count = 0;
};

inline SampleStats sample_stats(std::span<const double> v, double alpha = 0.05) {
    SampleStats s;
    s.count = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    if (v.size() < 2) return s;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(ss / double(v.size() - 1));
    boost::math::students_t dist(double(v.size() - 1));
    s.conf_halfwidth = boost::math::quantile(boost::math::complement(dist, alpha / 2.0)) * s.stdev / std::sqrt(double(v.size()));
    return s;
}

inline FdSummary fd_summary(std::span<const double> fds) {
    if (fds.size() < 3) throw InvalidArgument("fd_summary: need at least 3 values");
    for (double f : fds)
        if (!std::isfinite(f)) throw InvalidArgument("fd_summary: non-finite value");
    FdSummary out;
    out.instance_count = fds.size();
    out.untrimmed = sample_stats(fds);
    std::vector<double> sorted(fds.begin(), fds.end());
    std::sort(sorted.begin(), sorted.end());
    out.trimmed = sample_stats(std::span<const double>(sorted).subspan(1, sorted.size() - 2));
    return out;
}

inline nlohmann::json to_json(const SampleStats& s) {
    return {{"mean", s.mean}, {"stdev", s.stdev}, {"conf_halfwidth", s.conf_halfwidth}, {"count", s.count}};
}

inline nlohmann::json to_json(const FdSummary& s) {
    return {{"instance_count", s.instance_count}, {"trimmed", to_json(s.trimmed)}, {"untrimmed", to_json(s.untrimmed)}};
}

}  // namespace fracdim
