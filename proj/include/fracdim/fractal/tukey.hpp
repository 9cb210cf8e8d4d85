#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fracdim/core/error.hpp"

namespace fracdim {

inline void check_tukey_q(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("Tukey parameter q must lie in [0, 1]");
}

/// Continuous tapered-cosine taper at relative position u in [0, 1]: flat over
/// the middle (1 - q), cosine roll-off over q/2 at each end.
inline double tukey_weight(double u, double q) {
    check_tukey_q(q);
    u = std::clamp(u, 0.0, 1.0);
    const double edge = std::min(u, 1.0 - u);
    if (q == 0.0 || edge >= q / 2.0) return 1.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (2.0 * edge / q - 1.0)));
}

/// Discrete symmetric Tukey window of length n; q = 0 is rectangular, q = 1 is Hann.
inline std::vector<double> tukey_window(int n, double q) {
    check_tukey_q(q);
    if (n < 1) throw InvalidArgument("tukey_window: length must be >= 1");
    std::vector<double> w(std::size_t(n), 1.0);
    if (n == 1) return w;
    for (int j = 0; j < n; ++j) {
        const int m = std::min(j, n - 1 - j);  // exact symmetry
        w[std::size_t(j)] = tukey_weight(double(m) / double(n - 1), q);
    }
    return w;
}

}  // namespace fracdim
