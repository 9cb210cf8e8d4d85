#pragma once

// Plot-ready curve files: CSV rows (r, x, y, weight) and a JSON fit block.

#include <filesystem>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fracdim/core/matrix_io.hpp"
#include "fracdim/fractal/estimate.hpp"
#include "fracdim/fractal/sigmoid.hpp"

namespace fracdim {

inline std::string curve_csv(const LogLogCurve& c, double q) {
    const auto w = tukey_y_weights(c.y, q);
    std::ostringstream os;
    os << "r,x,y,weight\n";
    for (std::size_t i = 0; i < c.size(); ++i)
        os << format_double(c.r[i]) << ',' << format_double(c.x[i]) << ',' << format_double(c.y[i]) << ','
           << format_double(w[i]) << '\n';
    return os.str();
}

inline nlohmann::json to_json(const SigmoidFit& f) {
    return {{"x0", f.params.x0},
            {"y0", f.params.y0},
            {"cx", f.params.cx},
            {"cy", f.params.cy},
            {"orientation", f.params.orientation},
            {"q", f.q},
            {"fd", f.fd()},
            {"weighted_rmse", f.weighted_rmse},
            {"iterations", f.iterations}};
}

inline nlohmann::json to_json(const FdEstimate& e) {
    return {{"method", to_string(e.curve.method)},
            {"fit", to_json(e.fit)},
            {"points", e.curve.size()},
            {"dropped_r", e.curve.dropped_r}};
}

/// Writes <stem>.csv and <stem>.json.
inline void export_curve(const std::filesystem::path& stem, const FdEstimate& e) {
    nifti_detail::write_file_atomic(std::filesystem::path(stem.string() + ".csv"), curve_csv(e.curve, e.fit.q));
    nifti_detail::write_file_atomic(std::filesystem::path(stem.string() + ".json"), to_json(e).dump(2) + "\n");
}

}  // namespace fracdim
