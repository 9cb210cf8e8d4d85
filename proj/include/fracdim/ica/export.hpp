#pragma once

// <stem>.json (metadata), <stem>_T.fdm and <stem>_S.fdm (binary matrices).

#include <filesystem>

#include <json.hpp>

#include "fracdim/core/matrix_io.hpp"
#include "fracdim/ica/fastica.hpp"

namespace fracdim {

inline nlohmann::json to_json(const UnmixingModel& u) {
    return {{"p", u.p},
            {"k", u.k},
            {"order", u.order},
            {"rank1_rmse", u.rank1_rmse},
            {"rmse_curve", u.rmse_curve},
            {"converged", u.converged},
            {"iterations", u.iterations},
            {"restarts", u.restarts},
            {"achieved_tolerance", u.achieved_tolerance},
            {"seed", u.seed},
            {"nonlinearity", to_string(u.nonlinearity)}};
}

inline void export_unmixing(const std::filesystem::path& stem, const UnmixingModel& u) {
    const std::string s = stem.string();
    write_matrix_binary(s + "_T.fdm", u.T, {{"role", "timecourses"}});
    write_matrix_binary(s + "_S.fdm", u.S, {{"role", "maps"}});
    nifti_detail::write_file_atomic(s + ".json", to_json(u).dump(2) + "\n");
}

}  // namespace fracdim
