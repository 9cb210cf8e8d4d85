#pragma once

// Simulated fMRI slice: eight spatial maps (60x60) with 100-point time courses,
// mixed linearly. Sources follow fixed Gaussianity classes and roles:
//
//   id  gaussianity  role                       map                  time course
//   S1  super        task-related               two small blobs      block design (*) HRF
//   S2  super        transiently task-related   one blob             block onsets, first half (*) HRF
//   S3  sub          artifact (scanner drift)   linear ramp          saturating monotone drift
//   S4  gaussian     artifact (background)      i.i.d. normal field  white noise
//   S5  super        artifact (respiration)     one blob             sinusoid + noise
//   S6  super        transiently task-related   one blob             habituating block offsets (*) HRF
//   S7  sub          artifact (cardiac)         sinusoidal grating   sinusoid + noise
//   S8  super        artifact (background)      sparse speckle       white noise

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fracdim/core/matrix_io.hpp"
#include "fracdim/core/rng.hpp"
#include "fracdim/datamodel/preprocess.hpp"

namespace fracdim {

enum class Gaussianity { super, gaussian, sub };
enum class SourceRole { task_related, transiently_task_related, artifact };

inline const char* to_string(Gaussianity g) {
    switch (g) {
        case Gaussianity::super: return "super";
        case Gaussianity::gaussian: return "gaussian";
        case Gaussianity::sub: return "sub";
    }
    return "?";
}

inline const char* to_string(SourceRole r) {
    switch (r) {
        case SourceRole::task_related: return "task-related";
        case SourceRole::transiently_task_related: return "transiently-task-related";
        case SourceRole::artifact: return "artifact";
    }
    return "?";
}

struct SourceSpec {
    int id;
    Gaussianity gaussianity;
    SourceRole role;
    const char* description;
};

inline constexpr int kMapSide = 60;
inline constexpr int kTimecourseLength = 100;
inline constexpr int kSourceCount = 8;

inline constexpr std::array<SourceSpec, kSourceCount> kSourceSpecs{{
    {1, Gaussianity::super, SourceRole::task_related, "block stimulus"},
    {2, Gaussianity::super, SourceRole::transiently_task_related, "onset transient"},
    {3, Gaussianity::sub, SourceRole::artifact, "scanner drift"},
    {4, Gaussianity::gaussian, SourceRole::artifact, "background noise"},
    {5, Gaussianity::super, SourceRole::artifact, "respiration"},
    {6, Gaussianity::super, SourceRole::transiently_task_related, "offset transient"},
    {7, Gaussianity::sub, SourceRole::artifact, "cardiac pulsation"},
    {8, Gaussianity::super, SourceRole::artifact, "broadband noise"},
}};

/// Waveform and map constants. Everything that shapes the dataset lives here.
struct SynthConstants {
    double tr_s = 2.0;
    int block_period = 20;      // samples; half on, half off, starting off
    double hrf_peak_s = 6.0;
    double hrf_undershoot_s = 16.0;
    double hrf_ratio = 1.0 / 6.0;
    double hrf_length_s = 32.0;
    double drift_tau = 60.0;     // samples
    double resp_cycles_per_sample = 0.11;
    double cardiac_cycles_per_sample = 0.37;
    double physio_noise = 0.3;   // noise std relative to unit sinusoid
    double blob_jitter_px = 3.0;
    double grating_period_px = 15.0;
    double speckle_density = 0.05;
    // Spatial layout is a fixed property of the phantom; realizations (seeds)
    // differ only in their time-course noise and phases.
    std::uint64_t map_seed = 20140601;
    // RMS of each source's rank-1 contribution to the mixture. Time courses are
    // centered and scaled to amplitude * sqrt(pixels) / ||map||, so sources with
    // compact maps are not drowned by diffuse ones. Scanner drift dominates.
    std::array<double, kSourceCount> amplitude{1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0};

    nlohmann::json to_json() const {
        return {{"tr_s", tr_s},
                {"block_period", block_period},
                {"hrf_peak_s", hrf_peak_s},
                {"hrf_undershoot_s", hrf_undershoot_s},
                {"hrf_ratio", hrf_ratio},
                {"hrf_length_s", hrf_length_s},
                {"drift_tau", drift_tau},
                {"resp_cycles_per_sample", resp_cycles_per_sample},
                {"cardiac_cycles_per_sample", cardiac_cycles_per_sample},
                {"physio_noise", physio_noise},
                {"blob_jitter_px", blob_jitter_px},
                {"grating_period_px", grating_period_px},
                {"speckle_density", speckle_density},
                {"map_seed", map_seed},
                {"amplitude", amplitude},
                {"rng", kRngAlgorithm}};
    }
};

struct SourceSet {
    std::vector<Eigen::MatrixXd> maps;         // kMapSide x kMapSide, row = y, col = x
    std::vector<Eigen::VectorXd> timecourses;  // kTimecourseLength each
    std::uint64_t seed = 0;
    SynthConstants constants;
};

/// Canonical double-gamma HRF sampled every tr_s seconds, unit peak.
inline Eigen::VectorXd canonical_hrf(const SynthConstants& c) {
    const int len = int(std::floor(c.hrf_length_s / c.tr_s)) + 1;
    // Gamma densities with unit scale whose modes sit at the requested times.
    const double a1 = c.hrf_peak_s + 1.0, a2 = c.hrf_undershoot_s + 1.0;
    auto gamma_pdf = [](double t, double shape) {
        return t <= 0 ? 0.0 : std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
    };
    Eigen::VectorXd h(len);
    for (int i = 0; i < len; ++i) {
        const double t = i * c.tr_s;
        h[i] = gamma_pdf(t, a1) - c.hrf_ratio * gamma_pdf(t, a2);
    }
    return h / h.maxCoeff();
}

namespace synth_detail {

inline Eigen::VectorXd convolve_causal(const Eigen::VectorXd& signal, const Eigen::VectorXd& kernel) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(signal.size());
    for (Eigen::Index i = 0; i < signal.size(); ++i)
        for (Eigen::Index k = 0; k < kernel.size() && k <= i; ++k) out[i] += kernel[k] * signal[i - k];
    return out;
}

inline Eigen::MatrixXd blobs(std::initializer_list<std::array<double, 3>> centers) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(kMapSide, kMapSide);
    for (const auto& [cx, cy, s] : centers)
        for (int y = 0; y < kMapSide; ++y)
            for (int x = 0; x < kMapSide; ++x)
                m(y, x) += std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * s * s));
    return m;
}

inline Eigen::VectorXd standardize(Eigen::VectorXd v, double amplitude) {
    v.array() -= v.mean();
    const double sd = std::sqrt(v.squaredNorm() / double(v.size()));
    return sd > 0 ? Eigen::VectorXd(v * (amplitude / sd)) : v;
}

}  // namespace synth_detail

inline SourceSet generate_sources(std::uint64_t seed, const SynthConstants& c = {}) {
    using namespace synth_detail;
    Rng map_rng = Rng(c.map_seed).fork(1);
    Rng tc_rng = Rng(seed).fork(2);
    const int T = kTimecourseLength;
    auto jitter = [&] { return map_rng.uniform(-c.blob_jitter_px, c.blob_jitter_px); };

    SourceSet s;
    s.seed = seed;
    s.constants = c;

    // Spatial maps.
    s.maps.push_back(blobs({{{18 + jitter(), 20 + jitter(), 3.0}}, {{40 + jitter(), 38 + jitter(), 3.0}}}));
    s.maps.push_back(blobs({{{15 + jitter(), 45 + jitter(), 4.0}}}));
    {
        Eigen::MatrixXd ramp(kMapSide, kMapSide);
        const double angle = map_rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int y = 0; y < kMapSide; ++y)
            for (int x = 0; x < kMapSide; ++x)
                ramp(y, x) = std::cos(angle) * (x - 29.5) + std::sin(angle) * (y - 29.5);
        s.maps.push_back(ramp);
    }
    {
        Eigen::MatrixXd g(kMapSide, kMapSide);
        for (int y = 0; y < kMapSide; ++y)
            for (int x = 0; x < kMapSide; ++x) g(y, x) = map_rng.normal();
        s.maps.push_back(g);
    }
    s.maps.push_back(blobs({{{45 + jitter(), 15 + jitter(), 5.0}}}));
    s.maps.push_back(blobs({{{30 + jitter(), 30 + jitter(), 4.0}}}));
    {
        Eigen::MatrixXd grating(kMapSide, kMapSide);
        const double phase = map_rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int y = 0; y < kMapSide; ++y)
            for (int x = 0; x < kMapSide; ++x)
                grating(y, x) = std::sin(2.0 * std::numbers::pi * y / c.grating_period_px + phase);
        s.maps.push_back(grating);
    }
    {
        Eigen::MatrixXd speckle = Eigen::MatrixXd::Zero(kMapSide, kMapSide);
        for (int y = 0; y < kMapSide; ++y)
            for (int x = 0; x < kMapSide; ++x)
                if (map_rng.uniform() < c.speckle_density) speckle(y, x) = map_rng.normal();
        s.maps.push_back(speckle);
    }
    for (auto& m : s.maps) m /= m.cwiseAbs().maxCoeff();

    // Time courses.
    const Eigen::VectorXd hrf = canonical_hrf(c);
    const int half = c.block_period / 2;
    Eigen::VectorXd block(T), onsets = Eigen::VectorXd::Zero(T), offsets = Eigen::VectorXd::Zero(T);
    for (int t = 0; t < T; ++t) {
        block[t] = (t / half) % 2 == 1 ? 1.0 : 0.0;
        if (t % c.block_period == half) onsets[t] = 1.0;
        if (t % c.block_period == 0 && t > 0) offsets[t] = 1.0;
    }
    Eigen::VectorXd first_half = onsets;
    for (int t = T / 2; t < T; ++t) first_half[t] = 0.0;
    Eigen::VectorXd habituating = offsets;
    for (int t = 0; t < T; ++t) habituating[t] *= std::exp(-double(t) / T);

    const double resp_phase = tc_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double card_phase = tc_rng.uniform(0.0, 2.0 * std::numbers::pi);
    Eigen::VectorXd drift(T), noise4(T), resp(T), card(T), noise8(T);
    for (int t = 0; t < T; ++t) drift[t] = 1.0 - std::exp(-t / c.drift_tau);
    for (int t = 0; t < T; ++t) noise4[t] = tc_rng.normal();
    for (int t = 0; t < T; ++t)
        resp[t] = std::sin(2.0 * std::numbers::pi * c.resp_cycles_per_sample * t + resp_phase) + c.physio_noise * tc_rng.normal();
    for (int t = 0; t < T; ++t)
        card[t] = std::sin(2.0 * std::numbers::pi * c.cardiac_cycles_per_sample * t + card_phase) + c.physio_noise * tc_rng.normal();
    for (int t = 0; t < T; ++t) noise8[t] = tc_rng.normal();

    const Eigen::VectorXd raw[kSourceCount] = {convolve_causal(block, hrf), convolve_causal(first_half, hrf), drift, noise4,
                                               resp, convolve_causal(habituating, hrf), card, noise8};
    for (int k = 0; k < kSourceCount; ++k) {
        const double norm = s.maps[std::size_t(k)].norm();
        s.timecourses.push_back(standardize(raw[k], c.amplitude[std::size_t(k)] * double(kMapSide) / norm));
    }
    return s;
}

/// Linear mixture of all sources plus white noise of std noise_level * RMS(noiseless mixture).
inline DataMatrix mix(const SourceSet& s, double noise_level, std::uint64_t seed) {
    if (!(noise_level >= 0)) throw InvalidArgument("mix: noise_level must be >= 0");
    DataMatrix m = linearize_slice(s.maps, s.timecourses);
    if (noise_level > 0) {
        const double rms = std::sqrt(m.values.squaredNorm() / double(m.values.size()));
        Rng rng(seed);
        for (Eigen::Index r = 0; r < m.values.rows(); ++r)
            for (Eigen::Index c = 0; c < m.values.cols(); ++c) m.values(r, c) += noise_level * rms * rng.normal();
    }
    return m;
}

/// Excess kurtosis (population moments).
inline double excess_kurtosis(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double mean = v.mean();
    const Eigen::ArrayXd d = v.array() - mean;
    const double m2 = d.square().mean(), m4 = d.square().square().mean();
    return m4 / (m2 * m2) - 3.0;
}

inline Eigen::VectorXd flatten_map(const Eigen::MatrixXd& map) {
    const Eigen::MatrixXd tr = map.transpose();
    return Eigen::Map<const Eigen::VectorXd>(tr.data(), tr.size());
}

inline nlohmann::json sources_to_json(const SourceSet& s) {
    nlohmann::json j;
    j["seed"] = s.seed;
    j["map_dims"] = {kMapSide, kMapSide};
    j["timecourse_len"] = kTimecourseLength;
    j["constants"] = s.constants.to_json();
    j["sources"] = nlohmann::json::array();
    for (int k = 0; k < int(s.timecourses.size()); ++k) {
        const auto& spec = kSourceSpecs[std::size_t(k)];
        std::vector<double> tc(s.timecourses[std::size_t(k)].data(),
                               s.timecourses[std::size_t(k)].data() + s.timecourses[std::size_t(k)].size());
        j["sources"].push_back({{"id", spec.id},
                                {"gaussianity", to_string(spec.gaussianity)},
                                {"role", to_string(spec.role)},
                                {"description", spec.description},
                                {"timecourse", tc}});
    }
    return j;
}

/// Ground truth export: `<stem>.json` (specs + time courses) and `<stem>_maps.fdm`
/// (8 x 3600 matrix, maps flattened row-major).
inline void export_sources(const std::filesystem::path& stem, const SourceSet& s) {
    auto json_path = stem;
    json_path += ".json";
    auto maps_path = stem;
    maps_path += "_maps.fdm";
    nifti_detail::write_file_atomic(json_path, sources_to_json(s).dump(2) + "\n");
    Eigen::MatrixXd maps(Eigen::Index(s.maps.size()), kMapSide * kMapSide);
    for (std::size_t k = 0; k < s.maps.size(); ++k) maps.row(Eigen::Index(k)) = flatten_map(s.maps[k]).transpose();
    write_matrix_binary(maps_path, maps, {{"map_dims", {kMapSide, kMapSide}}, {"content", "source maps"}});
}

/// Time courses only (enough for source matching).
inline std::vector<Eigen::VectorXd> load_truth_timecourses(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open '" + json_path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad sources JSON: ") + e.what());
    }
    std::vector<Eigen::VectorXd> out;
    for (const auto& src : j.at("sources")) {
        const auto v = src.at("timecourse").get<std::vector<double>>();
        out.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size())));
    }
    return out;
}

}  // namespace fracdim
