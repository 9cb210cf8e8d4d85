#pragma once

// Versioned run configuration (schema_version 1). Unknown keys are rejected so
// typos fail loudly instead of silently falling back to defaults.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "fracdim/core/error.hpp"
#include "fracdim/fractal/estimate.hpp"
#include "fracdim/ica/fastica.hpp"

namespace fracdim::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Thrown for anything wrong with the configuration itself (exit code 2).
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct SynthConfig {
    std::vector<std::uint64_t> seeds;  // empty: stage disabled
    double noise_level = 0.0;
    std::uint64_t noise_seed_offset = 1000;  // mix noise stream = seed + offset
    std::array<double, 3> spacing_mm{3.0, 3.0, 4.0};
};

struct IngestConfig {
    std::vector<std::string> inputs;  // empty: stage disabled
    std::string format = "nifti1";
    std::optional<std::string> mask;
    double threshold = 0.0;
    int decimate = 1;
};

struct SmoothConfig {
    std::vector<double> fwhm_mm{0.0};
};

struct FdConfig {
    CurveMethod method = CurveMethod::box_count;
    double q = 0.75;
    std::optional<RadiusPolicy> radii;  // default depends on the method
    std::optional<PointFrame> frame;
    std::optional<int> grid_shifts;

    FdOptions options() const {
        FdOptions o = FdOptions::for_method(method);
        o.q = q;
        if (radii) o.radii = *radii;
        if (frame) o.frame = *frame;
        if (grid_shifts) o.grid_shifts = *grid_shifts;
        return o;
    }
};

struct IcaConfig {
    std::vector<std::optional<int>> p{std::nullopt};  // nullopt = "auto"
    Nonlinearity nonlinearity = Nonlinearity::tanh;
    std::uint64_t seed = 1;
    double tolerance = 1e-6;
    int max_iterations = 1000;
    int max_restarts = 5;

    FastIcaOptions options() const { return {nonlinearity, tolerance, max_iterations, max_restarts}; }
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    std::string output_root = "runs";
    SynthConfig synth;
    IngestConfig ingest;
    SmoothConfig smooth;
    FdConfig fd;
    IcaConfig ica;
};

namespace config_detail {

inline std::string kind_name(RadiusPolicy::Kind k) {
    switch (k) {
        case RadiusPolicy::Kind::distance_percentiles: return "distance-percentiles";
        case RadiusPolicy::Kind::diagonal_octaves: return "diagonal-octaves";
        case RadiusPolicy::Kind::occupancy_bracket: return "occupancy-bracket";
        case RadiusPolicy::Kind::explicit_list: return "explicit";
    }
    return "?";
}

inline RadiusPolicy::Kind parse_kind(const std::string& s) {
    for (auto k : {RadiusPolicy::Kind::distance_percentiles, RadiusPolicy::Kind::diagonal_octaves,
                   RadiusPolicy::Kind::occupancy_bracket, RadiusPolicy::Kind::explicit_list})
        if (kind_name(k) == s) return k;
    throw ConfigError("unknown radius schedule '" + s + "'");
}

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const nlohmann::json& j, const char* key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

}  // namespace config_detail

inline nlohmann::json to_json(const RadiusPolicy& r) {
    nlohmann::json j{{"kind", config_detail::kind_name(r.kind)}, {"count", r.count}};
    switch (r.kind) {
        case RadiusPolicy::Kind::distance_percentiles:
            j["lo_percentile"] = r.lo_percentile;
            j["hi_percentile"] = r.hi_percentile;
            break;
        case RadiusPolicy::Kind::diagonal_octaves:
            j["hi_octave"] = r.hi_octave;
            j["lo_octave"] = r.lo_octave;
            break;
        case RadiusPolicy::Kind::occupancy_bracket: j["margin_octaves"] = r.margin_octaves; break;
        case RadiusPolicy::Kind::explicit_list:
            j.erase("count");
            j["radii"] = r.radii;
            break;
    }
    return j;
}

/// Fully resolved form: every default is spelled out, so the hash pins the run.
inline nlohmann::json to_json(const RunConfig& c) {
    const FdOptions fo = c.fd.options();
    nlohmann::json p = nlohmann::json::array();
    for (const auto& v : c.ica.p) p.push_back(v ? nlohmann::json(*v) : nlohmann::json("auto"));
    return {{"schema_version", c.schema_version},
            {"output_root", c.output_root},
            {"synth",
             {{"seeds", c.synth.seeds},
              {"noise_level", c.synth.noise_level},
              {"noise_seed_offset", c.synth.noise_seed_offset},
              {"spacing_mm", c.synth.spacing_mm}}},
            {"ingest",
             {{"inputs", c.ingest.inputs},
              {"format", c.ingest.format},
              {"mask", c.ingest.mask ? nlohmann::json(*c.ingest.mask) : nlohmann::json(nullptr)},
              {"threshold", c.ingest.threshold},
              {"decimate", c.ingest.decimate}}},
            {"smooth", {{"fwhm_mm", c.smooth.fwhm_mm}}},
            {"fd",
             {{"method", to_string(fo.method)},
              {"q", fo.q},
              {"radii", to_json(fo.radii)},
              {"frame", to_string(fo.frame)},
              {"grid_shifts", fo.grid_shifts}}},
            {"ica",
             {{"p", p},
              {"nonlinearity", to_string(c.ica.nonlinearity)},
              {"seed", c.ica.seed},
              {"tolerance", c.ica.tolerance},
              {"max_iterations", c.ica.max_iterations},
              {"max_restarts", c.ica.max_restarts}}}};
}

inline RadiusPolicy parse_radius_policy(const nlohmann::json& j, CurveMethod method) {
    using namespace config_detail;
    const std::string w = "fd.radii";
    check_keys(j, w, {"kind", "count", "lo_percentile", "hi_percentile", "hi_octave", "lo_octave", "margin_octaves", "radii"});
    RadiusPolicy r = RadiusPolicy::default_for(method);
    if (j.contains("kind")) r.kind = parse_kind(get<std::string>(j, "kind", w, ""));
    r.count = get(j, "count", w, r.count);
    r.lo_percentile = get(j, "lo_percentile", w, r.lo_percentile);
    r.hi_percentile = get(j, "hi_percentile", w, r.hi_percentile);
    r.hi_octave = get(j, "hi_octave", w, r.hi_octave);
    r.lo_octave = get(j, "lo_octave", w, r.lo_octave);
    r.margin_octaves = get(j, "margin_octaves", w, r.margin_octaves);
    r.radii = get(j, "radii", w, r.radii);
    if (r.kind != RadiusPolicy::Kind::explicit_list && r.count < 8) throw ConfigError("fd.radii.count must be >= 8");
    if (r.kind == RadiusPolicy::Kind::explicit_list && r.radii.size() < 8)
        throw ConfigError("fd.radii.radii must list at least 8 radii");
    if (!(r.lo_percentile > 0 && r.lo_percentile < r.hi_percentile && r.hi_percentile <= 1))
        throw ConfigError("fd.radii: need 0 < lo_percentile < hi_percentile <= 1");
    if (!(r.hi_octave < r.lo_octave)) throw ConfigError("fd.radii: need hi_octave < lo_octave");
    if (!(r.margin_octaves >= 0)) throw ConfigError("fd.radii.margin_octaves must be >= 0");
    return r;
}

inline RunConfig parse_config(const nlohmann::json& j) {
    using namespace config_detail;
    check_keys(j, "config", {"schema_version", "output_root", "synth", "ingest", "smooth", "fd", "ica"});
    RunConfig c;
    if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
    c.schema_version = get(j, "schema_version", "config", 0);
    if (c.schema_version != kSchemaVersion)
        throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                          std::to_string(kSchemaVersion) + ")");
    c.output_root = get(j, "output_root", "config", c.output_root);

    if (j.contains("synth")) {
        const auto& s = j["synth"];
        check_keys(s, "synth", {"seeds", "noise_level", "noise_seed_offset", "spacing_mm"});
        c.synth.seeds = get(s, "seeds", "synth", c.synth.seeds);
        c.synth.noise_level = get(s, "noise_level", "synth", c.synth.noise_level);
        c.synth.noise_seed_offset = get(s, "noise_seed_offset", "synth", c.synth.noise_seed_offset);
        c.synth.spacing_mm = get(s, "spacing_mm", "synth", c.synth.spacing_mm);
    }
    if (j.contains("ingest")) {
        const auto& s = j["ingest"];
        check_keys(s, "ingest", {"inputs", "format", "mask", "threshold", "decimate"});
        c.ingest.inputs = get(s, "inputs", "ingest", c.ingest.inputs);
        c.ingest.format = get(s, "format", "ingest", c.ingest.format);
        if (s.contains("mask") && !s["mask"].is_null()) c.ingest.mask = get<std::string>(s, "mask", "ingest", "");
        c.ingest.threshold = get(s, "threshold", "ingest", c.ingest.threshold);
        c.ingest.decimate = get(s, "decimate", "ingest", c.ingest.decimate);
    }
    if (j.contains("smooth")) {
        check_keys(j["smooth"], "smooth", {"fwhm_mm"});
        c.smooth.fwhm_mm = get(j["smooth"], "fwhm_mm", "smooth", c.smooth.fwhm_mm);
    }
    if (j.contains("fd")) {
        const auto& s = j["fd"];
        check_keys(s, "fd", {"method", "q", "radii", "frame", "grid_shifts"});
        try {
            if (s.contains("method")) c.fd.method = parse_curve_method(get<std::string>(s, "method", "fd", ""));
            if (s.contains("frame")) c.fd.frame = parse_point_frame(get<std::string>(s, "frame", "fd", ""));
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("fd: ") + e.what());
        }
        c.fd.q = get(s, "q", "fd", c.fd.q);
        if (s.contains("radii")) c.fd.radii = parse_radius_policy(s["radii"], c.fd.method);
        if (s.contains("grid_shifts")) c.fd.grid_shifts = get(s, "grid_shifts", "fd", 1);
    }
    if (j.contains("ica")) {
        const auto& s = j["ica"];
        check_keys(s, "ica", {"p", "nonlinearity", "seed", "tolerance", "max_iterations", "max_restarts"});
        if (s.contains("p")) {
            c.ica.p.clear();
            const auto& pj = s["p"];
            const auto items = pj.is_array() ? pj : nlohmann::json::array({pj});
            for (const auto& v : items) {
                if (v.is_string() && v.get<std::string>() == "auto") c.ica.p.push_back(std::nullopt);
                else if (v.is_number_integer()) c.ica.p.push_back(v.get<int>());
                else throw ConfigError("ica.p: entries must be positive integers or \"auto\"");
            }
        }
        try {
            if (s.contains("nonlinearity")) c.ica.nonlinearity = parse_nonlinearity(get<std::string>(s, "nonlinearity", "ica", ""));
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("ica: ") + e.what());
        }
        c.ica.seed = get(s, "seed", "ica", c.ica.seed);
        c.ica.tolerance = get(s, "tolerance", "ica", c.ica.tolerance);
        c.ica.max_iterations = get(s, "max_iterations", "ica", c.ica.max_iterations);
        c.ica.max_restarts = get(s, "max_restarts", "ica", c.ica.max_restarts);
    }
    return c;
}

/// Checks value ranges; parse_config only checks shape and types.
inline void validate(const RunConfig& c) {
    if (c.output_root.empty()) throw ConfigError("output_root must not be empty");
    if (!(c.synth.noise_level >= 0)) throw ConfigError("synth.noise_level must be >= 0");
    for (double s : c.synth.spacing_mm)
        if (!(s > 0)) throw ConfigError("synth.spacing_mm entries must be > 0");
    if (c.ingest.format != "nifti1" && c.ingest.format != "raw-f32-4d")
        throw ConfigError("ingest.format must be nifti1 or raw-f32-4d");
    if (!(c.ingest.threshold >= 0 && c.ingest.threshold <= 1)) throw ConfigError("ingest.threshold must be in [0, 1]");
    if (c.ingest.decimate < 1) throw ConfigError("ingest.decimate must be >= 1");
    if (c.smooth.fwhm_mm.empty()) throw ConfigError("smooth.fwhm_mm must list at least one level (0 = none)");
    for (double f : c.smooth.fwhm_mm)
        if (!(f >= 0)) throw ConfigError("smooth.fwhm_mm entries must be >= 0");
    if (!(c.fd.q >= 0 && c.fd.q <= 1)) throw ConfigError("fd.q must be in [0, 1]");
    if (c.fd.grid_shifts && *c.fd.grid_shifts < 1) throw ConfigError("fd.grid_shifts must be >= 1");
    if (c.ica.p.empty()) throw ConfigError("ica.p must list at least one value");
    for (const auto& p : c.ica.p)
        if (p && *p < 1) throw ConfigError("ica.p entries must be >= 1");
    if (!(c.ica.tolerance > 0)) throw ConfigError("ica.tolerance must be > 0");
    if (c.ica.max_iterations < 1) throw ConfigError("ica.max_iterations must be >= 1");
    if (c.ica.max_restarts < 0) throw ConfigError("ica.max_restarts must be >= 0");
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

/// The resolved configuration without output_root: where a run is stored does
/// not change what it computes.
inline nlohmann::json identity_json(const RunConfig& c) {
    auto j = to_json(c);
    j.erase("output_root");
    return j;
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(identity_json(c).dump()); }

inline std::filesystem::path run_directory(const RunConfig& c) {
    return std::filesystem::path(c.output_root) / ("run-" + config_hash(c).substr(0, 16));
}

}  // namespace fracdim::cli
