// fracdim: batch front end (synth | ingest | smooth | fd | ica | report | run | defaults).

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fracdim/cli/pipeline.hpp"

namespace {

using namespace fracdim;
using namespace fracdim::cli;

struct Overrides {
    std::string config_path;
    std::optional<std::string> out;
    std::vector<std::uint64_t> seeds;
    std::optional<double> noise_level;
    std::vector<std::string> inputs;
    std::optional<std::string> format, mask;
    std::optional<double> threshold;
    std::optional<int> decimate;
    std::vector<double> fwhm;
    std::optional<std::string> method, frame, radii_kind;
    std::optional<double> q;
    std::optional<int> grid_shifts, radii_count;
    std::vector<std::string> p;
    std::optional<std::string> nonlinearity;
    std::optional<std::uint64_t> ica_seed;
};

void add_overrides(CLI::App& app, Overrides& o) {
    app.add_option("-c,--config", o.config_path, "JSON run configuration (defaults when omitted)");
    app.add_option("-o,--out", o.out, "Output root (run directories are created below it)");
    app.add_option("--seed", o.seeds, "Synthetic dataset seeds");
    app.add_option("--noise-level", o.noise_level, "White noise std relative to the mixture RMS");
    app.add_option("--input", o.inputs, "Input 4-D volumes");
    app.add_option("--format", o.format, "Input volume format: nifti1 | raw-f32-4d");
    app.add_option("--mask", o.mask, "Mask volume (first frame > 0 is inside)");
    app.add_option("--threshold", o.threshold, "Keep voxels with temporal sd > threshold * max sd");
    app.add_option("--decimate", o.decimate, "Keep every k-th voxel column");
    app.add_option("--fwhm", o.fwhm, "Smoothing levels in mm FWHM (0 = none)");
    app.add_option("--method", o.method, "FD curve: box-count | pair-count");
    app.add_option("--q", o.q, "Tukey window parameter in [0, 1]");
    app.add_option("--frame", o.frame, "Point frame: principal | native");
    app.add_option("--grid-shifts", o.grid_shifts, "Box-count grids averaged per radius");
    app.add_option("--radii", o.radii_kind, "Radius schedule: occupancy-bracket | diagonal-octaves | distance-percentiles");
    app.add_option("--radii-count", o.radii_count, "Number of radii");
    app.add_option("--p", o.p, "ICA component counts (integers or auto)");
    app.add_option("--nonlinearity", o.nonlinearity, "ICA nonlinearity: tanh | cube");
    app.add_option("--ica-seed", o.ica_seed, "ICA initialization seed");
}

RunConfig load_config(const Overrides& o) {
    nlohmann::json j{{"schema_version", kSchemaVersion}};
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw IoError("cannot open config '" + o.config_path + "'");
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config '" + o.config_path + "' is not valid JSON: " + e.what());
        }
    }
    // Flags win over the file.
    if (o.out) j["output_root"] = *o.out;
    if (!o.seeds.empty()) j["synth"]["seeds"] = o.seeds;
    if (o.noise_level) j["synth"]["noise_level"] = *o.noise_level;
    if (!o.inputs.empty()) j["ingest"]["inputs"] = o.inputs;
    if (o.format) j["ingest"]["format"] = *o.format;
    if (o.mask) j["ingest"]["mask"] = *o.mask;
    if (o.threshold) j["ingest"]["threshold"] = *o.threshold;
    if (o.decimate) j["ingest"]["decimate"] = *o.decimate;
    if (!o.fwhm.empty()) j["smooth"]["fwhm_mm"] = o.fwhm;
    if (o.method) j["fd"]["method"] = *o.method;
    if (o.q) j["fd"]["q"] = *o.q;
    if (o.frame) j["fd"]["frame"] = *o.frame;
    if (o.grid_shifts) j["fd"]["grid_shifts"] = *o.grid_shifts;
    if (o.radii_kind) j["fd"]["radii"]["kind"] = *o.radii_kind;
    if (o.radii_count) j["fd"]["radii"]["count"] = *o.radii_count;
    if (!o.p.empty()) {
        nlohmann::json p = nlohmann::json::array();
        for (const auto& s : o.p) {
            if (s == "auto") {
                p.push_back(s);
                continue;
            }
            try {
                std::size_t used = 0;
                const int v = std::stoi(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                p.push_back(v);
            } catch (const std::exception&) {
                throw ConfigError("--p: '" + s + "' is neither an integer nor auto");
            }
        }
        j["ica"]["p"] = p;
    }
    if (o.nonlinearity) j["ica"]["nonlinearity"] = *o.nonlinearity;
    if (o.ica_seed) j["ica"]["seed"] = *o.ica_seed;
    RunConfig c = parse_config(j);
    validate(c);
    return c;
}

int worst(int a, int b) { return std::max(a, b); }

int execute(const std::string& command, const Overrides& o) {
    if (command == "defaults") {
        std::cout << to_json(parse_config({{"schema_version", kSchemaVersion}})).dump(2) << '\n';
        return kOk;
    }
    const Run run(load_config(o));
    worker_count();  // validate the environment before doing any work
    run.prepare();
    int code = kOk;
    if (command == "synth") code = run.synth().exit_code();
    else if (command == "ingest") code = run.ingest().exit_code();
    else if (command == "smooth") code = run.smooth().exit_code();
    else if (command == "fd") code = run.fd().exit_code();
    else if (command == "ica") code = run.ica().exit_code();
    else if (command == "report") log("report content hash " + run.report());
    else if (command == "run") {
        const auto& c = run.config();
        if (c.synth.seeds.empty() && c.ingest.inputs.empty())
            throw ConfigError("run: configure synth.seeds and/or ingest.inputs");
        if (!c.synth.seeds.empty()) code = worst(code, run.synth().exit_code());
        if (!c.ingest.inputs.empty()) code = worst(code, run.ingest().exit_code());
        code = worst(code, run.smooth().exit_code());
        code = worst(code, run.fd().exit_code());
        code = worst(code, run.ica().exit_code());
        log("report content hash " + run.report());
    }
    std::cout << run.dir().string() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Correlation fractal dimension and ICA analysis of time x voxel data"};
    app.require_subcommand(1);
    Overrides o;
    const std::vector<std::pair<const char*, const char*>> commands{
        {"synth", "Generate seeded eight-source mixtures and their ground truth"},
        {"ingest", "Load 4-D volumes, mask, threshold and store them as matrices"},
        {"smooth", "Gaussian-smooth every instance at each configured FWHM"},
        {"fd", "Estimate the fractal dimension of every (instance, smoothing level)"},
        {"ica", "Run FastICA for every instance and component count"},
        {"report", "Merge stage fragments into report.json and report.txt"},
        {"run", "All configured stages followed by the report"},
        {"defaults", "Print the fully resolved default configuration"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (std::string(name) != "defaults") add_overrides(*sub, o);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kBadConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return execute(command, o);
    } catch (const InvalidArgument& e) {
        std::cerr << "fracdim: invalid configuration: " << e.what() << '\n';
        return kBadConfig;
    } catch (const IoError& e) {
        std::cerr << "fracdim: I/O failure: " << e.what() << '\n';
        return kIoFailure;
    } catch (const FormatError& e) {
        std::cerr << "fracdim: unreadable file: " << e.what() << '\n';
        return kIoFailure;
    } catch (const std::exception& e) {
        std::cerr << "fracdim: " << e.what() << '\n';
        return kPartial;
    }
}
