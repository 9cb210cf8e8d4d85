#pragma once

// Batch stages behind the command-line tool. Every stage reads and writes
// inside one run directory:
//
//   config.json                  resolved configuration (its hash names the directory)
//   data/<inst>.fdm              one DataMatrix per instance (synth or ingest)
//   truth/<inst>.json, _maps.fdm ground truth for synthetic instances
//   smoothed/<inst>__fwhm<f>.fdm smoothed copies, one per FWHM level
//   fd/<inst>__fwhm<f>.csv/.json curves and fits; fd/fragment.json
//   ica/<inst>__p<p>...          unmixing exports; ica/fragment.json
//   report.json, report.txt
//
// Instances are processed by a bounded worker pool; a failing instance is
// recorded and never stops its siblings.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fracdim/cli/config.hpp"
#include "fracdim/core/matrix_io.hpp"
#include "fracdim/datamodel/nifti.hpp"
#include "fracdim/datamodel/preprocess.hpp"
#include "fracdim/fractal/export.hpp"
#include "fracdim/fractal/summary.hpp"
#include "fracdim/ica/export.hpp"
#include "fracdim/ica/match.hpp"
#include "fracdim/synthgen/sources.hpp"

namespace fracdim::cli {

namespace fs = std::filesystem;

inline constexpr int kFragmentVersion = 1;
inline constexpr const char* kWorkersEnv = "FRACDIM_WORKERS";

enum ExitCode { kOk = 0, kPartial = 1, kBadConfig = 2, kIoFailure = 3 };

struct StageResult {
    std::size_t ok = 0, failed = 0;
    int exit_code() const { return failed ? kPartial : kOk; }
};

inline int worker_count() {
    const char* env = std::getenv(kWorkersEnv);
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1 || n > 1024) throw ConfigError(std::string(kWorkersEnv) + " must be an integer in [1, 1024]");
    return int(n);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to slot i so the outcome does not depend on scheduling. An exception
/// escaping fn stops handing out new items and is rethrown after the join.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(std::size_t(std::max(workers, 1)), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline void log(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[fracdim] " << msg << '\n';
}

class Run {
public:
    explicit Run(RunConfig cfg) : cfg_(std::move(cfg)), hash_(config_hash(cfg_)), dir_(run_directory(cfg_)) {}

    const RunConfig& config() const { return cfg_; }
    const std::string& hash() const { return hash_; }
    const fs::path& dir() const { return dir_; }

    /// Creates the run directory and records the resolved configuration.
    void prepare() const {
        for (const char* sub : {"data", "truth", "smoothed", "fd", "ica"}) make_dirs(dir_ / sub);
        nifti_detail::write_file_atomic(dir_ / "config.json", to_json(cfg_).dump(2) + "\n");
    }

    StageResult synth() const {
        const auto& s = cfg_.synth;
        if (s.seeds.empty()) throw ConfigError("synth: no seeds configured");
        StageResult res;
        for (std::size_t i = 0; i < s.seeds.size(); ++i) {
            const auto seed = s.seeds[i];
            const std::string inst = "synth-s" + std::to_string(seed);
            const SourceSet src = generate_sources(seed);
            const DataMatrix m = mix(src, s.noise_level, seed + s.noise_seed_offset);
            export_sources(dir_ / "truth" / inst, src);
            nlohmann::json hdr{{"instance", inst},
                               {"source", "synth"},
                               {"seed", seed},
                               {"noise_level", s.noise_level},
                               {"truth", "truth/" + inst + ".json"},
                               {"geometry", geometry_json(kMapSide, kMapSide, 1, {s.spacing_mm[0], s.spacing_mm[1], s.spacing_mm[2]})}};
            write_matrix_binary(dir_ / "data" / (inst + ".fdm"), m, hdr);
            log("synth " + inst + ": " + std::to_string(m.t()) + "x" + std::to_string(m.n()));
            ++res.ok;
        }
        return res;
    }

    StageResult ingest() const {
        const auto& g = cfg_.ingest;
        if (g.inputs.empty()) throw ConfigError("ingest: no inputs configured");
        const VolumeFormat fmt = parse_volume_format(g.format);
        std::set<std::string> names;
        std::vector<std::string> inst(g.inputs.size());
        for (std::size_t i = 0; i < g.inputs.size(); ++i) {
            inst[i] = "vol-" + volume_stem(g.inputs[i]);
            if (!names.insert(inst[i]).second) throw ConfigError("ingest: two inputs map to instance name '" + inst[i] + "'");
        }
        std::optional<Volume4D> mask_vol;
        if (g.mask) mask_vol = load_volume(*g.mask, fmt);
        std::vector<std::string> errors(g.inputs.size());
        parallel_for(g.inputs.size(), worker_count(), [&](std::size_t i) {
            // An unreadable input fails its own instance; failing to write the run
            // directory is fatal for the batch.
            Volume4D v;
            try {
                v = load_volume(g.inputs[i], fmt);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                log("ingest " + inst[i] + " FAILED: " + e.what());
                return;
            }
            try {
                const VoxelMask mask = mask_vol ? mask_from_volume(*mask_vol) : VoxelMask::all(v.dims().nx, v.dims().ny, v.dims().nz);
                DataMatrix m = apply_mask_and_threshold(v, mask, g.threshold);
                if (g.decimate > 1) m = decimate(m, g.decimate);
                const auto& d = v.dims();
                nlohmann::json hdr{{"instance", inst[i]},
                                   {"source", "ingest"},
                                   {"input", g.inputs[i]},
                                   {"input_sha256", file_sha256(g.inputs[i])},
                                   {"geometry", geometry_json(d.nx, d.ny, d.nz, v.spacing())}};
                write_matrix_binary(dir_ / "data" / (inst[i] + ".fdm"), m, hdr);
                log("ingest " + inst[i] + ": " + std::to_string(m.t()) + "x" + std::to_string(m.n()));
            } catch (const IoError&) {
                throw;
            } catch (const std::exception& e) {
                errors[i] = e.what();
                log("ingest " + inst[i] + " FAILED: " + e.what());
            }
        });
        return tally(errors);
    }

    StageResult smooth() const {
        const auto items = list_fdm(dir_ / "data");
        if (items.empty()) throw ConfigError("smooth: no instances in " + (dir_ / "data").string() + " (run synth or ingest first)");
        struct Job {
            fs::path input;
            double fwhm;
        };
        std::vector<Job> jobs;
        for (const auto& p : items)
            for (double f : cfg_.smooth.fwhm_mm) jobs.push_back({p, f});
        std::vector<std::string> errors(jobs.size());
        parallel_for(jobs.size(), worker_count(), [&](std::size_t i) {
            const auto& job = jobs[i];
            const std::string inst = job.input.stem().string();
            try {
                auto loaded = read_matrix_binary_with_header(job.input);
                DataMatrix out = loaded.matrix;
                if (job.fwhm > 0) {
                    const auto& geo = loaded.header.at("geometry");
                    const Spacing sp{geo.at("spacing_mm").at(0).get<double>(), geo.at("spacing_mm").at(1).get<double>(),
                                     geo.at("spacing_mm").at(2).get<double>()};
                    const Volume4D v = to_volume(loaded.matrix, geo.at("nx").get<int>(), geo.at("ny").get<int>(),
                                                 geo.at("nz").get<int>(), sp);
                    out = gather(gaussian_smooth(v, job.fwhm), loaded.matrix.voxel_index);
                }
                nlohmann::json hdr = loaded.header;
                hdr.erase("voxel_index");
                hdr.erase("t");
                hdr.erase("n");
                hdr.erase("dtype");
                hdr.erase("order");
                hdr["fwhm_mm"] = job.fwhm;
                write_matrix_binary(dir_ / "smoothed" / (inst + "__fwhm" + format_double(job.fwhm) + ".fdm"), out, hdr);
            } catch (const IoError&) {
                throw;
            } catch (const std::exception& e) {
                errors[i] = e.what();
                log("smooth " + inst + " fwhm " + format_double(job.fwhm) + " FAILED: " + e.what());
            }
        });
        return tally(errors);
    }

    /// FD per (instance, smoothing level). Uses smoothed/ when present, else data/ as level 0.
    StageResult fd() const {
        auto items = list_fdm(dir_ / "smoothed");
        if (items.empty()) items = list_fdm(dir_ / "data");
        if (items.empty()) throw ConfigError("fd: no input matrices (run synth or ingest first)");
        const FdOptions opt = cfg_.fd.options();
        std::vector<nlohmann::json> rows(items.size());
        parallel_for(items.size(), worker_count(), [&](std::size_t i) {
            nlohmann::json row;
            try {
                const auto loaded = read_matrix_binary_with_header(items[i]);
                row["instance"] = loaded.header.value("instance", items[i].stem().string());
                row["fwhm_mm"] = loaded.header.value("fwhm_mm", 0.0);
                const std::string stem = row["instance"].get<std::string>() + "__fwhm" + format_double(row["fwhm_mm"].get<double>());
                const FdEstimate est = estimate_fd(loaded.matrix.values, opt);
                export_curve(dir_ / "fd" / stem, est);
                row["status"] = "ok";
                row["fd"] = est.fd();
                row["fit"] = fracdim::to_json(est.fit);
                row["curve"] = "fd/" + stem + ".csv";
            } catch (const IoError&) {
                throw;
            } catch (const std::exception& e) {
                if (!row.contains("instance")) row["instance"] = items[i].stem().string();
                if (!row.contains("fwhm_mm")) row["fwhm_mm"] = 0.0;
                row["status"] = "failed";
                row["error"] = e.what();
                log("fd " + items[i].stem().string() + " FAILED: " + e.what());
            }
            rows[i] = std::move(row);
        });

        StageResult res;
        std::map<double, std::vector<double>> by_level;
        std::map<double, std::size_t> attempted;
        for (const auto& r : rows) {
            const double lvl = r["fwhm_mm"].get<double>();
            ++attempted[lvl];
            if (r["status"] == "ok") {
                by_level[lvl].push_back(r["fd"].get<double>());
                ++res.ok;
            } else {
                ++res.failed;
            }
        }
        nlohmann::json summary = nlohmann::json::array();
        for (const auto& [lvl, n] : attempted) {
            const auto& v = by_level[lvl];
            nlohmann::json s{{"fwhm_mm", lvl}, {"attempted", n}, {"instance_count", v.size()}};
            s["untrimmed"] = fracdim::to_json(sample_stats(v));
            s["trimmed"] = v.size() >= 3 ? fracdim::to_json(fd_summary(v).trimmed) : nlohmann::json(nullptr);
            summary.push_back(s);
        }
        nlohmann::json frag{{"fragment", "fd"},
                            {"fragment_version", kFragmentVersion},
                            {"config_hash", hash_},
                            {"method", to_string(opt.method)},
                            {"q", opt.q},
                            {"instances", rows},
                            {"summary", summary}};
        nifti_detail::write_file_atomic(dir_ / "fd" / "fragment.json", frag.dump(2) + "\n");
        log("fd: " + std::to_string(res.ok) + " ok, " + std::to_string(res.failed) + " failed");
        return res;
    }

    StageResult ica() const {
        const auto items = list_fdm(dir_ / "data");
        if (items.empty()) throw ConfigError("ica: no input matrices (run synth or ingest first)");
        struct Job {
            fs::path input;
            std::optional<int> p;
        };
        std::vector<Job> jobs;
        for (const auto& it : items)
            for (const auto& p : cfg_.ica.p) jobs.push_back({it, p});
        const FastIcaOptions opt = cfg_.ica.options();
        std::vector<nlohmann::json> rows(jobs.size());
        parallel_for(jobs.size(), worker_count(), [&](std::size_t i) {
            const auto& job = jobs[i];
            const std::string inst = job.input.stem().string();
            const std::string ptag = job.p ? std::to_string(*job.p) : std::string("auto");
            nlohmann::json row{{"instance", inst}, {"p_requested", ptag}};
            try {
                const auto loaded = read_matrix_binary_with_header(job.input);
                const auto& y = loaded.matrix.values;
                UnmixingModel u = sort_components(
                    fastica(y, job.p ? std::optional<Eigen::Index>(*job.p) : std::nullopt, cfg_.ica.seed, opt), y);
                const std::string stem = inst + "__p" + ptag;
                export_unmixing(dir_ / "ica" / stem, u);
                row["status"] = u.converged ? "ok" : "not-converged";
                row["model"] = "ica/" + stem + ".json";
                row["p"] = u.p;
                row["k"] = u.k;
                row["converged"] = u.converged;
                row["achieved_tolerance"] = u.achieved_tolerance;
                row["rmse_curve"] = u.rmse_curve;
                if (loaded.header.contains("truth")) {
                    const auto truth = load_truth_timecourses(dir_ / loaded.header["truth"].get<std::string>());
                    const SourceMatch sm = match_sources(u, truth);
                    nifti_detail::write_file_atomic(dir_ / "ica" / (stem + "_match.csv"), source_match_csv(sm));
                    nlohmann::json mj = nlohmann::json::array();
                    for (const auto& e : sm)
                        mj.push_back({{"source", e.source}, {"component", e.component}, {"r", e.r}, {"p_value", e.p_value}, {"rmse", e.rmse}});
                    row["source_match"] = mj;
                    row["source_match_csv"] = "ica/" + stem + "_match.csv";
                }
                if (!u.converged) log("ica " + stem + ": not converged (achieved " + format_double(u.achieved_tolerance) + ")");
            } catch (const IoError&) {
                throw;
            } catch (const std::exception& e) {
                row["status"] = "failed";
                row["error"] = e.what();
                log("ica " + inst + " p=" + ptag + " FAILED: " + e.what());
            }
            rows[i] = std::move(row);
        });
        StageResult res;
        for (const auto& r : rows) (r["status"] == "failed" || r["status"] == "not-converged" ? res.failed : res.ok)++;
        nlohmann::json frag{{"fragment", "ica"},
                            {"fragment_version", kFragmentVersion},
                            {"config_hash", hash_},
                            {"nonlinearity", to_string(cfg_.ica.nonlinearity)},
                            {"seed", cfg_.ica.seed},
                            {"runs", rows}};
        nifti_detail::write_file_atomic(dir_ / "ica" / "fragment.json", frag.dump(2) + "\n");
        log("ica: " + std::to_string(res.ok) + " ok, " + std::to_string(res.failed) + " failed or not converged");
        return res;
    }

    /// Merges fragments into report.json and report.txt; returns the content hash.
    std::string report() const {
        nlohmann::json fragments = nlohmann::json::object();
        for (const char* name : {"fd", "ica"}) {
            const fs::path p = dir_ / name / "fragment.json";
            if (!fs::exists(p)) continue;
            nlohmann::json f;
            try {
                std::ifstream in(p);
                f = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("report: cannot parse " + p.string() + ": " + e.what());
            }
            if (f.value("fragment_version", -1) != kFragmentVersion)
                throw ConfigError("report: " + p.string() + " has fragment_version " + f.value("fragment_version", nlohmann::json(-1)).dump() +
                                  ", expected " + std::to_string(kFragmentVersion));
            if (f.value("config_hash", std::string()) != hash_)
                throw ConfigError("report: " + p.string() + " was produced by a different configuration");
            fragments[name] = f;
        }
        if (fragments.empty()) throw ConfigError("report: no fragments found in " + dir_.string() + " (run fd and/or ica first)");

        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& p : list_fdm(dir_ / "data"))
            inputs.push_back({{"file", "data/" + p.filename().string()}, {"sha256", file_sha256(p)}});
        nlohmann::json body{{"tool", "fracdim"},
                            {"tool_version", kToolVersion},
                            {"config_hash", hash_},
                            {"config", identity_json(cfg_)},
                            {"inputs", inputs}};
        if (fragments.contains("fd")) body["fd"] = fragments["fd"];
        if (fragments.contains("ica")) body["ica"] = fragments["ica"];
        const std::string content_hash = sha256_hex(body.dump());
        body["content_hash"] = content_hash;
        nifti_detail::write_file_atomic(dir_ / "report.json", body.dump(2) + "\n");
        nifti_detail::write_file_atomic(dir_ / "report.txt", summary_table(body));
        return content_hash;
    }

    /// Plain-text table: rows mean / conf.range / stdev, one column per smoothing
    /// level, cells "trimmed (untrimmed)".
    static std::string summary_table(const nlohmann::json& report) {
        std::ostringstream os;
        os << "fracdim report " << report.value("content_hash", std::string()).substr(0, 16) << "\n";
        if (report.contains("fd")) {
            const auto& fd = report["fd"];
            os << "\nFD estimation (" << fd.value("method", std::string()) << ", q = " << fd.value("q", 0.0)
               << "); cells: trimmed (untrimmed)\n";
            std::vector<std::string> header{""};
            std::vector<std::vector<std::string>> rows{{"mean"}, {"conf.range"}, {"stdev"}, {"instances"}};
            for (const auto& s : fd["summary"]) {
                const double f = s["fwhm_mm"].get<double>();
                header.push_back(f == 0 ? "no smoothing" : format_fixed(f, 0) + " mm");
                auto cell = [&](const char* key) {
                    const std::string u = format_fixed(s["untrimmed"][key].get<double>(), 2);
                    if (s["trimmed"].is_null()) return "- (" + u + ")";
                    return format_fixed(s["trimmed"][key].get<double>(), 2) + " (" + u + ")";
                };
                rows[0].push_back(cell("mean"));
                rows[1].push_back(cell("conf_halfwidth"));
                rows[2].push_back(cell("stdev"));
                rows[3].push_back(std::to_string(s["instance_count"].get<std::size_t>()) + "/" +
                                  std::to_string(s["attempted"].get<std::size_t>()));
            }
            write_table(os, header, rows);
            for (const auto& r : fd["instances"])
                if (r["status"] != "ok")
                    os << "  failed: " << r["instance"].get<std::string>() << " (fwhm " << r["fwhm_mm"].get<double>()
                       << "): " << r.value("error", std::string()) << "\n";
        }
        if (report.contains("ica")) {
            os << "\nICA (" << report["ica"].value("nonlinearity", std::string()) << ")\n";
            std::vector<std::string> header{"instance", "p", "status", "rmse[0]", "rmse[p]"};
            std::vector<std::vector<std::string>> rows;
            for (const auto& r : report["ica"]["runs"]) {
                std::vector<std::string> row{r["instance"].get<std::string>(), r["p_requested"].get<std::string>(),
                                             r["status"].get<std::string>()};
                if (r.contains("rmse_curve")) {
                    row.push_back(format_sci(r["rmse_curve"].front().get<double>()));
                    row.push_back(format_sci(r["rmse_curve"].back().get<double>()));
                } else {
                    row.insert(row.end(), {"-", "-"});
                }
                rows.push_back(row);
            }
            write_table(os, header, rows);
        }
        return os.str();
    }

    static std::string file_sha256(const fs::path& p) {
        const auto buf = nifti_detail::read_file(p);
        return sha256_hex(std::string(buf.begin(), buf.end()));
    }

private:
    static void make_dirs(const fs::path& p) {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
    }

    static nlohmann::json geometry_json(int nx, int ny, int nz, const Spacing& s) {
        return {{"nx", nx}, {"ny", ny}, {"nz", nz}, {"spacing_mm", {s.sx, s.sy, s.sz}}};
    }

    static std::string volume_stem(const std::string& path) {
        std::string name = fs::path(path).filename().string();
        for (const char* ext : {".nii", ".raw", ".f32", ".bin"})
            if (name.size() > std::strlen(ext) && name.ends_with(ext)) name.resize(name.size() - std::strlen(ext));
        return name;
    }

    static std::vector<fs::path> list_fdm(const fs::path& dir) {
        std::vector<fs::path> out;
        if (!fs::exists(dir)) return out;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".fdm") out.push_back(e.path());
        std::sort(out.begin(), out.end());
        return out;
    }

    static StageResult tally(const std::vector<std::string>& errors) {
        StageResult r;
        for (const auto& e : errors) (e.empty() ? r.ok : r.failed)++;
        return r;
    }

    static std::string format_fixed(double v, int digits) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(digits) << v;
        return os.str();
    }

    static std::string format_sci(double v) {
        std::ostringstream os;
        os << std::scientific << std::setprecision(3) << v;
        return os.str();
    }

    static void write_table(std::ostream& os, const std::vector<std::string>& header,
                            const std::vector<std::vector<std::string>>& rows) {
        std::vector<std::size_t> width(header.size());
        for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
        for (const auto& r : rows)
            for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t c = 0; c < width.size(); ++c) {
                const std::string& cell = c < r.size() ? r[c] : std::string();
                os << (c ? "  " : "") << cell << std::string(width[c] - cell.size(), ' ');
            }
            os << '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
    }

    RunConfig cfg_;
    std::string hash_;
    fs::path dir_;
};

}  // namespace fracdim::cli
