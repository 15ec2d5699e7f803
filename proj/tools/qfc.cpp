// qfc: scenario runner, calibration, acceptance verification and tag-file
// conversion. Exit codes: 0 success, 1 acceptance/expectation failure,
// 2 configuration error.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "qfc/acceptance.hpp"
#include "qfc/calibrate.hpp"
#include "qfc/config.hpp"
#include "qfc/errors.hpp"
#include "qfc/scenario.hpp"
#include "qfc/tagstream.hpp"

namespace fs = std::filesystem;
using namespace qfc;

namespace {

Calibration pick_calibration(const std::string& config, const RunManifest* m) {
    if (!config.empty()) return load_calibration(config);
    if (m && m->calibration) return load_calibration(*m->calibration);
    return load_calibration(bundled_calibration_path());
}

fs::path output_dir(const std::string& flag, const RunManifest& m) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("QFC_OUTPUT_DIR"); env && *env) return env;
    return m.output_dir;
}

bool has_ext(const std::string& path, const char* ext) { return fs::path(path).extension() == ext; }

std::vector<TagStream> read_tags(const std::string& path) {
    if (has_ext(path, ".qtag")) return {read_qtag_file(path)};
    if (has_ext(path, ".csv")) return read_tag_csv_file(path);
    throw ConfigError(path + ": expected a .qtag or .csv file");
}

int cmd_run(const std::string& manifest_path, const std::string& config, const std::vector<std::string>& only,
            std::optional<std::uint64_t> seed, const std::string& out, unsigned threads, bool plots) {
    const auto m = load_manifest(manifest_path);
    const auto cal = pick_calibration(config, &m);
    std::vector<const Scenario*> selected;
    for (const auto& name : only) {
        auto it = std::find_if(m.scenarios.begin(), m.scenarios.end(), [&](const Scenario& s) { return s.name == name; });
        if (it == m.scenarios.end()) throw ConfigError("no scenario named '" + name + "' in " + manifest_path);
        selected.push_back(&*it);
    }
    if (only.empty())
        for (const auto& s : m.scenarios) selected.push_back(&s);
    if (selected.empty()) {
        std::cerr << "warning: manifest has no scenarios\n";
        return 0;
    }
    for (const auto* s : selected) validate_scenario(*s, cal);

    const auto dir = output_dir(out, m);
    const std::uint64_t base_seed = seed.value_or(m.seed);
    bool all = true;
    for (const auto* s : selected) {
        const auto r = run_scenario(*s, cal, scenario_seed(*s, base_seed), dir, {threads, plots});
        all = all && r.passed;
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " -> " << (dir / r.name).string() << '\n';
        for (const auto& e : r.summary["expected"])
            std::cout << "    " << e["key"].get<std::string>() << " = "
                      << (e.contains("value") ? e["value"].dump() : std::string("missing"))
                      << (e["passed"].get<bool>() ? "" : "  <- outside expected range") << '\n';
    }
    return all ? 0 : 1;
}

int cmd_calibrate(const std::string& config, const std::string& anchors_path, const std::vector<std::string>& free,
                  const std::string& out, bool force) {
    if (!force && fs::exists(out)) throw ConfigError(out + " exists; pass --force to overwrite");
    const Calibration start = config.empty() ? default_calibration() : load_calibration(config);
    const auto anchors = anchors_path.empty() ? reference_anchors() : anchors_from_json(read_json_file(anchors_path));
    const auto params = free.empty() ? reference_free_parameters() : free;
    const auto res = calibrate(start, anchors, params);
    std::printf("%-24s %14s %14s %10s\n", "anchor", "target", "value", "residual");
    for (const auto& r : res.residuals)
        std::printf("%-24s %14.6g %14.6g %10.3g\n", r.observable.c_str(), r.target, r.value, r.residual());
    std::printf("cost %.4g after %d iterations\n", res.cost, res.iterations);
    for (const auto& p : params) std::printf("  %-26s %.10g\n", p.c_str(), get_parameter(res.calibration, p));
    save_calibration(res.calibration, out, force);
    std::printf("wrote %s (config hash %s)\n", out.c_str(), config_hash(res.calibration).c_str());
    return 0;
}

int cmd_verify(const std::string& manifest_path, const std::string& config, std::uint64_t seed, unsigned threads,
               const std::vector<int>& criteria) {
    const auto m = load_manifest(manifest_path);
    if (config.empty() && !m.calibration && m.scenarios.empty()) {
        std::cout << "warning: " << manifest_path << " is empty; nothing to verify\n";
        return 0;
    }
    for (int id : criteria)
        if (id < 1 || id > kCriterionCount) throw ConfigError("criterion ids run from 1 to 10");
    const auto cal = pick_calibration(config, &m);
    AcceptanceOptions opt;
    opt.seed = seed;
    opt.threads = threads;
    opt.only = criteria;
    std::cout << "calibration hash " << config_hash(cal) << ", seed " << seed << '\n';
    int failed = 0;
    const auto results = run_acceptance(cal, opt, [&](const CriterionResult& r) {
        std::cout << format_result(r) << std::endl;
        if (!r.passed) ++failed;
    });
    std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed";
    if (failed) {
        std::cout << "; failed:";
        for (const auto& r : results)
            if (!r.passed) std::cout << ' ' << r.id << " (" << r.name << ')';
    }
    std::cout << '\n';
    return failed ? 1 : 0;
}

int cmd_convert(const std::vector<std::string>& inputs, const std::string& out, std::optional<int> channel,
                bool force) {
    if (!force && fs::exists(out)) throw ConfigError(out + " exists; pass --force to overwrite");
    std::vector<TagStream> streams;
    for (const auto& in : inputs)
        for (auto& s : read_tags(in)) streams.push_back(std::move(s));
    if (channel) {
        std::erase_if(streams, [&](const TagStream& s) { return s.channel != *channel; });
        if (streams.empty()) throw ConfigError("no stream with channel " + std::to_string(*channel));
    }
    if (has_ext(out, ".csv")) {
        write_tag_csv_file(out, streams);
    } else if (has_ext(out, ".qtag")) {
        if (streams.size() != 1) throw ConfigError("a .qtag file holds one channel; select one with --channel");
        write_qtag_file(out, streams.front());
    } else {
        throw ConfigError(out + ": expected a .qtag or .csv output");
    }
    std::size_t n = 0;
    for (const auto& s : streams) n += s.size();
    std::cout << "wrote " << n << " tags in " << streams.size() << " channel(s) to " << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum frequency conversion simulator and time-tag analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string manifest = bundled_manifest_path().string(), config, out, anchors;
    std::vector<std::string> scenarios, free, inputs;
    std::vector<int> criteria;
    std::uint64_t seed = 20240601;
    unsigned threads = 0;
    bool force = false, no_plots = false;
    int channel = -1;

    auto* run = app.add_subcommand("run", "Run manifest scenarios and write CSV/JSON artifacts");
    run->add_option("--manifest,-m", manifest, "Run manifest (JSON)")->capture_default_str();
    run->add_option("--config,-c", config, "Calibration file overriding the manifest's");
    run->add_option("--scenario,-s", scenarios, "Scenario name (repeatable; default all)");
    auto* run_seed = run->add_option("--seed", seed, "Global seed (default: manifest seed)");
    run->add_option("--out,-o", out, "Output directory (else $QFC_OUTPUT_DIR, else manifest)");
    run->add_option("--threads,-j", threads, "Worker threads (0 = all cores)");
    run->add_flag("--no-plots", no_plots, "Skip SVG plots");

    auto* cal = app.add_subcommand("calibrate", "Fit model coefficients to anchor values");
    cal->add_option("--config,-c", config, "Starting calibration (default: built-in nominal values)");
    cal->add_option("--anchors,-a", anchors, "Anchor list (JSON array of {observable, target, scale})");
    cal->add_option("--free", free, "Free parameters (default: reference set)")->delimiter(',');
    cal->add_option("--out,-o", out, "Calibration file to write")->required();
    cal->add_flag("--force,-f", force, "Overwrite an existing file");
    cal->add_option("--seed", seed, "Unused; accepted for a uniform CLI");

    auto* ver = app.add_subcommand("verify", "Run the acceptance criteria");
    ver->add_option("--manifest,-m", manifest, "Run manifest (JSON)")->capture_default_str();
    ver->add_option("--config,-c", config, "Calibration file overriding the manifest's");
    ver->add_option("--seed", seed, "Seed for the stochastic criteria")->capture_default_str();
    ver->add_option("--threads,-j", threads, "Worker threads (0 = all cores)");
    ver->add_option("--criteria", criteria, "Subset of criterion ids, e.g. 1,3,5")->delimiter(',');
    ver->add_option("--out,-o", out, "Unused; accepted for a uniform CLI");

    auto* conv = app.add_subcommand("convert", "Convert tag files between .qtag and .csv");
    conv->add_option("inputs", inputs, "Input files (.qtag or .csv)")->required();
    conv->add_option("--out,-o", out, "Output file (.qtag or .csv)")->required();
    conv->add_option("--channel", channel, "Keep only this channel");
    conv->add_flag("--force,-f", force, "Overwrite an existing file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run)
            return cmd_run(manifest, config, scenarios, run_seed->count() ? std::optional(seed) : std::nullopt, out,
                           threads, !no_plots);
        if (*cal) return cmd_calibrate(config, anchors, free, out, force);
        if (*ver) return cmd_verify(manifest, config, seed, threads, criteria);
        if (*conv) return cmd_convert(inputs, out, channel >= 0 ? std::optional(channel) : std::nullopt, force);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const ConvergenceError& e) {
        std::cerr << "calibration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
