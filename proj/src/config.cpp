#include "qfc/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qfc/errors.hpp"

namespace qfc {

namespace fs = std::filesystem;

namespace {

// Unknown keys are rejected so that typos do not silently fall back to defaults.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": bad value for '" + key + "'");
    }
}

}  // namespace

void Calibration::validate() const {
    try {
        model.validate();
        losses.validate();
        for (const auto& [name, f] : filters) f.validate();
    } catch (const std::domain_error& e) {
        throw ConfigError(std::string("calibration: ") + e.what());
    }
}

const SpectralFilter& Calibration::filter(const std::string& name) const {
    auto it = filters.find(name);
    if (it == filters.end()) throw ConfigError("unknown filter '" + name + "'");
    return it->second;
}

std::vector<SpectralFilter> Calibration::stack(const std::vector<std::string>& names) const {
    std::vector<SpectralFilter> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(filter(n));
    return out;
}

std::map<std::string, SpectralFilter> default_filter_library(const ConverterModel& model) {
    const auto t = model.triple();
    const double uv_thz = frequency_thz(t.output_nm);
    std::map<std::string, SpectralFilter> lib;
    auto put = [&](const std::string& name, SpectralFilter f) {
        f.name = name;
        lib.emplace(name, f);
    };
    put("uv_bandpass", SpectralFilter::bandpass_nm(t.output_nm, 6.0, 22.0));
    put("etalon", SpectralFilter::etalon(uv_thz, 340.0, 5.5, 0.5));
    put("ion_line", SpectralFilter::lorentzian_line(uv_thz, 0.020));
    put("signal_bandpass", SpectralFilter::bandpass_nm(t.signal_nm, 4.0, 6.0));
    put("signal_vbg", SpectralFilter::vbg_nm(t.signal_nm, 1.0));
    put("spectrometer", SpectralFilter::spectrometer_nm(t.output_nm, 0.15));
    return lib;
}

Calibration default_calibration() {
    Calibration c;
    auto& m = c.model;
    m.eta_nor = 0.01;
    m.uv_absorption_coeff = 2.0;
    m.noise_linear_coeff = 50.0;
    m.noise_quadratic_coeff = 3.0;
    m.noise_bandwidth_ghz = 3000.0;
    m.signal_luminescence_coeff = 2.5;
    c.losses.mode_matching = 0.5;
    m.pair_rate_coeff = consistent_pair_rate_coeff(m, c.losses);
    c.filters = default_filter_library(m);
    return c;
}

json to_json(const ConverterModel& m) {
    return {{"lambda_input_nm", m.lambda_input_nm},
            {"lambda_pump_nm", m.lambda_pump_nm},
            {"length_mm", m.length_mm},
            {"poling_period_um", m.poling_period_um},
            {"eta_nor", m.eta_nor},
            {"uv_absorption_coeff", m.uv_absorption_coeff},
            {"pulsed_efficiency_ceiling", m.pulsed_efficiency_ceiling},
            {"pair_rate_coeff", m.pair_rate_coeff},
            {"spdc_bandwidth_ghz", m.spdc_bandwidth_ghz},
            {"noise_bandwidth_ghz", m.noise_bandwidth_ghz},
            {"dispersion_baseline_index", m.dispersion_baseline_index},
            {"noise_linear_coeff", m.noise_linear_coeff},
            {"noise_quadratic_coeff", m.noise_quadratic_coeff},
            {"signal_luminescence_coeff", m.signal_luminescence_coeff},
            {"signal_luminescence_exponent", m.signal_luminescence_exponent},
            {"input_flux", m.input_flux},
            {"dark_count_rate", m.dark_count_rate}};
}

json to_json(const LossBudget& l) {
    return {{"external_optics", l.external_optics},
            {"fiber_coupling", l.fiber_coupling},
            {"detector_efficiency", l.detector_efficiency},
            {"etalon_transmission", l.etalon_transmission},
            {"mode_matching", l.mode_matching}};
}

json to_json(const SpectralFilter& f) {
    json j = {{"kind", filter_kind_name(f.kind)},
              {"center_thz", f.center_thz},
              {"fwhm_ghz", f.fwhm_ghz},
              {"peak_transmission", f.peak_transmission},
              {"acts_on_residual", f.acts_on_residual}};
    if (f.kind == FilterKind::etalon) j["fsr_ghz"] = f.fsr_ghz;
    if (f.kind == FilterKind::bandpass) j["out_of_band_od"] = f.out_of_band_od;
    return j;
}

json to_json(const Calibration& c) {
    json filters = json::object();
    for (const auto& [name, f] : c.filters) filters[name] = to_json(f);
    return {{"schema_version", kSchemaVersion},
            {"model", to_json(c.model)},
            {"losses", to_json(c.losses)},
            {"filters", filters},
            {"report", c.report}};
}

ConverterModel model_from_json(const json& j) {
    const std::string w = "model";
    check_keys(j, {"lambda_input_nm", "lambda_pump_nm", "length_mm", "poling_period_um", "eta_nor",
                   "uv_absorption_coeff", "pulsed_efficiency_ceiling", "pair_rate_coeff", "spdc_bandwidth_ghz",
                   "noise_bandwidth_ghz", "dispersion_baseline_index", "noise_linear_coeff",
                   "noise_quadratic_coeff", "signal_luminescence_coeff", "signal_luminescence_exponent",
                   "input_flux", "dark_count_rate"},
               w);
    ConverterModel m;
    read_opt(j, "lambda_input_nm", m.lambda_input_nm, w);
    read_opt(j, "lambda_pump_nm", m.lambda_pump_nm, w);
    read_opt(j, "length_mm", m.length_mm, w);
    read_opt(j, "poling_period_um", m.poling_period_um, w);
    read_opt(j, "eta_nor", m.eta_nor, w);
    read_opt(j, "uv_absorption_coeff", m.uv_absorption_coeff, w);
    read_opt(j, "pulsed_efficiency_ceiling", m.pulsed_efficiency_ceiling, w);
    read_opt(j, "pair_rate_coeff", m.pair_rate_coeff, w);
    read_opt(j, "spdc_bandwidth_ghz", m.spdc_bandwidth_ghz, w);
    read_opt(j, "noise_bandwidth_ghz", m.noise_bandwidth_ghz, w);
    read_opt(j, "dispersion_baseline_index", m.dispersion_baseline_index, w);
    read_opt(j, "noise_linear_coeff", m.noise_linear_coeff, w);
    read_opt(j, "noise_quadratic_coeff", m.noise_quadratic_coeff, w);
    read_opt(j, "signal_luminescence_coeff", m.signal_luminescence_coeff, w);
    read_opt(j, "signal_luminescence_exponent", m.signal_luminescence_exponent, w);
    read_opt(j, "input_flux", m.input_flux, w);
    read_opt(j, "dark_count_rate", m.dark_count_rate, w);
    return m;
}

LossBudget losses_from_json(const json& j) {
    const std::string w = "losses";
    check_keys(j, {"external_optics", "fiber_coupling", "detector_efficiency", "etalon_transmission", "mode_matching"},
               w);
    LossBudget l;
    read_opt(j, "external_optics", l.external_optics, w);
    read_opt(j, "fiber_coupling", l.fiber_coupling, w);
    read_opt(j, "detector_efficiency", l.detector_efficiency, w);
    read_opt(j, "etalon_transmission", l.etalon_transmission, w);
    read_opt(j, "mode_matching", l.mode_matching, w);
    return l;
}

// Centre and width may be given in nm (center_nm, fwhm_nm) for hand-written
// files; they are stored in THz/GHz.
SpectralFilter filter_from_json(const std::string& name, const json& j) {
    const std::string w = "filter '" + name + "'";
    check_keys(j, {"kind", "center_thz", "center_nm", "fwhm_ghz", "fwhm_nm", "fsr_ghz", "peak_transmission",
                   "out_of_band_od", "acts_on_residual"},
               w);
    SpectralFilter f;
    f.name = name;
    std::string kind;
    read_opt(j, "kind", kind, w);
    try {
        f.kind = filter_kind_from_name(kind);
    } catch (const std::exception&) {
        throw ConfigError(w + ": unknown kind '" + kind + "'");
    }
    double center_nm = 0, fwhm_nm = 0;
    read_opt(j, "center_thz", f.center_thz, w);
    read_opt(j, "center_nm", center_nm, w);
    read_opt(j, "fwhm_ghz", f.fwhm_ghz, w);
    read_opt(j, "fwhm_nm", fwhm_nm, w);
    read_opt(j, "fsr_ghz", f.fsr_ghz, w);
    read_opt(j, "peak_transmission", f.peak_transmission, w);
    read_opt(j, "out_of_band_od", f.out_of_band_od, w);
    f.acts_on_residual = f.kind != FilterKind::etalon;
    read_opt(j, "acts_on_residual", f.acts_on_residual, w);
    if (center_nm > 0) f.center_thz = frequency_thz(center_nm);
    if (fwhm_nm > 0) {
        if (!(f.center_thz > 0)) throw ConfigError(w + ": fwhm_nm needs a centre");
        f.fwhm_ghz = wavelength_width_to_ghz(wavelength_nm(f.center_thz), fwhm_nm);
    }
    try {
        f.validate();
    } catch (const std::domain_error& e) {
        throw ConfigError(w + ": " + e.what());
    }
    return f;
}

Calibration calibration_from_json(const json& j) {
    check_keys(j, {"schema_version", "model", "losses", "filters", "report"}, "calibration");
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw ConfigError("calibration: missing schema_version");
    if (j["schema_version"].get<int>() != kSchemaVersion)
        throw ConfigError("calibration: unsupported schema_version " + j["schema_version"].dump());
    Calibration c;
    if (j.contains("model")) c.model = model_from_json(j["model"]);
    if (j.contains("losses")) c.losses = losses_from_json(j["losses"]);
    if (j.contains("filters")) {
        if (!j["filters"].is_object()) throw ConfigError("calibration: filters must be an object");
        for (const auto& [name, fj] : j["filters"].items()) c.filters.emplace(name, filter_from_json(name, fj));
    } else {
        c.filters = default_filter_library(c.model);
    }
    if (j.contains("report")) c.report = j["report"];
    c.validate();
    return c;
}

json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& j, const fs::path& path, bool force) {
    if (fs::exists(path) && !force)
        throw ConfigError(path.string() + " exists; pass --force to overwrite");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp);
        os << j.dump(2) << '\n';
        if (!os) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("write failed: " + path.string());
        }
    }
    fs::rename(tmp, path);
}

Calibration load_calibration(const fs::path& path) { return calibration_from_json(read_json_file(path)); }

void save_calibration(const Calibration& c, const fs::path& path, bool force) {
    c.validate();
    write_json_file(to_json(c), path, force);
}

fs::path bundled_calibration_path() { return fs::path(QFC_DATA_DIR) / "reference_calibration.json"; }
fs::path bundled_manifest_path() { return fs::path(QFC_DATA_DIR) / "manifest.json"; }

std::string content_hash(const json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const Calibration& c) {
    json j = to_json(c);
    j.erase("report");
    return content_hash(j);
}

}  // namespace qfc
