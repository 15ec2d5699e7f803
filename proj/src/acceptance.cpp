#include "qfc/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "qfc/errors.hpp"
#include "qfc/fock.hpp"
#include "qfc/rng.hpp"

namespace qfc {

namespace {

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<double> log_powers(double lo, double hi, int n) {
    std::vector<double> v;
    for (int k = 0; k < n; ++k) v.push_back(lo * std::pow(hi / lo, k / static_cast<double>(n - 1)));
    return v;
}

json channel(std::vector<std::string> filters, std::optional<double> t, double dark) {
    json j{{"filters", filters}, {"dark_rate", dark}};
    if (t) j["transmission"] = *t;
    return j;
}

Scenario make(std::string name, ScenarioKind kind, json params, json expected) {
    Scenario s;
    s.name = std::move(name);
    s.kind = kind;
    s.params = std::move(params);
    for (const auto& [k, v] : expected.items()) {
        Expectation e{k, std::nullopt, std::nullopt};
        if (v.contains("min")) e.min = v["min"].get<double>();
        if (v.contains("max")) e.max = v["max"].get<double>();
        s.expected.push_back(e);
    }
    return s;
}

// ---------------------------------------------------------------------------

void energy(CriterionResult& r, const Calibration&, const AcceptanceOptions&) {
    const double out = sfg_output_wavelength(1311.0, 514.5);
    const double sig = spdc_signal_wavelength(514.5, 1311.0).nm;
    const auto gap = energy_gap(369.5, 1311.0);
    const double dev_ev = std::abs(gap.ev / 2.41 - 1), dev_thz = std::abs(gap.thz / 582.6 - 1);
    r.passed = out >= 369.4 && out <= 369.6 && sig >= 846.5 && sig <= 847.5 && dev_ev <= 0.02 && dev_thz <= 0.02;
    r.detail = fmt("output %.4f nm, signal %.4f nm, gap %.4f eV / %.2f THz (dev %.2f%% / %.2f%%)", out, sig, gap.ev,
                   gap.thz, 100 * dev_ev, 100 * dev_thz);
}

void fock_exactness(CriterionResult& r, const Calibration&, const AcceptanceOptions& opt) {
    using C = std::complex<double>;
    Rng rng(derive_seed(opt.seed, {2}));
    double unitarity = 0;
    const FockBasis b3(3);
    for (int k = 0; k < 12; ++k) {
        CouplingParams<double> p;
        p.kappa = 2 * rng.uniform();
        p.gamma = 2 * rng.uniform();
        p.pump_amplitude = std::polar(1.5 * rng.uniform(), 6.283185307179586 * rng.uniform());
        const double t = 3 * rng.uniform();
        const auto hq = build_qfc_hamiltonian<double>(b3, p);
        const auto hs = build_spdc_hamiltonian<double>(b3, p);
        const ComplexMatrix<double> hj = hq + hs;
        for (const auto* h : {&hq, &hs, &hj})
            unitarity = std::max(unitarity, unitarity_defect(evolution_operator<double>(*h, t)));
    }

    double conversion = 0;
    const FockBasis b1(1);
    CouplingParams<double> unit;
    unit.kappa = 1;
    const auto hq = build_qfc_hamiltonian<double>(b1, unit);
    const auto in = FockState<double>::basis_state(b1, 0, 1, 0);
    for (int k = 0; k <= 64; ++k) {
        const double theta = phys::pi * k / 64.0;
        const double s = std::sin(theta);
        conversion = std::max(conversion, std::abs(evolve<double>(in, hq, theta).population(0, 0, 1) - s * s));
    }

    double pair_dev = 0, conv_dev = 0, trunc = 0, trunc_cross = 0;
    for (double g : {0.01, 0.03, 0.05})
        for (double kap : {0.01, 0.03, 0.05}) {
            CouplingParams<double> p;
            p.kappa = kap;
            p.gamma = g;
            p.pump_amplitude = C(1, 0);
            const auto st = cascaded_evolution<double>(b3, p);
            pair_dev = std::max(pair_dev, std::abs(std::abs(st.amplitude(1, 1, 0)) / g - 1));
            conv_dev = std::max(conv_dev, std::abs(std::abs(st.amplitude(1, 0, 1)) / (g * kap) - 1));
            trunc = std::max(trunc, cascaded_observables_checked<double>(3, p).max_change);
            // Same comparison restricted to photon numbers and the s-i / s-o cross-correlations.
            const auto lo = correlation_observables(st);
            const auto hi = correlation_observables(cascaded_evolution<double>(FockBasis(4), p));
            for (int m = 0; m < 3; ++m)
                trunc_cross = std::max(trunc_cross, std::abs(lo.mean_photons[m] - hi.mean_photons[m]));
            trunc_cross = std::max({trunc_cross, std::abs(*lo.g2_signal_idler / *hi.g2_signal_idler - 1),
                                    std::abs(*lo.g2_signal_output / *hi.g2_signal_output - 1)});
        }
    r.passed = unitarity < 1e-10 && conversion < 1e-8 && pair_dev < 0.05 && conv_dev < 0.05 && trunc < 1e-6;
    r.detail = fmt("unitarity %.2e, sin^2 error %.2e, amplitude deviations %.2f%% / %.2f%%, truncation %.2e "
                   "(%.2e excluding auto-correlations)",
                   unitarity, conversion, 100 * pair_dev, 100 * conv_dev, trunc, trunc_cross);
}

void efficiency(CriterionResult& r, const Calibration& cal, const AcceptanceOptions&) {
    const double ext = conversion_efficiency(200, cal.model, false, cal.losses);
    const double in = conversion_efficiency(200, cal.model, true, cal.losses);
    double peak = 0;
    for (int p = 0; p <= 1000; p += 5) peak = std::max(peak, conversion_efficiency(p, cal.model, true, cal.losses));
    r.passed = std::abs(ext - 0.055) <= 0.005 && std::abs(in - 0.105) <= 0.01 &&
               peak < cal.model.pulsed_efficiency_ceiling;
    r.detail = fmt("eta_ext(200) %.4f, eta_int(200) %.4f, max eta_int(0..1000 mW) %.4f (ceiling %.2f)", ext, in, peak,
                   cal.model.pulsed_efficiency_ceiling);
}

void noise_scaling(CriterionResult& r, const Calibration& cal, const AcceptanceOptions& opt) {
    const auto& s = reference_scenario("noise_scaling");
    const auto res = simulate_noise_sweep(cal, parse_noise_sweep(s), scenario_seed(s, opt.seed), opt.threads);
    double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
    for (const auto& f : res.fits) {
        const int k = f.stack == "unfiltered" ? 0 : 1;
        lo[k] = std::min(lo[k], f.fit.exponent);
        hi[k] = std::max(hi[k], f.fit.exponent);
    }
    r.passed = lo[0] >= 1.85 && hi[0] <= 2.15 && lo[1] >= 0.85 && hi[1] <= 1.15;
    r.detail = fmt("%zu fits; unfiltered exponent in [%.4f, %.4f], etalon in [%.4f, %.4f]", res.fits.size(), lo[0],
                   hi[0], lo[1], hi[1]);
}

void noise_floor(CriterionResult& r, const Calibration& cal, const AcceptanceOptions&) {
    const double dark = noise_rate(0.0, cal.stack({"uv_bandpass"}), cal.model);
    const auto n = noise_breakdown(200, cal.stack({"uv_bandpass", "ion_line"}), cal.model);
    const double ion = n.residual + n.cascaded;
    r.passed = dark == 13.0 && std::abs(ion - 1.3) <= 0.3;
    r.detail = fmt("noise(P=0) %.17g Hz, ion-line noise(200 mW) %.4f Hz", dark, ion);
}

void snr(CriterionResult& r, const Calibration& cal, const AcceptanceOptions& opt) {
    const auto& s = reference_scenario("snr_vs_pump");
    const auto rows = simulate_rate_sweep(cal, parse_rate_sweep(s), scenario_seed(s, opt.seed), opt.threads);
    if (rows.empty()) throw ConfigError("SNR sweep has no points");
    double min_low = INFINITY, at_200 = NAN;
    bool decreasing = true;
    int beyond = 0;
    const RateSweepRow* prev = nullptr;
    for (const auto& row : rows) {
        if (row.pump_mw <= 200) min_low = std::min(min_low, row.measured.snr);
        if (row.pump_mw == 200) at_200 = row.measured.snr;
        if (row.pump_mw >= 200) {
            if (prev && !(row.measured.snr < prev->measured.snr)) decreasing = false;
            if (prev) ++beyond;
            prev = &row;
        }
    }
    r.passed = min_low >= 2 && decreasing && beyond > 0;
    r.detail = fmt("min SNR (P <= 200 mW) %.3f; SNR(200) %.3f -> SNR(%.0f) %.3f, %s over %d steps", min_low, at_200,
                   rows.back().pump_mw, rows.back().measured.snr, decreasing ? "decreasing" : "NOT decreasing", beyond);
}

void correlator(CriterionResult& r, const Calibration&, const AcceptanceOptions& opt) {
    Rng rng(derive_seed(opt.seed, {7}));
    int cases = 0, mismatches = 0;
    std::size_t largest = 0;
    auto make_stream = [&](std::size_t n, int mode, timestamp_ps span) {
        TagStream s;
        s.duration_ps = span;
        for (std::size_t k = 0; k < n; ++k) {
            timestamp_ps t = static_cast<timestamp_ps>(rng.uniform() * static_cast<double>(span));
            if (mode == 1) t -= t % 100;  // coarse grid: ties within and across streams
            s.tags.push_back(t);
        }
        if (mode == 2) {  // bursts of near-simultaneous tags
            const std::size_t base = s.tags.size();
            for (std::size_t k = 0; k < base / 4; ++k) {
                const auto centre = s.tags[k];
                const int len = 1 + static_cast<int>(rng.uniform() * 6);
                for (int j = 0; j < len && s.tags.size() < n + base / 2; ++j)
                    s.tags.push_back(centre + static_cast<timestamp_ps>(rng.uniform() * 12));
            }
        }
        std::sort(s.tags.begin(), s.tags.end());
        return s;
    };
    static const timestamp_ps widths[] = {1, 7, 100, 165, 1000};
    for (int c = 0; c < 200; ++c) {
        // Case 0 is the largest (10^5 tags in total); the rest are log-uniform.
        const auto total = c == 0 ? std::size_t{100000}
                                  : static_cast<std::size_t>(std::pow(10.0, 5.0 * rng.uniform()));
        const std::size_t na = std::max<std::size_t>(1, total / 2), nb = std::max<std::size_t>(1, total - total / 2);
        const int mode = static_cast<int>(rng.uniform() * 3);
        const timestamp_ps span = 1 + static_cast<timestamp_ps>(std::pow(10.0, 3 + 6 * rng.uniform()));
        const auto a = make_stream(na, mode, span);
        auto b = make_stream(nb, mode, span);
        if (c % 4 == 0)  // exact copies shifted onto bin edges
            for (std::size_t k = 0; k < std::min(a.size(), b.size()); k += 3) b.tags[k] = a.tags[k] + 165;
        std::sort(b.tags.begin(), b.tags.end());
        const timestamp_ps w = widths[static_cast<int>(rng.uniform() * 5)];
        const auto bins = 3 + static_cast<timestamp_ps>(rng.uniform() * 400);
        const timestamp_ps lo = -static_cast<timestamp_ps>(rng.uniform() * static_cast<double>(bins)) * w +
                                static_cast<timestamp_ps>(rng.uniform() * 3) - 1;
        const auto fast = coincidence_histogram(a, b, w, lo, lo + bins * w);
        const auto slow = coincidence_histogram_all_pairs(a, b, w, lo, lo + bins * w);
        ++cases;
        if (!(fast == slow)) ++mismatches;
        largest = std::max(largest, a.size() + b.size());
    }
    r.passed = mismatches == 0 && cases >= 200;
    r.detail = fmt("%d randomized cases (largest %zu tags), %d mismatches", cases, largest, mismatches);
}

void nonclassicality(CriterionResult& r, const Calibration& cal, const AcceptanceOptions& opt) {
    const auto& a = reference_scenario("coincidence_signal_idler");
    const auto& b = reference_scenario("coincidence_signal_output");
    const auto pa = parse_coincidence(a);
    const auto pb = parse_coincidence(b);
    const auto si = simulate_coincidences(cal, pa, Channel::idler, scenario_seed(a, opt.seed), opt.threads);
    const auto so = simulate_coincidences(cal, pb, Channel::output, scenario_seed(b, opt.seed), opt.threads);
    const bool ok_a = si.g2.g2 > 10 && si.significance >= 3;
    const bool ok_b = so.g2.g2 > 2 && so.cauchy_schwarz.sigma_violation >= 5;
    r.passed = ok_a && ok_b;
    r.detail = fmt("g2_si = %.1f +- %.1f (%.1f sigma above 10); g2_so = %.2f +- %.2f (%.1f sigma above CS bound %.0f)",
                   si.g2.g2, si.g2.sigma, si.significance, so.g2.g2, so.g2.sigma, so.cauchy_schwarz.sigma_violation,
                   so.cauchy_schwarz.bound);
}

void spectrum(CriterionResult& r, const Calibration& cal, const AcceptanceOptions& opt) {
    const auto& s = reference_scenario("noise_spectrum_200mw");
    const auto res = simulate_noise_spectrum(cal, parse_noise_spectrum(s), scenario_seed(s, opt.seed));
    const auto& u = res.summary.front();
    const bool peak_ok = u.peak_nm >= 369.4 && u.peak_nm <= 369.6;
    const bool shape_ok = std::abs(u.fwhm_nm / res.expected_fwhm_nm - 1) <= 0.2;
    r.passed = peak_ok && shape_ok && res.suppression >= 100;
    r.detail = fmt("peak %.2f nm, FWHM %.3f nm (sinc^2 envelope %.3f nm), peak/floor %.1f -> %.2f, suppression "
                   "%.1fx (need 100x)",
                   u.peak_nm, u.fwhm_nm, res.expected_fwhm_nm, u.peak_to_floor, res.summary.back().peak_to_floor,
                   res.suppression);
}

void throughput(CriterionResult& r, const Calibration&, const AcceptanceOptions& opt) {
    const std::size_t n = 10'000'000;
    const timestamp_ps span = 10 * kPsPerSecond;
    Rng rng(derive_seed(opt.seed, {10}));
    TagStream a, b;
    a.duration_ps = b.duration_ps = span;
    a.channel = 0;
    b.channel = 1;
    a.tags.reserve(n);
    b.tags.reserve(n);
    const double mean_gap = static_cast<double>(span) / static_cast<double>(n);
    double t = 0;
    while (a.tags.size() < n) {
        t += rng.exponential(1.0 / mean_gap);
        a.tags.push_back(static_cast<timestamp_ps>(t));
    }
    // Half of b is a jittered copy of a, the rest uncorrelated.
    for (std::size_t k = 0; k < n; ++k)
        b.tags.push_back(k % 2 ? static_cast<timestamp_ps>(rng.uniform() * static_cast<double>(span))
                               : a.tags[k] + static_cast<timestamp_ps>(300 * rng.normal()));
    std::sort(b.tags.begin(), b.tags.end());

    const auto t0 = std::chrono::steady_clock::now();
    const auto single = coincidence_histogram(a, b, 100, -10000, 10000);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
    const bool same = coincidence_histogram_parallel(a, b, 100, -10000, 10000, hw, 64) == single &&
                      coincidence_histogram_parallel(a, b, 100, -10000, 10000, 3, 7) == single;
    r.passed = secs < 10 && same;
    r.detail = fmt("2 x %zu tags, +-10 ns window: %.2f s single-core, %lld coincidences; parallel slicing %s", n, secs,
                   static_cast<long long>(single.total()), same ? "identical" : "DIFFERS");
}

using Fn = void (*)(CriterionResult&, const Calibration&, const AcceptanceOptions&);
struct Entry {
    const char* name;
    Fn fn;
};
const Entry kEntries[kCriterionCount] = {
    {"energy conservation", energy},
    {"fock-engine exactness", fock_exactness},
    {"efficiency calibration", efficiency},
    {"noise scaling", noise_scaling},
    {"noise floor anchors", noise_floor},
    {"SNR", snr},
    {"correlator correctness", correlator},
    {"non-classicality", nonclassicality},
    {"spectrum shape", spectrum},
    {"throughput", throughput},
};

}  // namespace

const char* criterion_name(int id) {
    if (id < 1 || id > kCriterionCount) throw std::out_of_range("criterion id");
    return kEntries[id - 1].name;
}

CriterionResult run_criterion(int id, const Calibration& cal, const AcceptanceOptions& opt) {
    CriterionResult r;
    r.id = id;
    r.name = criterion_name(id);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        kEntries[id - 1].fn(r, cal, opt);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CriterionResult> run_acceptance(const Calibration& cal, const AcceptanceOptions& opt,
                                            const std::function<void(const CriterionResult&)>& on_result) {
    std::vector<CriterionResult> out;
    for (int id = 1; id <= kCriterionCount; ++id) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), id) == opt.only.end()) continue;
        out.push_back(run_criterion(id, cal, opt));
        if (on_result) on_result(out.back());
    }
    return out;
}

std::string format_result(const CriterionResult& r) {
    return fmt("[%s] %2d %-24s (%6.1f s) %s", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
               r.detail.c_str());
}

std::vector<Scenario> reference_scenarios() {
    std::vector<double> sweep;
    for (int p = 25; p <= 400; p += 25) sweep.push_back(p);
    return {
        make("snr_vs_pump", ScenarioKind::snr_sweep,
             {{"powers_mw", sweep}, {"filters", {"uv_bandpass", "etalon"}}, {"duration_s", 10.0}},
             {{"min_snr_upto_200", {{"min", 2.0}}}, {"snr_decreasing_above_200", {{"min", 1}}}}),
        make("efficiency_vs_pump", ScenarioKind::efficiency_sweep,
             {{"powers_mw", sweep}, {"filters", {"uv_bandpass", "etalon"}}, {"duration_s", 5.0}},
             {{"eta_ext_model@200", {{"min", 0.05}, {"max", 0.06}}},
              {"eta_int_model@200", {{"min", 0.095}, {"max", 0.115}}},
              {"eta_ext@200", {{"min", 0.05}, {"max", 0.06}}},
              {"max_eta_int_model", {{"max", 0.30}}}}),
        make("noise_scaling", ScenarioKind::noise_sweep,
             {{"powers_mw", log_powers(25, 400, 9)},
              {"stacks",
               {{{"label", "unfiltered"}, {"filters", {"uv_bandpass"}}},
                {{"label", "etalon"}, {"filters", {"uv_bandpass", "etalon"}}}}},
              {"seeds", 20},
              {"counts_per_point", 2e4}},
             {{"exponent_unfiltered_min", {{"min", 1.85}}},
              {"exponent_unfiltered_max", {{"max", 2.15}}},
              {"exponent_etalon_min", {{"min", 0.85}}},
              {"exponent_etalon_max", {{"max", 1.15}}}}),
        make("noise_spectrum_200mw", ScenarioKind::noise_spectrum,
             {{"pump_mw", 200.0},
              {"lambda_min_nm", 365.0},
              {"lambda_max_nm", 374.0},
              {"step_nm", 0.05},
              {"stacks", {{{"label", "unfiltered"}, {"filters", json::array()}}, {{"label", "etalon"}, {"filters", {"etalon"}}}}},
              {"spectrometer", "spectrometer"},
              {"integration_s", 10.0}},
             {{"peak_nm_unfiltered", {{"min", 369.4}, {"max", 369.6}}}, {"suppression", {{"min", 100.0}}}}),
        make("coincidence_signal_idler", ScenarioKind::coincidence_si,
             {{"pump_mw", 0.4},
              {"duration_s", 30.0},
              {"bin_ps", 165},
              {"tau_min_ps", -24750},
              {"tau_max_ps", 24750},
              {"signal", channel({"signal_bandpass"}, 0.01, 2500.0)},
              {"idler", channel({}, 0.02, 20000.0)}},
             {{"g2", {{"min", 10.0}}}, {"significance", {{"min", 3.0}}}}),
        make("coincidence_signal_output", ScenarioKind::coincidence_so,
             {{"pump_mw", 200.0},
              {"duration_s", 20.0},
              {"bin_ps", 165},
              {"tau_min_ps", -24750},
              {"tau_max_ps", 24750},
              {"signal", channel({"signal_vbg"}, 0.005, 2500.0)},
              {"output", channel({"uv_bandpass"}, std::nullopt, 13.0)}},
             {{"g2", {{"min", 2.0}}}, {"cs_sigma_violation", {{"min", 5.0}}}}),
        make("cascade_amplitudes", ScenarioKind::fock_demo,
             {{"n_max", 3}, {"kappa_t", 0.05}, {"gamma_t", 0.05}, {"pump_amplitudes", {0.25, 0.5, 0.75, 1.0}}},
             {{"power_exponent", {{"min", 1.98}, {"max", 2.02}}}, {"max_ratio_deviation", {{"max", 0.05}}}}),
    };
}

const Scenario& reference_scenario(const std::string& name) {
    static const std::vector<Scenario> all = reference_scenarios();
    for (const auto& s : all)
        if (s.name == name) return s;
    throw ConfigError("no reference scenario '" + name + "'");
}

}  // namespace qfc
