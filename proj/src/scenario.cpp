#include "qfc/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "qfc/errors.hpp"
#include "qfc/fock.hpp"
#include "qfc/rng.hpp"

namespace qfc {

namespace fs = std::filesystem;

const char* scenario_kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::efficiency_sweep: return "efficiency_sweep";
        case ScenarioKind::snr_sweep: return "snr_sweep";
        case ScenarioKind::noise_sweep: return "noise_sweep";
        case ScenarioKind::noise_spectrum: return "noise_spectrum";
        case ScenarioKind::coincidence_si: return "coincidence_si";
        case ScenarioKind::coincidence_so: return "coincidence_so";
        case ScenarioKind::fock_demo: return "fock_demo";
    }
    return "?";
}

ScenarioKind scenario_kind_from_name(const std::string& name) {
    for (auto k : {ScenarioKind::efficiency_sweep, ScenarioKind::snr_sweep, ScenarioKind::noise_sweep,
                   ScenarioKind::noise_spectrum, ScenarioKind::coincidence_si, ScenarioKind::coincidence_so,
                   ScenarioKind::fock_demo})
        if (name == scenario_kind_name(k)) return k;
    throw ConfigError("unknown scenario kind '" + name + "'");
}

namespace {

std::string num(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

// Runs fn(0..n-1) on a small pool; results must be written to disjoint slots.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
            (void)w;
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

ScenarioConfig uv_only(const Calibration& cal, double pump_mw, const std::vector<SpectralFilter>& filters) {
    ScenarioConfig sc = ScenarioConfig::defaults(cal.model, cal.losses);
    sc.pump_mw = pump_mw;
    sc.input_flux = 0;
    sc.channel(Channel::output).filters = filters;
    return sc;
}

double measured_rate(const TagStream& s, double dead_time_ns) {
    return dead_time_corrected_rate(s.rate(), dead_time_ns);
}

// Poisson variate by counting unit-rate arrivals; normal approximation for
// large means where that loop would be slow.
std::int64_t poisson(double mean, Rng& rng) {
    if (!(mean > 0)) return 0;
    if (mean > 1e5) return std::max<std::int64_t>(0, std::llround(mean + std::sqrt(mean) * rng.normal()));
    std::int64_t k = 0;
    for (double t = rng.exponential(1.0); t < mean; t += rng.exponential(1.0)) ++k;
    return k;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<RateSweepRow> simulate_rate_sweep(const Calibration& cal, const RateSweepParams& p, std::uint64_t seed,
                                              unsigned threads) {
    const auto filters = cal.stack(p.filters);
    const bool etalon = has_etalon(filters);
    const auto factors = noise_filter_factors(filters, cal.model);
    std::vector<RateSweepRow> rows(p.powers_mw.size());
    parallel_for(rows.size(), threads, [&](std::size_t k) {
        const double pw = p.powers_mw[k];
        auto sc = uv_only(cal, pw, filters);
        sc.duration_s = p.duration_s;
        const double dead = sc.channel(Channel::output).dead_time_ns;
        RateSweepRow& r = rows[k];
        r.pump_mw = pw;
        sc.seed = derive_seed(seed, {k, 0});
        r.without_input_hz = measured_rate(generate_streams(sc, cal.model, 1)[2], dead);
        sc.seed = derive_seed(seed, {k, 1});
        sc.input_flux = cal.model.input_flux;
        r.with_input_hz = measured_rate(generate_streams(sc, cal.model, 1)[2], dead);
        r.measured = rate_metrics(r.with_input_hz, r.without_input_hz, cal.model.input_flux, cal.losses, etalon,
                                  cal.losses.mode_matching);
        r.eta_int_model = conversion_efficiency(pw, cal.model, true, cal.losses);
        r.eta_ext_model = conversion_efficiency(pw, cal.model, false, cal.losses);
        r.snr_model = detected_signal_rate(cal.model, pw, cal.losses, filters) /
                      noise_breakdown(pw, factors, cal.model).total();
    });
    return rows;
}

NoiseSweepResult simulate_noise_sweep(const Calibration& cal, const NoiseSweepParams& p, std::uint64_t seed,
                                      unsigned threads) {
    const std::size_t ns = p.stacks.size(), np = p.powers_mw.size(), nseed = static_cast<std::size_t>(p.seeds);
    // Model rates per (stack, power) are seed-independent.
    std::vector<double> durations(ns * np), model(ns * np);
    std::vector<std::vector<SpectralFilter>> stacks;
    for (std::size_t s = 0; s < ns; ++s) {
        stacks.push_back(cal.stack(p.stacks[s].second));
        const auto factors = noise_filter_factors(stacks[s], cal.model);
        for (std::size_t k = 0; k < np; ++k) {
            const auto n = noise_breakdown(p.powers_mw[k], factors, cal.model);
            model[s * np + k] = n.residual + n.cascaded;
            durations[s * np + k] = p.counts_per_point / n.total();
        }
    }
    NoiseSweepResult res;
    res.points.resize(ns * nseed * np);
    parallel_for(res.points.size(), threads, [&](std::size_t idx) {
        const std::size_t s = idx / (nseed * np), r = (idx / np) % nseed, k = idx % np;
        auto sc = uv_only(cal, p.powers_mw[k], stacks[s]);
        sc.channel(Channel::output).dead_time_ns = p.dead_time_ns;
        sc.duration_s = durations[s * np + k];
        sc.slice_s = sc.duration_s;
        sc.seed = derive_seed(seed, {s, r, k});
        const auto stream = generate_streams(sc, cal.model, 1)[2];
        NoiseSweepPoint& pt = res.points[idx];
        pt.stack = p.stacks[s].first;
        pt.seed_index = static_cast<int>(r);
        pt.pump_mw = p.powers_mw[k];
        pt.duration_s = stream.duration_s();
        pt.counts = static_cast<std::int64_t>(stream.size());
        pt.corrected_hz = measured_rate(stream, p.dead_time_ns);
        pt.dark_subtracted_hz = pt.corrected_hz - sc.channel(Channel::output).dark_rate;
        pt.model_hz = model[s * np + k];
    });
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t r = 0; r < nseed; ++r) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t k = 0; k < np; ++k) {
                const auto& pt = res.points[(s * nseed + r) * np + k];
                pts.emplace_back(pt.pump_mw, pt.dark_subtracted_hz);
            }
            res.fits.push_back({p.stacks[s].first, static_cast<int>(r), power_law_fit(pts)});
        }
    return res;
}

NoiseSpectrumResult simulate_noise_spectrum(const Calibration& cal, const NoiseSpectrumParams& p, std::uint64_t seed) {
    NoiseSpectrumResult res;
    const auto n = static_cast<std::size_t>(std::llround((p.lambda_max_nm - p.lambda_min_nm) / p.step_nm)) + 1;
    for (std::size_t k = 0; k < n; ++k) res.wavelength_nm.push_back(p.lambda_min_nm + static_cast<double>(k) * p.step_nm);
    std::vector<double> grid(n);  // ascending frequency
    for (std::size_t k = 0; k < n; ++k) grid[k] = frequency_thz(res.wavelength_nm[n - 1 - k]);
    const auto& spec = cal.filter(p.spectrometer);

    const double center_nm = cal.model.triple().output_nm;
    const double pm_nm = center_nm * center_nm * cal.model.noise_bandwidth_ghz * 1e-3 / phys::c_nm_thz;
    const double res_nm = center_nm * center_nm * spec.fwhm_ghz * 1e-3 / phys::c_nm_thz;
    res.expected_fwhm_nm = std::hypot(pm_nm, res_nm);

    for (std::size_t s = 0; s < p.stacks.size(); ++s) {
        auto by_freq = noise_spectrum(p.pump_mw, cal.stack(p.stacks[s].second), cal.model, grid, spec);
        std::vector<double> m(by_freq.rbegin(), by_freq.rend());
        Rng rng(derive_seed(seed, {s}));
        std::vector<std::int64_t> counts(n);
        for (std::size_t k = 0; k < n; ++k) counts[k] = poisson(m[k] * p.integration_s, rng);

        SpectrumSummary sum;
        sum.stack = p.stacks[s].first;
        const auto top = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
        sum.peak_nm = res.wavelength_nm[top];
        sum.peak = m[top];
        sum.floor = INFINITY;
        for (std::size_t k = 0; k < n; ++k) {
            const double off = std::abs(res.wavelength_nm[k] - sum.peak_nm);
            if (off >= p.floor_offset_lo_nm && off <= p.floor_offset_hi_nm) sum.floor = std::min(sum.floor, m[k]);
        }
        sum.peak_to_floor = sum.floor > 0 ? sum.peak / sum.floor : INFINITY;
        // Half-maximum crossings by linear interpolation.
        const double half = 0.5 * sum.peak;
        auto crossing = [&](std::size_t from, int dir) {
            std::size_t k = from;
            while (true) {
                const std::size_t nxt = dir > 0 ? k + 1 : k - 1;
                if ((dir > 0 && nxt >= n) || (dir < 0 && k == 0)) return res.wavelength_nm[k];
                if (m[nxt] < half) {
                    const double f = (m[k] - half) / (m[k] - m[nxt]);
                    return res.wavelength_nm[k] + f * (res.wavelength_nm[nxt] - res.wavelength_nm[k]);
                }
                k = nxt;
            }
        };
        sum.fwhm_nm = crossing(top, +1) - crossing(top, -1);
        res.model.push_back(std::move(m));
        res.counts.push_back(std::move(counts));
        res.summary.push_back(sum);
    }
    if (res.summary.size() >= 2) res.suppression = res.summary.front().peak_to_floor / res.summary.back().peak_to_floor;
    return res;
}

CoincidenceResult simulate_coincidences(const Calibration& cal, const CoincidenceParams& p, Channel partner,
                                        std::uint64_t seed, unsigned threads) {
    if (partner == Channel::signal) throw ConfigError("coincidences: partner must be idler or output");
    ScenarioConfig sc = ScenarioConfig::defaults(cal.model, cal.losses);
    sc.pump_mw = p.pump_mw;
    sc.input_flux = 0;
    sc.duration_s = p.duration_s;
    sc.slice_s = p.slice_s;
    sc.seed = seed;
    auto setup = [&](Channel c, const ChannelSpec& spec) {
        auto& ch = sc.channel(c);
        ch.enabled = true;
        ch.filters = cal.stack(spec.filters);
        ch.transmission = spec.transmission.value_or(cal.losses.detection_path());
        ch.dark_rate = spec.dark_rate;
        ch.jitter_fwhm_ps = spec.jitter_fwhm_ps;
        ch.dead_time_ns = spec.dead_time_ns;
        ch.offset_ps = spec.offset_ps;
    };
    sc.channel(Channel::output).enabled = false;
    setup(Channel::signal, p.signal);
    setup(partner, p.partner);

    CoincidenceResult res;
    res.predicted = predicted_rates(sc, cal.model);
    const auto streams = generate_streams(sc, cal.model, threads);
    const auto& a = streams[static_cast<int>(Channel::signal)];
    const auto& b = streams[static_cast<int>(partner)];
    res.singles_signal_hz = a.rate();
    res.singles_partner_hz = b.rate();
    res.histogram = coincidence_histogram_parallel(a, b, p.bin_ps, p.tau_min_ps, p.tau_max_ps, threads);
    res.g2 = g2_auto(res.histogram, p.peak_method);
    res.cauchy_schwarz = cauchy_schwarz_test(res.g2);
    res.significance = (res.g2.g2 - p.threshold) / res.g2.sigma;
    res.signal_stream = a;
    res.partner_stream = b;
    return res;
}

FockDemoResult run_fock_demo(const FockDemoParams& p) {
    FockDemoResult res;
    const FockBasis basis(p.n_max);
    std::vector<std::pair<double, double>> pts;
    for (double amp : p.pump_amplitudes) {
        CouplingParams<double> cp;
        cp.kappa = p.kappa_t;
        cp.gamma = p.gamma_t;
        cp.pump_amplitude = amp;
        cp.interaction_time = 1.0;
        const auto state = cascaded_evolution<double>(basis, cp);
        const auto checked = cascaded_observables_checked<double>(p.n_max, cp);
        FockDemoRow r;
        r.pump_amplitude = amp;
        r.amp_pair = std::abs(state.amplitude(1, 1, 0));
        r.amp_converted = std::abs(state.amplitude(1, 0, 1));
        r.ratio_over_angle = r.amp_pair > 0 ? (r.amp_converted / r.amp_pair) / (p.kappa_t * amp) : 0.0;
        r.pop_converted = state.population(1, 0, 1);
        r.g2_signal_output = checked.observables.g2_signal_output.value_or(NAN);
        r.truncation_change = checked.max_change;
        res.rows.push_back(r);
        pts.emplace_back(amp * amp, r.pop_converted);
    }
    res.power_exponent = power_law_fit(pts).exponent;
    return res;
}

// ---------------------------------------------------------------------------
// Parameter parsing

namespace {

class ParamReader {
public:
    explicit ParamReader(const Scenario& s) : s_(s), j_(s.params) {
        if (!j_.is_object()) fail("params must be an object");
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError("scenario '" + s_.name + "': " + msg); }

    bool has(const char* key) {
        used_.insert(key);
        return j_.contains(key);
    }
    template <class T>
    T get(const char* key, T def) {
        if (!has(key)) return def;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            fail(std::string("bad value for '") + key + "'");
        }
    }
    template <class T>
    T require(const char* key) {
        if (!has(key)) fail(std::string("missing '") + key + "'");
        return get<T>(key, T{});
    }
    const json& raw(const char* key) {
        used_.insert(key);
        return j_.at(key);
    }
    std::vector<double> powers(bool allow_zero) {
        auto v = require<std::vector<double>>("powers_mw");
        if (v.empty()) fail("empty sweep list 'powers_mw'");
        for (double x : v)
            if (!(allow_zero ? x >= 0 : x > 0) || !std::isfinite(x)) fail("invalid pump power " + num(x));
        return v;
    }
    std::vector<NamedStack> stacks(std::vector<NamedStack> def) {
        if (!has("stacks")) return def;
        const json& a = raw("stacks");
        if (!a.is_array() || a.empty()) fail("'stacks' must be a non-empty array");
        std::vector<NamedStack> out;
        std::set<std::string> seen;
        for (const auto& e : a) {
            if (!e.is_object() || !e.contains("label") || !e.contains("filters"))
                fail("each stack needs 'label' and 'filters'");
            try {
                out.emplace_back(e.at("label").get<std::string>(), e.at("filters").get<std::vector<std::string>>());
            } catch (const json::exception&) {
                fail("malformed stack entry");
            }
            if (!seen.insert(out.back().first).second) fail("duplicate stack label '" + out.back().first + "'");
        }
        return out;
    }
    ChannelSpec channel(const char* key) {
        if (!has(key)) fail(std::string("missing channel '") + key + "'");
        const json& c = raw(key);
        if (!c.is_object()) fail(std::string("channel '") + key + "' must be an object");
        static const std::set<std::string> allowed{"filters", "transmission", "dark_rate", "jitter_fwhm_ps",
                                                   "dead_time_ns", "offset_ps"};
        for (const auto& [k, v] : c.items())
            if (!allowed.count(k)) fail(std::string("channel '") + key + "': unknown key '" + k + "'");
        ChannelSpec ch;
        try {
            if (c.contains("filters")) ch.filters = c["filters"].get<std::vector<std::string>>();
            if (c.contains("transmission")) ch.transmission = c["transmission"].get<double>();
            if (c.contains("dark_rate")) ch.dark_rate = c["dark_rate"].get<double>();
            if (c.contains("jitter_fwhm_ps")) ch.jitter_fwhm_ps = c["jitter_fwhm_ps"].get<double>();
            if (c.contains("dead_time_ns")) ch.dead_time_ns = c["dead_time_ns"].get<double>();
            if (c.contains("offset_ps")) ch.offset_ps = c["offset_ps"].get<timestamp_ps>();
        } catch (const json::exception&) {
            fail(std::string("channel '") + key + "': bad value");
        }
        if (ch.transmission && !(*ch.transmission >= 0 && *ch.transmission <= 1))
            fail(std::string("channel '") + key + "': transmission outside [0, 1]");
        if (!(ch.dark_rate >= 0) || !(ch.jitter_fwhm_ps >= 0) || !(ch.dead_time_ns >= 0))
            fail(std::string("channel '") + key + "': negative rate, jitter or dead time");
        return ch;
    }
    void positive(const char* what, double v) {
        if (!(v > 0) || !std::isfinite(v)) fail(std::string("'") + what + "' must be positive");
    }
    void done() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) fail("unknown parameter '" + k + "'");
    }

private:
    const Scenario& s_;
    const json& j_;
    std::set<std::string> used_;
};

void require_kind(const Scenario& s, std::initializer_list<ScenarioKind> kinds) {
    for (auto k : kinds)
        if (s.kind == k) return;
    throw ConfigError("scenario '" + s.name + "': parameters do not match kind " + scenario_kind_name(s.kind));
}

}  // namespace

RateSweepParams parse_rate_sweep(const Scenario& s) {
    require_kind(s, {ScenarioKind::efficiency_sweep, ScenarioKind::snr_sweep});
    ParamReader r(s);
    RateSweepParams p;
    p.powers_mw = r.powers(true);
    p.filters = r.get("filters", p.filters);
    p.duration_s = r.get("duration_s", p.duration_s);
    r.positive("duration_s", p.duration_s);
    r.done();
    return p;
}

NoiseSweepParams parse_noise_sweep(const Scenario& s) {
    require_kind(s, {ScenarioKind::noise_sweep});
    ParamReader r(s);
    NoiseSweepParams p;
    p.powers_mw = r.powers(false);
    if (p.powers_mw.size() < 3) r.fail("a power-law fit needs at least 3 powers");
    p.stacks = r.stacks(p.stacks);
    p.seeds = r.get("seeds", p.seeds);
    p.counts_per_point = r.get("counts_per_point", p.counts_per_point);
    p.dead_time_ns = r.get("dead_time_ns", p.dead_time_ns);
    if (p.seeds < 1) r.fail("'seeds' must be >= 1");
    r.positive("counts_per_point", p.counts_per_point);
    if (!(p.dead_time_ns >= 0)) r.fail("'dead_time_ns' must be >= 0");
    r.done();
    return p;
}

NoiseSpectrumParams parse_noise_spectrum(const Scenario& s) {
    require_kind(s, {ScenarioKind::noise_spectrum});
    ParamReader r(s);
    NoiseSpectrumParams p;
    p.pump_mw = r.get("pump_mw", p.pump_mw);
    p.lambda_min_nm = r.get("lambda_min_nm", p.lambda_min_nm);
    p.lambda_max_nm = r.get("lambda_max_nm", p.lambda_max_nm);
    p.step_nm = r.get("step_nm", p.step_nm);
    p.stacks = r.stacks(p.stacks);
    p.spectrometer = r.get("spectrometer", p.spectrometer);
    p.integration_s = r.get("integration_s", p.integration_s);
    p.floor_offset_lo_nm = r.get("floor_offset_lo_nm", p.floor_offset_lo_nm);
    p.floor_offset_hi_nm = r.get("floor_offset_hi_nm", p.floor_offset_hi_nm);
    if (!(p.pump_mw >= 0)) r.fail("'pump_mw' must be >= 0");
    r.positive("lambda_min_nm", p.lambda_min_nm);
    r.positive("step_nm", p.step_nm);
    r.positive("integration_s", p.integration_s);
    if (!(p.lambda_max_nm > p.lambda_min_nm)) r.fail("'lambda_max_nm' must exceed 'lambda_min_nm'");
    if ((p.lambda_max_nm - p.lambda_min_nm) / p.step_nm > 1e6) r.fail("wavelength grid too fine");
    if (!(p.floor_offset_hi_nm > p.floor_offset_lo_nm && p.floor_offset_lo_nm >= 0)) r.fail("bad floor window");
    r.done();
    return p;
}

CoincidenceParams parse_coincidence(const Scenario& s) {
    require_kind(s, {ScenarioKind::coincidence_si, ScenarioKind::coincidence_so});
    const bool si = s.kind == ScenarioKind::coincidence_si;
    ParamReader r(s);
    CoincidenceParams p;
    p.threshold = si ? 10.0 : 2.0;
    p.pump_mw = r.require<double>("pump_mw");
    p.duration_s = r.get("duration_s", p.duration_s);
    p.bin_ps = r.get("bin_ps", p.bin_ps);
    p.tau_min_ps = r.get("tau_min_ps", p.tau_min_ps);
    p.tau_max_ps = r.get("tau_max_ps", p.tau_max_ps);
    p.signal = r.channel("signal");
    p.partner = r.channel(si ? "idler" : "output");
    const auto method = r.get<std::string>("peak_method", "fwhm");
    if (method == "fwhm") p.peak_method = PeakMethod::fwhm;
    else if (method == "max_bin") p.peak_method = PeakMethod::max_bin;
    else r.fail("unknown peak_method '" + method + "'");
    p.threshold = r.get("threshold", p.threshold);
    p.slice_s = r.get("slice_s", p.slice_s);
    p.save_tags = r.get("save_tags", p.save_tags);
    r.positive("pump_mw", p.pump_mw);
    r.positive("duration_s", p.duration_s);
    r.positive("slice_s", p.slice_s);
    if (p.bin_ps <= 0) r.fail("'bin_ps' must be positive");
    if (p.tau_max_ps <= p.tau_min_ps || (p.tau_max_ps - p.tau_min_ps) % p.bin_ps != 0 ||
        (p.tau_max_ps - p.tau_min_ps) / p.bin_ps < 3)
        r.fail("tau range must tile into at least 3 bins of 'bin_ps'");
    r.done();
    return p;
}

FockDemoParams parse_fock_demo(const Scenario& s) {
    require_kind(s, {ScenarioKind::fock_demo});
    ParamReader r(s);
    FockDemoParams p;
    p.n_max = r.get("n_max", p.n_max);
    p.kappa_t = r.get("kappa_t", p.kappa_t);
    p.gamma_t = r.get("gamma_t", p.gamma_t);
    p.pump_amplitudes = r.get("pump_amplitudes", p.pump_amplitudes);
    if (p.n_max < 1 || p.n_max > 12) r.fail("'n_max' must be in [1, 12]");
    r.positive("kappa_t", p.kappa_t);
    r.positive("gamma_t", p.gamma_t);
    if (p.pump_amplitudes.size() < 3) r.fail("need at least 3 pump amplitudes");
    for (double a : p.pump_amplitudes)
        if (!(a > 0)) r.fail("pump amplitudes must be positive");
    r.done();
    return p;
}

void validate_scenario(const Scenario& s, const Calibration& cal) {
    auto check_filters = [&](const std::vector<std::string>& names) {
        for (const auto& n : names)
            if (!cal.filters.count(n)) throw ConfigError("scenario '" + s.name + "': unknown filter '" + n + "'");
    };
    switch (s.kind) {
        case ScenarioKind::efficiency_sweep:
        case ScenarioKind::snr_sweep: check_filters(parse_rate_sweep(s).filters); break;
        case ScenarioKind::noise_sweep:
            for (const auto& st : parse_noise_sweep(s).stacks) check_filters(st.second);
            break;
        case ScenarioKind::noise_spectrum: {
            const auto p = parse_noise_spectrum(s);
            for (const auto& st : p.stacks) check_filters(st.second);
            check_filters({p.spectrometer});
            if (cal.filter(p.spectrometer).kind != FilterKind::gaussian_spectrometer)
                throw ConfigError("scenario '" + s.name + "': '" + p.spectrometer + "' is not a spectrometer");
            break;
        }
        case ScenarioKind::coincidence_si:
        case ScenarioKind::coincidence_so: {
            const auto p = parse_coincidence(s);
            check_filters(p.signal.filters);
            check_filters(p.partner.filters);
            break;
        }
        case ScenarioKind::fock_demo: parse_fock_demo(s); break;
    }
}

// ---------------------------------------------------------------------------
// Manifests

RunManifest manifest_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("manifest: expected an object");
    static const std::set<std::string> allowed{"schema_version", "calibration", "seed", "output_dir", "scenarios"};
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("manifest: unknown key '" + k + "'");
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
        throw ConfigError("manifest: missing schema_version");
    RunManifest m;
    m.base_dir = base_dir;
    m.schema_version = j["schema_version"].get<int>();
    if (m.schema_version != kSchemaVersion)
        throw ConfigError("manifest: unsupported schema_version " + std::to_string(m.schema_version));
    try {
        if (j.contains("calibration")) m.calibration = base_dir / j["calibration"].get<std::string>();
        if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("output_dir")) m.output_dir = j["output_dir"].get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    if (m.output_dir.is_relative()) m.output_dir = base_dir / m.output_dir;
    std::set<std::string> names;
    if (j.contains("scenarios")) {
        if (!j["scenarios"].is_array()) throw ConfigError("manifest: scenarios must be an array");
        for (const auto& sj : j["scenarios"]) {
            if (!sj.is_object()) throw ConfigError("manifest: scenario entries must be objects");
            static const std::set<std::string> skeys{"name", "kind", "params", "seed", "expected"};
            for (const auto& [k, v] : sj.items())
                if (!skeys.count(k)) throw ConfigError("manifest: unknown scenario key '" + k + "'");
            Scenario s;
            try {
                s.name = sj.at("name").get<std::string>();
                s.kind = scenario_kind_from_name(sj.at("kind").get<std::string>());
                if (sj.contains("params")) s.params = sj["params"];
                if (sj.contains("seed")) s.seed = sj["seed"].get<std::uint64_t>();
                if (sj.contains("expected")) {
                    if (!sj["expected"].is_object()) throw ConfigError("scenario '" + s.name + "': expected must be an object");
                    for (const auto& [key, lim] : sj["expected"].items()) {
                        Expectation e{key, std::nullopt, std::nullopt};
                        if (lim.contains("min")) e.min = lim["min"].get<double>();
                        if (lim.contains("max")) e.max = lim["max"].get<double>();
                        if (!e.min && !e.max) throw ConfigError("scenario '" + s.name + "': expectation '" + key + "' needs min or max");
                        s.expected.push_back(e);
                    }
                }
            } catch (const json::exception& e) {
                throw ConfigError(std::string("manifest: malformed scenario: ") + e.what());
            }
            if (s.name.empty() || s.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") != std::string::npos)
                throw ConfigError("manifest: scenario names must be non-empty [A-Za-z0-9_-]");
            if (!names.insert(s.name).second) throw ConfigError("manifest: duplicate scenario name '" + s.name + "'");
            m.scenarios.push_back(std::move(s));
        }
    }
    return m;
}

json to_json(const Scenario& s) {
    json j{{"name", s.name}, {"kind", scenario_kind_name(s.kind)}, {"params", s.params}};
    if (s.seed) j["seed"] = *s.seed;
    if (!s.expected.empty()) {
        json e = json::object();
        for (const auto& x : s.expected) {
            json lim = json::object();
            if (x.min) lim["min"] = *x.min;
            if (x.max) lim["max"] = *x.max;
            e[x.key] = lim;
        }
        j["expected"] = e;
    }
    return j;
}

RunManifest load_manifest(const fs::path& path) {
    return manifest_from_json(read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::uint64_t scenario_seed(const Scenario& s, std::uint64_t manifest_seed) {
    if (s.seed) return *s.seed;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s.name) h = (h ^ c) * 0x100000001b3ULL;
    return derive_seed(manifest_seed, {h});
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

struct Series {
    explicit Series(std::string l, std::vector<double> xs = {}, std::vector<double> ys = {})
        : label(std::move(l)), x(std::move(xs)), y(std::move(ys)) {}
    std::string label;
    std::vector<double> x, y;
};

// Minimal line plot; CSVs carry the data, this is for a quick look.
void write_svg(const fs::path& path, const std::string& title, const std::string& xlabel, const std::string& ylabel,
               const std::vector<Series>& series, bool logx, bool logy, const std::string& hash) {
    const double w = 640, h = 420, l = 70, r = 20, t = 40, b = 50;
    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if ((logx && !(s.x[k] > 0)) || (logy && !(s.y[k] > 0)) || !std::isfinite(s.y[k])) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    std::ofstream os(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<!-- config_hash=" << hash << " tool_version=" << kToolVersion << " -->\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
       << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
       << (logx ? " (log)" : "") << "</text>\n"
       << "<text x=\"16\" y=\"" << h / 2 << "\" transform=\"rotate(-90 16 " << h / 2
       << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << (logy ? " (log)" : "") << "</text>\n"
       << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << w - l - r << "\" height=\"" << h - t - b
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[s % 5] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            const double xv = series[s].x[k], yv = series[s].y[k];
            if ((logx && !(xv > 0)) || (logy && !(yv > 0)) || !std::isfinite(yv)) continue;
            os << l + (tx(xv) - x0) / (x1 - x0) * (w - l - r) << ',' << h - b - (ty(yv) - y0) / (y1 - y0) * (h - t - b)
               << ' ';
        }
        os << "\"/>\n<text x=\"" << w - r - 8 << "\" y=\"" << t + 16 + 16 * static_cast<double>(s)
           << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << colors[s % 5] << "\">" << series[s].label
           << "</text>\n";
    }
    os << "<text x=\"" << l << "\" y=\"" << h - b + 16 << "\" font-size=\"10\">" << num(logx ? std::pow(10, x0) : x0)
       << "</text><text x=\"" << w - r << "\" y=\"" << h - b + 16 << "\" text-anchor=\"end\" font-size=\"10\">"
       << num(logx ? std::pow(10, x1) : x1) << "</text>\n"
       << "<text x=\"" << l - 4 << "\" y=\"" << h - b << "\" text-anchor=\"end\" font-size=\"10\">"
       << num(logy ? std::pow(10, y0) : y0) << "</text><text x=\"" << l - 4 << "\" y=\"" << t + 10
       << "\" text-anchor=\"end\" font-size=\"10\">" << num(logy ? std::pow(10, y1) : y1) << "</text>\n</svg>\n";
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::string& hash, const std::string& scenario) : os_(path), path_(path) {
        if (!os_) throw std::runtime_error("cannot write " + path.string());
        os_ << "# scenario=" << scenario << "\n# config_hash=" << hash << "\n# tool_version=" << kToolVersion << '\n';
    }
    std::ostream& os() { return os_; }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) os_ << (k ? "," : "") << cells[k];
        os_ << '\n';
    }
    void close() {
        os_.close();
        if (!os_) throw std::runtime_error("write failed: " + path_.string());
    }

private:
    std::ofstream os_;
    fs::path path_;
};

std::string at_key(const std::string& base, double p) { return base + "@" + num(p); }

}  // namespace

ScenarioOutcome run_scenario(const Scenario& s, const Calibration& cal, std::uint64_t seed, const fs::path& out_dir,
                             const RunOptions& opt) {
    validate_scenario(s, cal);

    const std::string hash = content_hash(json{{"calibration", config_hash(cal)},
                                               {"kind", scenario_kind_name(s.kind)},
                                               {"params", s.params},
                                               {"seed", seed}});
    ScenarioOutcome out;
    out.name = s.name;
    json values = json::object();

    const fs::path final_dir = out_dir / s.name;
    const fs::path dir = out_dir / (s.name + ".partial");
    std::error_code ec;
    fs::remove_all(dir, ec);
    std::vector<std::string> files;
    try {
        fs::create_directories(dir);
        auto file = [&](const std::string& name) {
            files.push_back(name);
            return dir / name;
        };

        switch (s.kind) {
            case ScenarioKind::efficiency_sweep:
            case ScenarioKind::snr_sweep: {
                const auto p = parse_rate_sweep(s);
                const auto rows = simulate_rate_sweep(cal, p, seed, opt.threads);
                CsvWriter csv(file(s.name + ".csv"), hash, s.name);
                csv.row({"pump_mw", "with_input_hz", "without_input_hz", "snr", "eta_ext", "eta_int", "snr_model",
                         "eta_ext_model", "eta_int_model"});
                double min_snr_200 = INFINITY, max_eta_int = 0;
                bool monotone = true;
                const RateSweepRow* prev = nullptr;
                for (const auto& r : rows) {
                    csv.row({num(r.pump_mw), num(r.with_input_hz), num(r.without_input_hz), num(r.measured.snr),
                             num(r.measured.eta_ext), num(r.measured.eta_int), num(r.snr_model),
                             num(r.eta_ext_model), num(r.eta_int_model)});
                    values[at_key("snr", r.pump_mw)] = r.measured.snr;
                    values[at_key("eta_ext", r.pump_mw)] = r.measured.eta_ext;
                    values[at_key("eta_int", r.pump_mw)] = r.measured.eta_int;
                    values[at_key("eta_ext_model", r.pump_mw)] = r.eta_ext_model;
                    values[at_key("eta_int_model", r.pump_mw)] = r.eta_int_model;
                    if (r.pump_mw <= 200) min_snr_200 = std::min(min_snr_200, r.measured.snr);
                    if (r.pump_mw >= 200 && prev && prev->pump_mw >= 200 && !(r.measured.snr < prev->measured.snr))
                        monotone = false;
                    if (r.pump_mw >= 200) prev = &r;
                    max_eta_int = std::max(max_eta_int, r.eta_int_model);
                }
                csv.close();
                if (std::isfinite(min_snr_200)) values["min_snr_upto_200"] = min_snr_200;
                values["snr_decreasing_above_200"] = monotone ? 1 : 0;
                values["max_eta_int_model"] = max_eta_int;
                if (opt.plots) {
                    Series a("simulated"), m("model");
                    const bool snr = s.kind == ScenarioKind::snr_sweep;
                    for (const auto& r : rows) {
                        a.x.push_back(r.pump_mw);
                        m.x.push_back(r.pump_mw);
                        a.y.push_back(snr ? r.measured.snr : r.measured.eta_ext);
                        m.y.push_back(snr ? r.snr_model : r.eta_ext_model);
                    }
                    write_svg(file(s.name + ".svg"), s.name, "pump power (mW)", snr ? "SNR" : "eta_ext", {a, m},
                              false, false, hash);
                }
                break;
            }
            case ScenarioKind::noise_sweep: {
                const auto p = parse_noise_sweep(s);
                const auto res = simulate_noise_sweep(cal, p, seed, opt.threads);
                CsvWriter csv(file(s.name + ".csv"), hash, s.name);
                csv.row({"stack", "seed_index", "pump_mw", "duration_s", "counts", "corrected_hz",
                         "dark_subtracted_hz", "model_hz"});
                for (const auto& pt : res.points)
                    csv.row({pt.stack, std::to_string(pt.seed_index), num(pt.pump_mw), num(pt.duration_s),
                             std::to_string(pt.counts), num(pt.corrected_hz), num(pt.dark_subtracted_hz),
                             num(pt.model_hz)});
                csv.close();
                CsvWriter fits(file(s.name + "_fits.csv"), hash, s.name);
                fits.row({"stack", "seed_index", "exponent", "uncertainty", "prefactor"});
                std::map<std::string, std::vector<double>> by_stack;
                for (const auto& f : res.fits) {
                    fits.row({f.stack, std::to_string(f.seed_index), num(f.fit.exponent), num(f.fit.uncertainty),
                              num(f.fit.prefactor)});
                    by_stack[f.stack].push_back(f.fit.exponent);
                }
                fits.close();
                for (const auto& [st, e] : by_stack) {
                    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
                    double var = 0;
                    for (double x : e) var += (x - mean) * (x - mean);
                    values["exponent_" + st + "_mean"] = mean;
                    values["exponent_" + st + "_std"] = e.size() > 1 ? std::sqrt(var / static_cast<double>(e.size() - 1)) : 0.0;
                    values["exponent_" + st + "_min"] = *std::min_element(e.begin(), e.end());
                    values["exponent_" + st + "_max"] = *std::max_element(e.begin(), e.end());
                }
                if (opt.plots) {
                    std::vector<Series> ser;
                    for (const auto& st : p.stacks) {
                        Series x(st.first);
                        for (const auto& pt : res.points)
                            if (pt.stack == st.first && pt.seed_index == 0) {
                                x.x.push_back(pt.pump_mw);
                                x.y.push_back(pt.dark_subtracted_hz);
                            }
                        ser.push_back(x);
                    }
                    write_svg(file(s.name + ".svg"), s.name, "pump power (mW)", "noise counts (Hz)", ser, true, true,
                              hash);
                }
                break;
            }
            case ScenarioKind::noise_spectrum: {
                const auto p = parse_noise_spectrum(s);
                const auto res = simulate_noise_spectrum(cal, p, seed);
                CsvWriter csv(file(s.name + ".csv"), hash, s.name);
                std::vector<std::string> head{"wavelength_nm"};
                for (const auto& st : p.stacks) {
                    head.push_back("model_hz_" + st.first);
                    head.push_back("counts_" + st.first);
                }
                csv.row(head);
                for (std::size_t k = 0; k < res.wavelength_nm.size(); ++k) {
                    std::vector<std::string> row{num(res.wavelength_nm[k])};
                    for (std::size_t st = 0; st < p.stacks.size(); ++st) {
                        row.push_back(num(res.model[st][k]));
                        row.push_back(std::to_string(res.counts[st][k]));
                    }
                    csv.row(row);
                }
                csv.close();
                for (const auto& sm : res.summary) {
                    values["peak_nm_" + sm.stack] = sm.peak_nm;
                    values["peak_to_floor_" + sm.stack] = sm.peak_to_floor;
                    values["fwhm_nm_" + sm.stack] = sm.fwhm_nm;
                }
                values["expected_fwhm_nm"] = res.expected_fwhm_nm;
                if (res.summary.size() >= 2) values["suppression"] = res.suppression;
                if (opt.plots) {
                    std::vector<Series> ser;
                    for (std::size_t st = 0; st < p.stacks.size(); ++st)
                        ser.emplace_back(p.stacks[st].first, res.wavelength_nm, res.model[st]);
                    write_svg(file(s.name + ".svg"), s.name, "wavelength (nm)", "noise (Hz per bin)", ser, false,
                              true, hash);
                }
                break;
            }
            case ScenarioKind::coincidence_si:
            case ScenarioKind::coincidence_so: {
                const auto p = parse_coincidence(s);
                const Channel partner = s.kind == ScenarioKind::coincidence_si ? Channel::idler : Channel::output;
                auto res = simulate_coincidences(cal, p, partner, seed, opt.threads);
                res.histogram.config_hash = hash;
                {
                    std::ofstream os(file(s.name + "_histogram.csv"));
                    os << "# scenario=" << s.name << "\n# tool_version=" << kToolVersion << '\n';
                    write_histogram_csv(os, res.histogram);
                    os.close();
                    if (!os) throw std::runtime_error("write failed: histogram");
                }
                if (p.save_tags) {
                    write_qtag_file(file(s.name + "_signal.qtag").string(), res.signal_stream);
                    write_qtag_file(file(s.name + "_partner.qtag").string(), res.partner_stream);
                }
                values["g2"] = res.g2.g2;
                values["sigma"] = res.g2.sigma;
                values["significance"] = res.significance;
                values["threshold"] = p.threshold;
                values["cs_bound"] = res.cauchy_schwarz.bound;
                values["cs_sigma_violation"] = res.cauchy_schwarz.sigma_violation;
                values["peak_counts"] = res.g2.peak_counts;
                values["peak_bins"] = res.g2.peak_bin_count;
                values["baseline_counts"] = res.g2.baseline_counts;
                values["baseline_bins"] = res.g2.baseline_bin_count;
                values["singles_signal_hz"] = res.singles_signal_hz;
                values["singles_partner_hz"] = res.singles_partner_hz;
                values["predicted_coincidences_hz"] =
                    partner == Channel::idler ? res.predicted.coincidences_si : res.predicted.coincidences_so;
                if (opt.plots) {
                    Series x("coincidences");
                    for (std::size_t k = 0; k < res.histogram.bins(); ++k) {
                        x.x.push_back(res.histogram.center(k) * 1e-3);
                        x.y.push_back(static_cast<double>(res.histogram.counts[k]));
                    }
                    write_svg(file(s.name + ".svg"), s.name, "tau (ns)", "counts per bin", {x}, false, false, hash);
                }
                break;
            }
            case ScenarioKind::fock_demo: {
                const auto p = parse_fock_demo(s);
                const auto res = run_fock_demo(p);
                CsvWriter csv(file(s.name + ".csv"), hash, s.name);
                csv.row({"pump_amplitude", "amp_pair", "amp_converted", "ratio_over_angle", "pop_converted",
                         "g2_signal_output", "truncation_change"});
                double worst_ratio = 0, worst_trunc = 0;
                for (const auto& r : res.rows) {
                    csv.row({num(r.pump_amplitude), num(r.amp_pair), num(r.amp_converted), num(r.ratio_over_angle),
                             num(r.pop_converted), num(r.g2_signal_output), num(r.truncation_change)});
                    worst_ratio = std::max(worst_ratio, std::abs(r.ratio_over_angle - 1.0));
                    worst_trunc = std::max(worst_trunc, r.truncation_change);
                }
                csv.close();
                values["power_exponent"] = res.power_exponent;
                values["max_ratio_deviation"] = worst_ratio;
                values["max_truncation_change"] = worst_trunc;
                if (opt.plots) {
                    Series x("|<1,0,1|psi>|^2");
                    for (const auto& r : res.rows) {
                        x.x.push_back(r.pump_amplitude * r.pump_amplitude);
                        x.y.push_back(r.pop_converted);
                    }
                    write_svg(file(s.name + ".svg"), s.name, "pump power (|A|^2)", "population", {x}, true, true,
                              hash);
                }
                break;
            }
        }

        json expected = json::array();
        for (const auto& e : s.expected) {
            json rec{{"key", e.key}};
            if (e.min) rec["min"] = *e.min;
            if (e.max) rec["max"] = *e.max;
            bool ok = values.contains(e.key) && values[e.key].is_number();
            if (ok) {
                const double v = values[e.key].get<double>();
                rec["value"] = v;
                ok = (!e.min || v >= *e.min) && (!e.max || v <= *e.max);
            }
            rec["passed"] = ok;
            if (!ok) out.failures.push_back(e.key);
            expected.push_back(rec);
        }
        out.passed = out.failures.empty();
        out.summary = {{"scenario", s.name},
                       {"kind", scenario_kind_name(s.kind)},
                       {"seed", seed},
                       {"config_hash", hash},
                       {"calibration_hash", config_hash(cal)},
                       {"tool_version", kToolVersion},
                       {"values", values},
                       {"expected", expected},
                       {"passed", out.passed},
                       {"artifacts", files}};
        {
            std::ofstream os(file("summary.json"));
            os << out.summary.dump(2) << '\n';
            os.close();
            if (!os) throw std::runtime_error("write failed: summary.json");
        }
        fs::remove_all(final_dir);
        fs::rename(dir, final_dir);
    } catch (...) {
        fs::remove_all(dir, ec);
        throw;
    }
    for (const auto& f : files) out.artifacts.push_back(final_dir / f);
    return out;
}

}  // namespace qfc
