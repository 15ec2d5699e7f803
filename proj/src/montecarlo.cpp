#include "qfc/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

#include "qfc/errors.hpp"
#include "qfc/quadrature.hpp"
#include "qfc/rng.hpp"

namespace qfc {

void ScenarioConfig::validate() const {
    if (!(pump_mw >= 0)) throw ConfigError("scenario: pump_mw must be >= 0");
    if (!(input_flux >= 0)) throw ConfigError("scenario: input_flux must be >= 0");
    if (!(duration_s >= 0) || !std::isfinite(duration_s)) throw ConfigError("scenario: duration must be >= 0");
    if (!(slice_s > 0)) throw ConfigError("scenario: slice_s must be > 0");
    for (const auto& c : channels) {
        if (!(c.transmission >= 0 && c.transmission <= 1)) throw ConfigError("channel: transmission outside [0, 1]");
        if (!(c.dark_rate >= 0)) throw ConfigError("channel: dark_rate must be >= 0");
        if (!(c.jitter_fwhm_ps >= 0)) throw ConfigError("channel: jitter_fwhm_ps must be >= 0");
        if (!(c.dead_time_ns >= 0)) throw ConfigError("channel: dead_time_ns must be >= 0");
        for (const auto& f : c.filters) f.validate();
    }
    losses.validate();
}

ScenarioConfig ScenarioConfig::defaults(const ConverterModel& model, const LossBudget& losses) {
    ScenarioConfig s;
    s.losses = losses;
    for (int k = 0; k < 3; ++k) s.channels[k].id = static_cast<std::uint16_t>(k);
    s.channel(Channel::signal).enabled = false;
    s.channel(Channel::idler).enabled = false;
    auto& uv = s.channel(Channel::output);
    uv.transmission = losses.detection_path();
    uv.dark_rate = model.dark_count_rate;
    return s;
}

namespace {

// Per-detuning detection probabilities of one SPDC pair. Detuning d (GHz) is
// the output/idler shift; the signal sits at -d.
struct PairModel {
    const ScenarioConfig& sc;
    const ConverterModel& model;
    PhaseMatchingProfile pm;
    FilterStack sig, idl, out;
    double t_s, t_i, t_o;
    double p_conv;
    double rate;        // pairs per second
    double half_band;

    PairModel(const ScenarioConfig& s, const ConverterModel& m)
        : sc(s),
          model(m),
          pm(m),
          sig(s.channel(Channel::signal).filters, m.signal_center_thz()),
          idl(s.channel(Channel::idler).filters, m.idler_center_thz()),
          out(s.channel(Channel::output).filters, m.output_center_thz()) {
        auto eff = [&](Channel c) { return s.channel(c).enabled ? s.channel(c).transmission : 0.0; };
        t_s = eff(Channel::signal);
        t_i = eff(Channel::idler);
        t_o = eff(Channel::output);
        p_conv = std::min(1.0, small_signal_conversion(s.pump_mw, m));
        rate = m.pair_rate_coeff * s.pump_mw;
        half_band = 0.5 * m.spdc_bandwidth_ghz;
    }

    double p_signal(double d) const { return t_s > 0 ? t_s * sig(-d) : 0.0; }
    double conv(double d) const { return p_conv > 0 ? p_conv * pm(d) : 0.0; }
    double p_output(double d, double c) const { return t_o > 0 ? c * t_o * out(d) : 0.0; }
    double p_idler(double d, double c) const { return t_i > 0 ? (1.0 - c) * t_i * idl(d) : 0.0; }

    double signal_bound() const { return t_s * sig.peak_bound(); }
    double idler_side_bound() const {
        const double a = t_o * out.peak_bound();
        const double b = t_i * idl.peak_bound();
        return std::max(b, p_conv * a + (1.0 - p_conv) * b);
    }

    std::vector<double> breakpoints() const {
        std::vector<double> bp = idl.features(half_band);
        for (double x : out.features(half_band)) bp.push_back(x);
        for (double x : sig.features(half_band)) bp.push_back(-x);
        for (double m : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) bp.push_back(m * model.noise_bandwidth_ghz);
        return bp;
    }

    double band_average(const std::function<double(double)>& f) const {
        return integrate(f, -half_band, half_band, breakpoints(), 1e-8) / model.spdc_bandwidth_ghz;
    }
};

using Buffers = std::array<std::vector<timestamp_ps>, 3>;

struct Source {
    double rate = 0;  // Hz
    std::function<void(double t_ps, Rng& rng, Rng& jitter, Buffers& sink)> emit;
};

double jitter_sigma_ps(const ChannelConfig& c) { return c.jitter_fwhm_ps / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

}  // namespace

PredictedRates predicted_rates(const ScenarioConfig& sc, const ConverterModel& model) {
    sc.validate();
    const PairModel pmod(sc, model);
    PredictedRates r;
    r.pairs = pmod.rate;
    if (pmod.rate > 0) {
        r.singles[0] = pmod.rate * pmod.band_average([&](double d) { return pmod.p_signal(d); });
        r.singles[1] = pmod.rate * pmod.band_average([&](double d) { return pmod.p_idler(d, pmod.conv(d)); });
        r.singles[2] = pmod.rate * pmod.band_average([&](double d) { return pmod.p_output(d, pmod.conv(d)); });
        r.coincidences_so = pmod.rate * pmod.band_average([&](double d) {
            return pmod.p_signal(d) * pmod.p_output(d, pmod.conv(d));
        });
        r.coincidences_si = pmod.rate * pmod.band_average([&](double d) {
            return pmod.p_signal(d) * pmod.p_idler(d, pmod.conv(d));
        });
    }
    const double eta_ext = conversion_efficiency(sc.pump_mw, model, false, sc.losses);
    r.singles[2] += sc.input_flux * eta_ext * pmod.t_o * pmod.out(0.0);
    r.singles[1] += sc.input_flux * (1.0 - eta_ext) * pmod.t_i * pmod.idl(0.0);
    if (sc.residual_noise && pmod.t_o > 0) {
        const double b_res = residual_filter_factor(sc.channel(Channel::output).filters, model);
        r.singles[2] += model.noise_linear_coeff * sc.pump_mw * b_res * pmod.t_o / sc.losses.detection_path();
    }
    if (sc.signal_luminescence && pmod.t_s > 0)
        r.singles[0] += signal_luminescence_rate(sc.pump_mw, sc.channel(Channel::signal).filters, model, pmod.t_s);
    for (int k = 0; k < 3; ++k)
        if (sc.channels[k].enabled) r.singles[k] += sc.channels[k].dark_rate;
    return r;
}

StreamSet generate_streams(const ScenarioConfig& sc, const ConverterModel& model, unsigned threads) {
    sc.validate();
    model.validate();
    const PairModel pmod(sc, model);
    const timestamp_ps duration = std::llround(sc.duration_s * static_cast<double>(kPsPerSecond));

    StreamSet out;
    for (int k = 0; k < 3; ++k) {
        out[k].channel = sc.channels[k].id;
        out[k].duration_ps = duration;
        out[k].meta = "seed=" + std::to_string(sc.seed);
    }
    if (duration == 0) return out;

    // Independent Poisson sources. Each source calls `push` for its tags.
    std::array<double, 3> sigma{};
    for (int k = 0; k < 3; ++k) sigma[k] = jitter_sigma_ps(sc.channels[k]);
    auto push = [&](Buffers& sink, Channel c, double t_ps, Rng& jitter) {
        const int k = static_cast<int>(c);
        const auto& ch = sc.channels[k];
        if (!ch.enabled) return;
        double t = t_ps + static_cast<double>(ch.offset_ps);
        if (sigma[k] > 0) t += sigma[k] * jitter.normal();
        const auto ps = static_cast<timestamp_ps>(std::llround(t));
        if (ps >= 0 && ps < duration) sink[k].push_back(ps);
    };

    std::vector<Source> sources;
    const double a_bound = pmod.signal_bound();
    const double b_bound = pmod.idler_side_bound();
    // Pairs with a detected signal photon; the idler outcome is conditional.
    sources.push_back({pmod.rate * a_bound, [&](double t, Rng& rng, Rng& jit, Buffers& buf) {
                           const double d = (rng.uniform() - 0.5) * model.spdc_bandwidth_ghz;
                           if (rng.uniform() * a_bound >= pmod.p_signal(d)) return;
                           push(buf, Channel::signal, t, jit);
                           const double c = pmod.conv(d);
                           const double po = pmod.p_output(d, c);
                           const double u = rng.uniform();
                           if (u < po)
                               push(buf, Channel::output, t, jit);
                           else if (u < po + pmod.p_idler(d, c))
                               push(buf, Channel::idler, t, jit);
                       }});
    // Pairs whose signal photon is lost but whose idler side clicks.
    sources.push_back({pmod.rate * b_bound, [&](double t, Rng& rng, Rng& jit, Buffers& buf) {
                           const double d = (rng.uniform() - 0.5) * model.spdc_bandwidth_ghz;
                           const double c = pmod.conv(d);
                           const double po = pmod.p_output(d, c);
                           const double pi = pmod.p_idler(d, c);
                           const double u = rng.uniform() * b_bound;
                           if (u >= po + pi) return;
                           if (rng.uniform() < pmod.p_signal(d)) return;
                           push(buf, u < po ? Channel::output : Channel::idler, t, jit);
                       }});

    const double eta_ext = conversion_efficiency(sc.pump_mw, model, false, sc.losses);
    sources.push_back({sc.input_flux * eta_ext * pmod.t_o * pmod.out(0.0),
                       [&](double t, Rng&, Rng& jit, Buffers& buf) { push(buf, Channel::output, t, jit); }});
    sources.push_back({sc.input_flux * (1.0 - eta_ext) * pmod.t_i * pmod.idl(0.0),
                       [&](double t, Rng&, Rng& jit, Buffers& buf) { push(buf, Channel::idler, t, jit); }});
    double residual = 0.0, luminescence = 0.0;
    if (sc.residual_noise && pmod.t_o > 0)
        residual = model.noise_linear_coeff * sc.pump_mw *
                   residual_filter_factor(sc.channel(Channel::output).filters, model) * pmod.t_o /
                   sc.losses.detection_path();
    if (sc.signal_luminescence && pmod.t_s > 0)
        luminescence = signal_luminescence_rate(sc.pump_mw, sc.channel(Channel::signal).filters, model, pmod.t_s);
    sources.push_back({residual, [&](double t, Rng&, Rng& jit, Buffers& buf) { push(buf, Channel::output, t, jit); }});
    sources.push_back({luminescence, [&](double t, Rng&, Rng& jit, Buffers& buf) { push(buf, Channel::signal, t, jit); }});
    for (int k = 0; k < 3; ++k) {
        const double dark = sc.channels[k].enabled ? sc.channels[k].dark_rate : 0.0;
        sources.push_back({dark, [&, k](double t, Rng&, Rng& jit, Buffers& buf) { push(buf, static_cast<Channel>(k), t, jit); }});
    }

    double expected = 0.0;
    for (const auto& s : sources) expected += s.rate * sc.duration_s;
    if (!(expected <= std::ldexp(1.0, 62))) throw ConfigError("scenario: expected event count exceeds 2^62");

    const auto slice_ps = std::max<timestamp_ps>(1, std::llround(sc.slice_s * static_cast<double>(kPsPerSecond)));
    const auto n_slices = static_cast<std::size_t>((duration + slice_ps - 1) / slice_ps);
    std::vector<Buffers> slices(n_slices);

    auto run_slice = [&](std::size_t i) {
        const double t0 = static_cast<double>(static_cast<timestamp_ps>(i) * slice_ps);
        const double t1 = static_cast<double>(std::min(duration, static_cast<timestamp_ps>(i + 1) * slice_ps));
        for (std::size_t s = 0; s < sources.size(); ++s) {
            if (!(sources[s].rate > 0)) continue;
            Rng rng(derive_seed(sc.seed, {i, s, 0}));
            Rng jit(derive_seed(sc.seed, {i, s, 1}));
            const double rate_per_ps = sources[s].rate / static_cast<double>(kPsPerSecond);
            for (double t = t0 + rng.exponential(rate_per_ps); t < t1; t += rng.exponential(rate_per_ps))
                sources[s].emit(t, rng, jit, slices[i]);
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_slices));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n_slices; ++i) run_slice(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n_slices; i = next++) run_slice(i);
            });
        for (auto& th : pool) th.join();
    }

    for (int k = 0; k < 3; ++k) {
        std::size_t total = 0;
        for (const auto& s : slices) total += s[k].size();
        auto& tags = out[k].tags;
        tags.reserve(total);
        for (auto& s : slices) {
            tags.insert(tags.end(), s[k].begin(), s[k].end());
            std::vector<timestamp_ps>().swap(s[k]);
        }
        std::sort(tags.begin(), tags.end());
        out[k] = apply_dead_time(out[k], sc.channels[k].dead_time_ns);
    }
    return out;
}

TagStream thin_stream(const TagStream& stream, double transmission, std::uint64_t seed) {
    if (!(transmission >= 0 && transmission <= 1)) throw std::domain_error("thin_stream: transmission outside [0, 1]");
    TagStream out = stream;
    if (transmission == 1.0) return out;
    out.tags.clear();
    Rng rng(derive_seed(seed, {0x7468696eULL}));
    for (auto t : stream.tags)
        if (rng.uniform() < transmission) out.tags.push_back(t);
    return out;
}

TagStream merge_streams(const TagStream& a, const TagStream& b) {
    if (a.channel != b.channel) throw std::domain_error("merge_streams: channel mismatch");
    TagStream out;
    out.channel = a.channel;
    out.duration_ps = std::max(a.duration_ps, b.duration_ps);
    out.meta = a.meta;
    out.tags.resize(a.tags.size() + b.tags.size());
    std::merge(a.tags.begin(), a.tags.end(), b.tags.begin(), b.tags.end(), out.tags.begin());
    return out;
}

TagStream apply_dead_time(const TagStream& stream, double dead_time_ns) {
    if (!(dead_time_ns >= 0)) throw std::domain_error("dead time must be >= 0");
    if (dead_time_ns == 0) return stream;
    const auto dead = static_cast<timestamp_ps>(std::llround(dead_time_ns * 1e3));
    TagStream out = stream;
    out.tags.clear();
    out.tags.reserve(stream.tags.size());
    bool first = true;
    timestamp_ps last = 0;
    for (auto t : stream.tags) {
        if (first || t - last >= dead) {
            out.tags.push_back(t);
            last = t;
            first = false;
        }
    }
    return out;
}

double dead_time_corrected_rate(double measured_rate, double dead_time_ns) {
    const double x = measured_rate * dead_time_ns * 1e-9;
    if (!(x < 1)) throw std::domain_error("dead_time_corrected_rate: detector saturated");
    return measured_rate / (1.0 - x);
}

}  // namespace qfc
