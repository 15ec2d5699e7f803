#pragma once

// Synthetic detector time tags for the signal (~847 nm), idler/IR (~1311 nm)
// and UV output (~369.5 nm) channels.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qfc/spectral.hpp"
#include "qfc/tagstream.hpp"

namespace qfc {

enum class Channel { signal = 0, idler = 1, output = 2 };

struct ChannelConfig {
    std::uint16_t id = 0;
    bool enabled = true;
    std::vector<SpectralFilter> filters;
    double transmission = 1.0;     // optics, coupling and detector efficiency
    double dark_rate = 0.0;        // Hz
    double jitter_fwhm_ps = 350.0;
    double dead_time_ns = 50.0;
    timestamp_ps offset_ps = 0;    // fixed group delay
};

struct ScenarioConfig {
    double pump_mw = 0.0;
    double input_flux = 0.0;       // Hz, 0 for noise-only runs
    double duration_s = 1.0;
    std::array<ChannelConfig, 3> channels;  // indexed by Channel
    LossBudget losses;
    std::uint64_t seed = 1;
    double slice_s = 1.0;          // parallel generation granularity
    bool residual_noise = true;
    bool signal_luminescence = true;

    ChannelConfig& channel(Channel c) { return channels[static_cast<int>(c)]; }
    const ChannelConfig& channel(Channel c) const { return channels[static_cast<int>(c)]; }
    void validate() const;

    // Channels 0/1/2 with the UV path from `losses` and model dark counts on
    // the UV detector; signal and idler arms start disabled.
    static ScenarioConfig defaults(const ConverterModel& model, const LossBudget& losses);
};

using StreamSet = std::array<TagStream, 3>;  // indexed by Channel

// Expected detector rates before dead time, per channel.
struct PredictedRates {
    std::array<double, 3> singles{};
    double pairs = 0;           // SPDC pairs s^-1 across the band
    double coincidences_so = 0; // correlated signal-UV detections s^-1
    double coincidences_si = 0; // correlated signal-IR detections s^-1
};
PredictedRates predicted_rates(const ScenarioConfig& scenario, const ConverterModel& model);

// Poisson pair creation at pair_rate_coeff * P with a flat spectrum over the
// SPDC band, idler conversion at the small-signal probability weighted by
// phase matching, loss thinning through each arm's filters and transmission,
// independent noise sources, Gaussian jitter and non-paralyzable dead time.
// Output is independent of `threads`.
StreamSet generate_streams(const ScenarioConfig& scenario, const ConverterModel& model, unsigned threads = 0);

TagStream thin_stream(const TagStream& stream, double transmission, std::uint64_t seed);
TagStream merge_streams(const TagStream& a, const TagStream& b);
// Drops tags closer than dead_time after the last kept tag.
TagStream apply_dead_time(const TagStream& stream, double dead_time_ns);

// Rate corrected for non-paralyzable dead time, m / (1 - m tau).
double dead_time_corrected_rate(double measured_rate, double dead_time_ns);

}  // namespace qfc
