#pragma once

// Simulation scenarios and run manifests.
//
// Each scenario kind has a typed parameter block parsed (and validated) from
// JSON and a compute function that returns plain result tables; run_scenario
// adds the artifact layer (CSV + summary JSON, optional SVG).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qfc/config.hpp"
#include "qfc/montecarlo.hpp"
#include "qfc/tagcorr.hpp"

namespace qfc {

enum class ScenarioKind { efficiency_sweep, snr_sweep, noise_sweep, noise_spectrum, coincidence_si, coincidence_so, fock_demo };

const char* scenario_kind_name(ScenarioKind k);
ScenarioKind scenario_kind_from_name(const std::string& name);

using NamedStack = std::pair<std::string, std::vector<std::string>>;  // label, filter names

// ---------------------------------------------------------------------------
// Efficiency / SNR sweeps (with and without input light)

struct RateSweepParams {
    std::vector<double> powers_mw;
    std::vector<std::string> filters{"uv_bandpass", "etalon"};
    double duration_s = 2.0;
};

struct RateSweepRow {
    double pump_mw = 0;
    double with_input_hz = 0;     // dead-time corrected
    double without_input_hz = 0;
    RateMetrics measured;
    double snr_model = 0;
    double eta_int_model = 0;
    double eta_ext_model = 0;
};

std::vector<RateSweepRow> simulate_rate_sweep(const Calibration& cal, const RateSweepParams& p, std::uint64_t seed,
                                              unsigned threads = 0);

// ---------------------------------------------------------------------------
// Noise scaling

struct NoiseSweepParams {
    std::vector<double> powers_mw;
    std::vector<NamedStack> stacks{{"unfiltered", {"uv_bandpass"}}, {"etalon", {"uv_bandpass", "etalon"}}};
    int seeds = 1;
    double counts_per_point = 2e4;  // sets each point's acquisition time
    double dead_time_ns = 50.0;
};

struct NoiseSweepPoint {
    std::string stack;
    int seed_index = 0;
    double pump_mw = 0;
    double duration_s = 0;
    std::int64_t counts = 0;
    double corrected_hz = 0;      // dead-time corrected rate
    double dark_subtracted_hz = 0;
    double model_hz = 0;          // dark-free model rate
};

struct NoiseSweepFit {
    std::string stack;
    int seed_index = 0;
    PowerLawFit fit;
};

struct NoiseSweepResult {
    std::vector<NoiseSweepPoint> points;
    std::vector<NoiseSweepFit> fits;
};

NoiseSweepResult simulate_noise_sweep(const Calibration& cal, const NoiseSweepParams& p, std::uint64_t seed,
                                      unsigned threads = 0);

// ---------------------------------------------------------------------------
// Noise spectrum

struct NoiseSpectrumParams {
    double pump_mw = 200;
    double lambda_min_nm = 365.0;
    double lambda_max_nm = 374.0;
    double step_nm = 0.05;
    std::vector<NamedStack> stacks{{"unfiltered", {}}, {"etalon", {"etalon"}}};
    std::string spectrometer = "spectrometer";
    double integration_s = 10.0;
    // Floor = smallest model value at offsets [lo, hi] nm from the peak.
    double floor_offset_lo_nm = 1.0;
    double floor_offset_hi_nm = 4.0;
};

struct SpectrumSummary {
    std::string stack;
    double peak_nm = 0;
    double peak = 0;          // Hz per bin
    double floor = 0;
    double peak_to_floor = 0;
    double fwhm_nm = 0;
};

struct NoiseSpectrumResult {
    std::vector<double> wavelength_nm;
    std::vector<std::vector<double>> model;               // per stack, Hz per bin
    std::vector<std::vector<std::int64_t>> counts;        // per stack, sampled
    std::vector<SpectrumSummary> summary;
    double expected_fwhm_nm = 0;  // phase-matching width with instrument broadening
    double suppression = 0;       // first stack peak_to_floor / last stack's
};

NoiseSpectrumResult simulate_noise_spectrum(const Calibration& cal, const NoiseSpectrumParams& p, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Coincidences

struct ChannelSpec {
    std::vector<std::string> filters;
    std::optional<double> transmission;  // default: calibration detection path
    double dark_rate = 0;
    double jitter_fwhm_ps = 350;
    double dead_time_ns = 50;
    timestamp_ps offset_ps = 0;
};

struct CoincidenceParams {
    double pump_mw = 0;
    double duration_s = 30;
    timestamp_ps bin_ps = 165;
    timestamp_ps tau_min_ps = -24750;
    timestamp_ps tau_max_ps = 24750;
    ChannelSpec signal;
    ChannelSpec partner;           // idler (IR) or output (UV)
    PeakMethod peak_method = PeakMethod::fwhm;
    double threshold = 10;         // significance is (g2 - threshold) / sigma
    double slice_s = 1.0;
    bool save_tags = false;        // write both streams as .qtag artifacts
};

struct CoincidenceResult {
    CoincidenceHistogram histogram;
    CorrelationResult g2;
    CauchySchwarzResult cauchy_schwarz;
    double significance = 0;
    PredictedRates predicted;
    double singles_signal_hz = 0;
    double singles_partner_hz = 0;
    TagStream signal_stream;
    TagStream partner_stream;
};

// `partner` is Channel::idler or Channel::output.
CoincidenceResult simulate_coincidences(const Calibration& cal, const CoincidenceParams& p, Channel partner,
                                        std::uint64_t seed, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Cascaded-state amplitudes from the Fock engine

struct FockDemoParams {
    int n_max = 3;
    double kappa_t = 0.05;  // conversion angle at unit pump amplitude
    double gamma_t = 0.05;  // squeezing angle at unit pump amplitude
    std::vector<double> pump_amplitudes{0.25, 0.5, 0.75, 1.0};
};

struct FockDemoRow {
    double pump_amplitude = 0;
    double amp_pair = 0;        // |<1,1,0|psi>|
    double amp_converted = 0;   // |<1,0,1|psi>|
    double ratio_over_angle = 0;  // (amp_converted / amp_pair) / (kappa A t)
    double pop_converted = 0;
    double g2_signal_output = 0;
    double truncation_change = 0;
};

struct FockDemoResult {
    std::vector<FockDemoRow> rows;
    double power_exponent = 0;  // pop_converted vs |A|^2
};

FockDemoResult run_fock_demo(const FockDemoParams& p);

// ---------------------------------------------------------------------------
// Manifests

struct Expectation {
    std::string key;  // summary value name
    std::optional<double> min, max;
};

struct Scenario {
    std::string name;
    ScenarioKind kind = ScenarioKind::fock_demo;
    json params = json::object();
    std::optional<std::uint64_t> seed;
    std::vector<Expectation> expected;
};

struct RunManifest {
    int schema_version = kSchemaVersion;
    std::optional<std::filesystem::path> calibration;  // resolved against base_dir
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    std::vector<Scenario> scenarios;
    std::filesystem::path base_dir = ".";
};

RunManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir);
json to_json(const Scenario& s);
RunManifest load_manifest(const std::filesystem::path& path);

// Typed parameter parsing; throws ConfigError with the scenario name.
RateSweepParams parse_rate_sweep(const Scenario& s);
NoiseSweepParams parse_noise_sweep(const Scenario& s);
NoiseSpectrumParams parse_noise_spectrum(const Scenario& s);
CoincidenceParams parse_coincidence(const Scenario& s);
FockDemoParams parse_fock_demo(const Scenario& s);

// Full validation against a calibration (filter names etc.) with no compute.
void validate_scenario(const Scenario& s, const Calibration& cal);

struct RunOptions {
    unsigned threads = 0;
    bool plots = true;
};

struct ScenarioOutcome {
    std::string name;
    json summary;
    std::vector<std::filesystem::path> artifacts;
    bool passed = true;                 // all expectations met
    std::vector<std::string> failures;
};

// Writes into out_dir/<name>/. On any I/O failure the scenario's partial
// outputs are removed before the error propagates.
ScenarioOutcome run_scenario(const Scenario& s, const Calibration& cal, std::uint64_t seed,
                             const std::filesystem::path& out_dir, const RunOptions& opt = {});

std::uint64_t scenario_seed(const Scenario& s, std::uint64_t manifest_seed);

}  // namespace qfc
