#pragma once

// Deterministic device models: wavelength bookkeeping, quasi-phase matching,
// pump-power dependent conversion efficiency, spectral filters and the
// noise-rate scaling laws.
//
// Units at every boundary: vacuum wavelengths in nm, optical frequencies in
// THz, filter widths in GHz, pump power in mW, rates in Hz.

#include <functional>
#include <string>
#include <vector>

namespace qfc {

namespace phys {
inline constexpr double c_nm_thz = 299792.458;           // speed of light, nm * THz
inline constexpr double hc_ev_nm = 1239.8419843320026;   // h * c, eV * nm
inline constexpr double pi = 3.14159265358979323846;
// sinc^2(x) = 1/2 at x = sinc_half_max_argument
inline constexpr double sinc_half_max_argument = 1.3915573782515103;
}  // namespace phys

inline double frequency_thz(double wavelength_nm) { return phys::c_nm_thz / wavelength_nm; }
inline double wavelength_nm(double frequency_thz) { return phys::c_nm_thz / frequency_thz; }
// Frequency width of a wavelength interval centred at `center_nm` (first order).
double wavelength_width_to_ghz(double center_nm, double width_nm);

// ---------------------------------------------------------------------------
// Energy bookkeeping

struct WavelengthTriple {
    double input_nm = 0;
    double pump_nm = 0;
    double output_nm = 0;
    double signal_nm = 0;

    // Derives output (SFG) and signal (SPDC partner) from input and pump.
    static WavelengthTriple from_input_and_pump(double input_nm, double pump_nm);
    void validate() const;
};

double sfg_output_wavelength(double input_nm, double pump_nm);

struct SignalWavelength {
    double nm = 0;
    bool within_validity = true;  // false outside [300, 3000] nm
};
SignalWavelength spdc_signal_wavelength(double pump_nm, double idler_nm);

struct EnergyGap {
    double ev = 0;
    double thz = 0;
};
// Signed gap E(a) - E(b).
EnergyGap energy_gap(double lambda_a_nm, double lambda_b_nm);

// ---------------------------------------------------------------------------
// Device, losses, filters

struct ConverterModel {
    double lambda_input_nm = 1311.0;
    double lambda_pump_nm = 514.5;
    double length_mm = 9.6;
    double poling_period_um = 2.535;

    double eta_nor = 0.0;               // W^-1 mm^-2, small-signal eta = eta_nor * P * L^2
    double uv_absorption_coeff = 0.0;   // W^-1, P_eff = P exp(-coeff P)
    double pulsed_efficiency_ceiling = 0.30;

    double pair_rate_coeff = 0.0;       // SPDC pairs s^-1 mW^-1 across spdc_bandwidth_ghz
    double spdc_bandwidth_ghz = 20000;  // flat pair spectrum / white residual band
    double noise_bandwidth_ghz = 3000;  // phase-matching FWHM in output frequency
    double dispersion_baseline_index = 1.0;

    double noise_linear_coeff = 0.0;     // a1, Hz mW^-1 (residual luminescence)
    double noise_quadratic_coeff = 0.0;  // a2, Hz mW^-2 (cascaded SPDC/SFG)
    // Broadband pump-induced luminescence into the signal arm,
    // coeff * P^exponent per GHz of filter passband (Hz, P in mW).
    double signal_luminescence_coeff = 0.0;
    double signal_luminescence_exponent = 2.0;

    double input_flux = 6.0e6;          // photons s^-1
    double dark_count_rate = 13.0;      // Hz (UV detector)

    void validate() const;
    WavelengthTriple triple() const { return WavelengthTriple::from_input_and_pump(lambda_input_nm, lambda_pump_nm); }
    double output_center_thz() const { return frequency_thz(triple().output_nm); }
    double signal_center_thz() const { return frequency_thz(triple().signal_nm); }
    double idler_center_thz() const { return frequency_thz(lambda_input_nm); }
};

struct LossBudget {
    double external_optics = 0.78;
    double fiber_coupling = 0.69;
    double detector_efficiency = 0.14;
    double etalon_transmission = 0.50;
    double mode_matching = 1.0;

    void validate() const;
    // Transmission from the crystal facet to a detector click.
    double detection_path() const { return external_optics * fiber_coupling * detector_efficiency; }
    double eta_loss(bool with_etalon) const { return detection_path() * (with_etalon ? etalon_transmission : 1.0); }
};

enum class FilterKind { etalon, bandpass, vbg, lorentzian_line, gaussian_spectrometer };

const char* filter_kind_name(FilterKind k);
FilterKind filter_kind_from_name(const std::string& name);

struct SpectralFilter {
    FilterKind kind = FilterKind::bandpass;
    std::string name;
    double center_thz = 0;        // resonance / passband centre
    double fwhm_ghz = 0;          // linewidth or flat-top width
    double fsr_ghz = 0;           // etalon only
    double peak_transmission = 1.0;
    double out_of_band_od = 0;    // bandpass only
    // The residual (white) noise component bypasses filters with this unset.
    bool acts_on_residual = true;

    static SpectralFilter etalon(double center_thz, double fsr_ghz, double fwhm_ghz, double peak);
    static SpectralFilter bandpass_nm(double center_nm, double width_nm, double od, double peak = 1.0);
    static SpectralFilter vbg_nm(double center_nm, double fwhm_nm, double peak = 1.0);
    static SpectralFilter lorentzian_line(double center_thz, double fwhm_ghz, double peak = 1.0);
    static SpectralFilter spectrometer_nm(double center_nm, double fwhm_nm);

    void validate() const;
    double finesse() const { return fsr_ghz / fwhm_ghz; }
    // Detunings from the centre (GHz) in (lo, hi) where the transmission has
    // structure; used as quadrature breakpoints.
    void append_features(double lo_ghz, double hi_ghz, std::vector<double>& out) const;
};

double filter_transmission(const SpectralFilter& filter, double frequency_thz);

enum class NoiseComponent { cascaded, residual };

// Product of all filter transmissions; order-independent.
double filter_stack_transmission(const std::vector<SpectralFilter>& filters, double frequency_thz,
                                 NoiseComponent component = NoiseComponent::cascaded);
bool has_etalon(const std::vector<SpectralFilter>& filters);

// Transmission at a detuning (GHz) from the filter's own centre.
double filter_transmission_detuned(const SpectralFilter& filter, double detuning_ghz);

// A filter stack evaluated at detunings (GHz) from a reference frequency.
// Offsets to each filter centre are formed once, so lines much narrower than
// the reference frequency's rounding step keep full precision.
class FilterStack {
public:
    FilterStack(const std::vector<SpectralFilter>& filters, double reference_thz,
                NoiseComponent component = NoiseComponent::cascaded);
    double operator()(double detuning_ghz) const;
    bool empty() const { return filters_.empty(); }
    double peak_bound() const;  // product of peak transmissions
    // Quadrature breakpoints as detunings within +-half_width.
    std::vector<double> features(double half_width_ghz) const;
    // Integral of the transmission over +-half_width, GHz.
    double band_integral(double half_width_ghz) const;

private:
    std::vector<SpectralFilter> filters_;
    std::vector<double> offsets_;
};

// ---------------------------------------------------------------------------
// Quasi phase matching

using RefractiveIndex = std::function<double(double wavelength_nm)>;

// Delta k = 2 pi (n_o/l_o - n_p/l_p - n_i/l_i - 1/Lambda), rad/mm.
double qpm_mismatch(const WavelengthTriple& triple, const ConverterModel& model, const RefractiveIndex& index);

// Bundled phenomenological index n(l) = n0 + b/l + c/l^2 + d/l^3. The
// coefficients are fixed so that Delta k vanishes at the model's input
// wavelength, has zero curvature there, and its slope in input frequency
// reproduces noise_bandwidth_ghz as the sinc^2 FWHM.
struct QpmDispersion {
    double n0 = 0;
    double b_nm = 0;
    double c_nm2 = 0;
    double d_nm3 = 0;

    static QpmDispersion calibrated(const ConverterModel& model);
    double operator()(double wavelength_nm) const;
    RefractiveIndex as_function() const { return *this; }
};

double phasematching_response(double delta_k_rad_per_mm, double length_mm);

// Phase-matching response versus output-frequency detuning (GHz) for a CW
// pump: idler and output shift together, the signal shifts oppositely.
class PhaseMatchingProfile {
public:
    explicit PhaseMatchingProfile(const ConverterModel& model);
    double operator()(double detuning_ghz) const;
    double integral() const { return integral_; }  // over the SPDC band, GHz
    double band_half_width_ghz() const { return half_band_; }

private:
    ConverterModel model_;
    QpmDispersion dispersion_;
    double idler_thz_ = 0;
    double half_band_ = 0;
    double integral_ = 0;
};

// ---------------------------------------------------------------------------
// Efficiency and rates

double effective_pump_power_w(double pump_mw, const ConverterModel& model);
// eta_int = sin^2(sqrt(eta_nor P_eff) L); eta_ext = eta_int * mode_matching.
double conversion_efficiency(double pump_mw, const ConverterModel& model, bool internal, const LossBudget& losses);
// Unsaturated single-pass conversion probability eta_nor P L^2 used for the
// internally generated SPDC idlers.
double small_signal_conversion(double pump_mw, const ConverterModel& model);

// Fraction of each noise component that survives the filter stack.
double cascaded_filter_factor(const std::vector<SpectralFilter>& filters, const ConverterModel& model);
double residual_filter_factor(const std::vector<SpectralFilter>& filters, const ConverterModel& model);

struct NoiseFactors {
    double residual = 1;
    double cascaded = 1;
};
NoiseFactors noise_filter_factors(const std::vector<SpectralFilter>& filters, const ConverterModel& model);

struct NoiseBreakdown {
    double dark = 0;
    double residual = 0;   // linear in pump power
    double cascaded = 0;   // quadratic in pump power
    double total() const { return dark + residual + cascaded; }
};
NoiseBreakdown noise_breakdown(double pump_mw, const std::vector<SpectralFilter>& filters, const ConverterModel& model);
NoiseBreakdown noise_breakdown(double pump_mw, const NoiseFactors& factors, const ConverterModel& model);
double noise_rate(double pump_mw, const std::vector<SpectralFilter>& filters, const ConverterModel& model);

// Pair-rate coefficient that makes the pair-level cascade (SPDC idler,
// small-signal conversion, UV detection path) reproduce noise_quadratic_coeff.
double consistent_pair_rate_coeff(const ConverterModel& model, const LossBudget& losses);

// Broadband luminescence reaching a signal-arm detector with path
// transmission `transmission` behind `filters`.
double signal_luminescence_rate(double pump_mw, const std::vector<SpectralFilter>& filters,
                                const ConverterModel& model, double transmission);

// Total rate with input present: I eta_loss eta_ext + N.
double detected_signal_rate(const ConverterModel& model, double pump_mw, const LossBudget& losses,
                            const std::vector<SpectralFilter>& filters);

// Noise spectrum seen through `filters` and an instrument response
// (`spectrometer`, Gaussian), in Hz per grid bin. Grid in THz, sorted.
std::vector<double> noise_spectrum(double pump_mw, const std::vector<SpectralFilter>& filters,
                                   const ConverterModel& model, const std::vector<double>& grid_thz,
                                   const SpectralFilter& spectrometer);

}  // namespace qfc
