#include "qfc/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qfc/quadrature.hpp"

namespace qfc {

namespace {

void require_positive(double v, const char* what) {
    if (!(v > 0) || !std::isfinite(v)) throw std::domain_error(std::string(what) + " must be positive and finite");
}

void require_fraction(double v, const char* what) {
    if (!(v > 0 && v <= 1)) throw std::domain_error(std::string(what) + " must lie in (0, 1]");
}

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

}  // namespace

double wavelength_width_to_ghz(double center_nm, double width_nm) {
    require_positive(center_nm, "center wavelength");
    return 1e3 * phys::c_nm_thz * width_nm / (center_nm * center_nm);
}

// ---------------------------------------------------------------------------

double sfg_output_wavelength(double input_nm, double pump_nm) {
    require_positive(input_nm, "input wavelength");
    require_positive(pump_nm, "pump wavelength");
    return 1.0 / (1.0 / input_nm + 1.0 / pump_nm);
}

SignalWavelength spdc_signal_wavelength(double pump_nm, double idler_nm) {
    require_positive(pump_nm, "pump wavelength");
    if (!(idler_nm > pump_nm)) throw std::domain_error("spdc_signal_wavelength: idler must be longer than pump");
    SignalWavelength out;
    out.nm = 1.0 / (1.0 / pump_nm - 1.0 / idler_nm);
    out.within_validity = out.nm >= 300.0 && out.nm <= 3000.0;
    return out;
}

EnergyGap energy_gap(double lambda_a_nm, double lambda_b_nm) {
    require_positive(lambda_a_nm, "wavelength");
    require_positive(lambda_b_nm, "wavelength");
    const double dk = 1.0 / lambda_a_nm - 1.0 / lambda_b_nm;
    return {phys::hc_ev_nm * dk, phys::c_nm_thz * dk};
}

WavelengthTriple WavelengthTriple::from_input_and_pump(double input_nm, double pump_nm) {
    WavelengthTriple t;
    t.input_nm = input_nm;
    t.pump_nm = pump_nm;
    t.output_nm = sfg_output_wavelength(input_nm, pump_nm);
    t.signal_nm = spdc_signal_wavelength(pump_nm, input_nm).nm;
    return t;
}

void WavelengthTriple::validate() const {
    for (double v : {input_nm, pump_nm, output_nm, signal_nm}) require_positive(v, "wavelength");
    if (std::abs(1.0 / output_nm - 1.0 / input_nm - 1.0 / pump_nm) > 1e-9)
        throw std::domain_error("WavelengthTriple: SFG energy conservation violated");
    if (std::abs(1.0 / signal_nm - 1.0 / pump_nm + 1.0 / input_nm) > 1e-9)
        throw std::domain_error("WavelengthTriple: SPDC energy conservation violated");
}

// ---------------------------------------------------------------------------

void ConverterModel::validate() const {
    require_positive(lambda_input_nm, "lambda_input_nm");
    require_positive(lambda_pump_nm, "lambda_pump_nm");
    if (!(lambda_input_nm > lambda_pump_nm)) throw std::domain_error("ConverterModel: input must be longer than pump");
    require_positive(length_mm, "length_mm");
    require_positive(poling_period_um, "poling_period_um");
    require_positive(spdc_bandwidth_ghz, "spdc_bandwidth_ghz");
    require_positive(noise_bandwidth_ghz, "noise_bandwidth_ghz");
    for (double v : {eta_nor, uv_absorption_coeff, pair_rate_coeff, noise_linear_coeff, noise_quadratic_coeff,
                     signal_luminescence_coeff, input_flux, dark_count_rate})
        if (!(v >= 0) || !std::isfinite(v)) throw std::domain_error("ConverterModel: rate coefficients must be >= 0");
    require_fraction(pulsed_efficiency_ceiling, "pulsed_efficiency_ceiling");
    if (!(signal_luminescence_exponent >= 0)) throw std::domain_error("ConverterModel: luminescence exponent must be >= 0");
}

void LossBudget::validate() const {
    require_fraction(external_optics, "external_optics");
    require_fraction(fiber_coupling, "fiber_coupling");
    require_fraction(detector_efficiency, "detector_efficiency");
    require_fraction(etalon_transmission, "etalon_transmission");
    require_fraction(mode_matching, "mode_matching");
}

const char* filter_kind_name(FilterKind k) {
    switch (k) {
        case FilterKind::etalon: return "etalon";
        case FilterKind::bandpass: return "bandpass";
        case FilterKind::vbg: return "vbg";
        case FilterKind::lorentzian_line: return "lorentzian_line";
        case FilterKind::gaussian_spectrometer: return "gaussian_spectrometer";
    }
    return "?";
}

FilterKind filter_kind_from_name(const std::string& name) {
    for (auto k : {FilterKind::etalon, FilterKind::bandpass, FilterKind::vbg, FilterKind::lorentzian_line,
                   FilterKind::gaussian_spectrometer})
        if (name == filter_kind_name(k)) return k;
    throw std::domain_error("unknown filter kind '" + name + "'");
}

SpectralFilter SpectralFilter::etalon(double center_thz, double fsr_ghz, double fwhm_ghz, double peak) {
    SpectralFilter f;
    f.kind = FilterKind::etalon;
    f.name = "etalon";
    f.center_thz = center_thz;
    f.fsr_ghz = fsr_ghz;
    f.fwhm_ghz = fwhm_ghz;
    f.peak_transmission = peak;
    f.acts_on_residual = false;
    f.validate();
    return f;
}

SpectralFilter SpectralFilter::bandpass_nm(double center_nm, double width_nm, double od, double peak) {
    SpectralFilter f;
    f.kind = FilterKind::bandpass;
    f.name = "bandpass";
    f.center_thz = frequency_thz(center_nm);
    f.fwhm_ghz = wavelength_width_to_ghz(center_nm, width_nm);
    f.out_of_band_od = od;
    f.peak_transmission = peak;
    f.validate();
    return f;
}

SpectralFilter SpectralFilter::vbg_nm(double center_nm, double fwhm_nm, double peak) {
    SpectralFilter f;
    f.kind = FilterKind::vbg;
    f.name = "vbg";
    f.center_thz = frequency_thz(center_nm);
    f.fwhm_ghz = wavelength_width_to_ghz(center_nm, fwhm_nm);
    f.peak_transmission = peak;
    f.validate();
    return f;
}

SpectralFilter SpectralFilter::lorentzian_line(double center_thz, double fwhm_ghz, double peak) {
    SpectralFilter f;
    f.kind = FilterKind::lorentzian_line;
    f.name = "lorentzian_line";
    f.center_thz = center_thz;
    f.fwhm_ghz = fwhm_ghz;
    f.peak_transmission = peak;
    f.validate();
    return f;
}

SpectralFilter SpectralFilter::spectrometer_nm(double center_nm, double fwhm_nm) {
    SpectralFilter f;
    f.kind = FilterKind::gaussian_spectrometer;
    f.name = "spectrometer";
    f.center_thz = frequency_thz(center_nm);
    f.fwhm_ghz = wavelength_width_to_ghz(center_nm, fwhm_nm);
    f.validate();
    return f;
}

void SpectralFilter::validate() const {
    require_positive(center_thz, "filter center");
    require_positive(fwhm_ghz, "filter fwhm");
    require_fraction(peak_transmission, "peak_transmission");
    if (kind == FilterKind::etalon && !(fwhm_ghz < fsr_ghz))
        throw std::domain_error("etalon: fwhm must be smaller than the free spectral range");
    if (out_of_band_od < 0) throw std::domain_error("bandpass: optical density must be >= 0");
}

void SpectralFilter::append_features(double lo, double hi, std::vector<double>& out) const {
    auto push = [&](double x) {
        if (x > lo && x < hi) out.push_back(x);
    };
    const double w = fwhm_ghz;
    switch (kind) {
        case FilterKind::etalon: {
            const double k0 = std::ceil(lo / fsr_ghz - 1);
            const double k1 = std::floor(hi / fsr_ghz + 1);
            for (double k = k0; k <= k1; ++k)
                for (double m : {-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0}) push(k * fsr_ghz + m * w);
            break;
        }
        case FilterKind::bandpass:
            push(-0.5 * w);
            push(0.5 * w);
            break;
        case FilterKind::lorentzian_line:
            for (double m : {1e6, 1e5, 1e4, 1e3, 1e2, 10.0, 2.0, 0.5}) {
                push(-m * w);
                push(m * w);
            }
            push(0.0);
            break;
        case FilterKind::vbg:
        case FilterKind::gaussian_spectrometer:
            for (double m : {-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0}) push(m * w);
            break;
    }
}

double filter_transmission_detuned(const SpectralFilter& f, double d_ghz) {
    switch (f.kind) {
        case FilterKind::etalon: {
            const double coef = 2.0 * f.finesse() / phys::pi;
            const double s = std::sin(phys::pi * d_ghz / f.fsr_ghz);
            return f.peak_transmission / (1.0 + coef * coef * s * s);
        }
        case FilterKind::bandpass:
            return std::abs(d_ghz) <= 0.5 * f.fwhm_ghz ? f.peak_transmission
                                                       : f.peak_transmission * std::pow(10.0, -f.out_of_band_od);
        case FilterKind::vbg:
        case FilterKind::gaussian_spectrometer: {
            const double x = d_ghz / f.fwhm_ghz;
            return f.peak_transmission * std::exp(-4.0 * std::log(2.0) * x * x);
        }
        case FilterKind::lorentzian_line: {
            const double x = 2.0 * d_ghz / f.fwhm_ghz;
            return f.peak_transmission / (1.0 + x * x);
        }
    }
    return 0.0;
}

FilterStack::FilterStack(const std::vector<SpectralFilter>& filters, double reference_thz, NoiseComponent component) {
    for (const auto& f : filters) {
        if (component == NoiseComponent::residual && !f.acts_on_residual) continue;
        filters_.push_back(f);
        offsets_.push_back((reference_thz - f.center_thz) * 1e3);
    }
}

double FilterStack::operator()(double d_ghz) const {
    double t = 1.0;
    for (std::size_t k = 0; k < filters_.size(); ++k) t *= filter_transmission_detuned(filters_[k], d_ghz + offsets_[k]);
    return t;
}

double FilterStack::peak_bound() const {
    double t = 1.0;
    for (const auto& f : filters_) t *= f.peak_transmission;
    return t;
}

std::vector<double> FilterStack::features(double half_width_ghz) const {
    std::vector<double> out;
    for (std::size_t k = 0; k < filters_.size(); ++k) {
        std::vector<double> pts;
        filters_[k].append_features(-half_width_ghz + offsets_[k], half_width_ghz + offsets_[k], pts);
        for (double x : pts) out.push_back(x - offsets_[k]);
    }
    return out;
}

double FilterStack::band_integral(double half_width_ghz) const {
    if (filters_.empty()) return 2.0 * half_width_ghz;
    return integrate(*this, -half_width_ghz, half_width_ghz, features(half_width_ghz), 1e-8);
}

double filter_transmission(const SpectralFilter& f, double frequency_thz) {
    return filter_transmission_detuned(f, (frequency_thz - f.center_thz) * 1e3);
}

double filter_stack_transmission(const std::vector<SpectralFilter>& filters, double frequency_thz,
                                 NoiseComponent component) {
    double t = 1.0;
    for (const auto& f : filters) {
        if (component == NoiseComponent::residual && !f.acts_on_residual) continue;
        t *= filter_transmission(f, frequency_thz);
    }
    return t;
}

bool has_etalon(const std::vector<SpectralFilter>& filters) {
    return std::any_of(filters.begin(), filters.end(), [](const auto& f) { return f.kind == FilterKind::etalon; });
}

// ---------------------------------------------------------------------------

double qpm_mismatch(const WavelengthTriple& t, const ConverterModel& model, const RefractiveIndex& index) {
    const double no = index(t.output_nm);
    const double np = index(t.pump_nm);
    const double ni = index(t.input_nm);
    if (!std::isfinite(no) || !std::isfinite(np) || !std::isfinite(ni) || no <= 0 || np <= 0 || ni <= 0)
        throw std::domain_error("qpm_mismatch: refractive index undefined at one of the wavelengths");
    const double inv_period_nm = 1.0 / (model.poling_period_um * 1e3);
    const double per_nm = no / t.output_nm - np / t.pump_nm - ni / t.input_nm - inv_period_nm;
    return 2.0 * phys::pi * per_nm * 1e6;
}

// With k(f) = n(1/f) f and f = 1/lambda, the mismatch per 2 pi is
//   b [2 fp fi] + c [3 fp fi (fp + fi)] + d [(fp+fi)^4 - fp^4 - fi^4] - 1/Lambda,
// with n0 dropping out.  c = -2 d (fp + 2 fi0) removes the curvature at fi0.
QpmDispersion QpmDispersion::calibrated(const ConverterModel& model) {
    model.validate();
    const double fp = 1.0 / model.lambda_pump_nm;
    const double f0 = 1.0 / model.lambda_input_nm;
    const double tie = -2.0 * (fp + 2.0 * f0);
    const double val_b = 2.0 * fp * f0;
    const double val_c = 3.0 * fp * f0 * (fp + f0);
    const double val_d = std::pow(fp + f0, 4) - std::pow(fp, 4) - std::pow(f0, 4);
    const double der_b = 2.0 * fp;
    const double der_c = 3.0 * fp * (fp + 2.0 * f0);
    const double der_d = 4.0 * (std::pow(fp + f0, 3) - std::pow(f0, 3));

    const double w_thz = model.noise_bandwidth_ghz * 1e-3;
    const double slope = phys::sinc_half_max_argument * 4.0 * phys::c_nm_thz /
                         (2.0 * phys::pi * 1e6 * w_thz * model.length_mm);

    Eigen::Matrix2d a;
    a << val_b, val_d + tie * val_c, der_b, der_d + tie * der_c;
    const Eigen::Vector2d rhs(1.0 / (model.poling_period_um * 1e3), slope);
    const Eigen::Vector2d bd = a.partialPivLu().solve(rhs);

    QpmDispersion d;
    d.n0 = model.dispersion_baseline_index;
    d.b_nm = bd(0);
    d.d_nm3 = bd(1);
    d.c_nm2 = tie * bd(1);
    return d;
}

double QpmDispersion::operator()(double wavelength_nm) const {
    const double x = 1.0 / wavelength_nm;
    return n0 + x * (b_nm + x * (c_nm2 + x * d_nm3));
}

double phasematching_response(double delta_k, double length_mm) {
    require_positive(length_mm, "length");
    const double s = sinc(0.5 * delta_k * length_mm);
    return s * s;
}

PhaseMatchingProfile::PhaseMatchingProfile(const ConverterModel& model)
    : model_(model), dispersion_(QpmDispersion::calibrated(model)) {
    idler_thz_ = model.idler_center_thz();
    half_band_ = 0.5 * model.spdc_bandwidth_ghz;
    const double w = model.noise_bandwidth_ghz;
    std::vector<double> bp;
    for (double m : {-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0}) bp.push_back(m * w);
    integral_ = integrate([this](double d) { return (*this)(d); }, -half_band_, half_band_, bp, 1e-10);
}

double PhaseMatchingProfile::operator()(double detuning_ghz) const {
    const double fi = idler_thz_ + detuning_ghz * 1e-3;
    const auto t = WavelengthTriple::from_input_and_pump(wavelength_nm(fi), model_.lambda_pump_nm);
    return phasematching_response(qpm_mismatch(t, model_, dispersion_.as_function()), model_.length_mm);
}

// ---------------------------------------------------------------------------

double effective_pump_power_w(double pump_mw, const ConverterModel& model) {
    if (!(pump_mw >= 0)) throw std::domain_error("pump power must be >= 0");
    const double p = pump_mw * 1e-3;
    return p * std::exp(-model.uv_absorption_coeff * p);
}

double conversion_efficiency(double pump_mw, const ConverterModel& model, bool internal, const LossBudget& losses) {
    const double peff = effective_pump_power_w(pump_mw, model);
    const double s = std::sin(std::sqrt(model.eta_nor * peff) * model.length_mm);
    const double eta_int = s * s;
    return internal ? eta_int : eta_int * losses.mode_matching;
}

double small_signal_conversion(double pump_mw, const ConverterModel& model) {
    if (!(pump_mw >= 0)) throw std::domain_error("pump power must be >= 0");
    return model.eta_nor * pump_mw * 1e-3 * model.length_mm * model.length_mm;
}

double cascaded_filter_factor(const std::vector<SpectralFilter>& filters, const ConverterModel& model) {
    if (filters.empty()) return 1.0;
    const PhaseMatchingProfile pm(model);
    const double hb = pm.band_half_width_ghz();
    const FilterStack stack(filters, model.output_center_thz(), NoiseComponent::cascaded);
    auto bp = stack.features(hb);
    for (double m : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) bp.push_back(m * model.noise_bandwidth_ghz);
    const double num = integrate([&](double d) { return pm(d) * stack(d); }, -hb, hb, bp, 1e-8);
    return num / pm.integral();
}

double residual_filter_factor(const std::vector<SpectralFilter>& filters, const ConverterModel& model) {
    const double hb = 0.5 * model.spdc_bandwidth_ghz;
    const FilterStack stack(filters, model.output_center_thz(), NoiseComponent::residual);
    if (stack.empty()) return 1.0;
    return stack.band_integral(hb) / model.spdc_bandwidth_ghz;
}

NoiseFactors noise_filter_factors(const std::vector<SpectralFilter>& filters, const ConverterModel& model) {
    return {residual_filter_factor(filters, model), cascaded_filter_factor(filters, model)};
}

NoiseBreakdown noise_breakdown(double pump_mw, const NoiseFactors& factors, const ConverterModel& model) {
    if (!(pump_mw >= 0)) throw std::domain_error("pump power must be >= 0");
    NoiseBreakdown n;
    n.dark = model.dark_count_rate;
    n.residual = model.noise_linear_coeff * pump_mw * factors.residual;
    n.cascaded = model.noise_quadratic_coeff * pump_mw * pump_mw * factors.cascaded;
    return n;
}

NoiseBreakdown noise_breakdown(double pump_mw, const std::vector<SpectralFilter>& filters,
                               const ConverterModel& model) {
    return noise_breakdown(pump_mw, noise_filter_factors(filters, model), model);
}

double noise_rate(double pump_mw, const std::vector<SpectralFilter>& filters, const ConverterModel& model) {
    return noise_breakdown(pump_mw, filters, model).total();
}

double consistent_pair_rate_coeff(const ConverterModel& model, const LossBudget& losses) {
    const PhaseMatchingProfile pm(model);
    const double per_mw2 = model.eta_nor * 1e-3 * model.length_mm * model.length_mm * pm.integral() /
                           model.spdc_bandwidth_ghz * losses.detection_path();
    return per_mw2 > 0 ? model.noise_quadratic_coeff / per_mw2 : 0.0;
}

double signal_luminescence_rate(double pump_mw, const std::vector<SpectralFilter>& filters,
                                const ConverterModel& model, double transmission) {
    const double hb = 0.5 * model.spdc_bandwidth_ghz;
    const FilterStack stack(filters, model.signal_center_thz(), NoiseComponent::cascaded);
    const double band = stack.band_integral(hb);
    return model.signal_luminescence_coeff * std::pow(pump_mw, model.signal_luminescence_exponent) * transmission * band;
}

double detected_signal_rate(const ConverterModel& model, double pump_mw, const LossBudget& losses,
                            const std::vector<SpectralFilter>& filters) {
    const double eta_ext = conversion_efficiency(pump_mw, model, false, losses);
    return model.input_flux * losses.eta_loss(has_etalon(filters)) * eta_ext + noise_rate(pump_mw, filters, model);
}

// ---------------------------------------------------------------------------

std::vector<double> noise_spectrum(double pump_mw, const std::vector<SpectralFilter>& filters,
                                   const ConverterModel& model, const std::vector<double>& grid,
                                   const SpectralFilter& spectrometer) {
    if (grid.empty()) throw std::domain_error("noise_spectrum: empty grid");
    if (!std::is_sorted(grid.begin(), grid.end())) throw std::domain_error("noise_spectrum: grid must be sorted");

    const PhaseMatchingProfile pm(model);
    const double nu0 = model.output_center_thz();
    const double hb = pm.band_half_width_ghz();
    const double casc = model.noise_quadratic_coeff * pump_mw * pump_mw / pm.integral();  // Hz/GHz at PM peak
    const double resid = model.noise_linear_coeff * pump_mw / model.spdc_bandwidth_ghz;     // Hz/GHz

    const FilterStack casc_stack(filters, nu0, NoiseComponent::cascaded);
    const FilterStack resid_stack(filters, nu0, NoiseComponent::residual);
    auto density = [&](double d) {
        if (std::abs(d) > hb) return 0.0;
        return casc * pm(d) * casc_stack(d) + resid * resid_stack(d);
    };
    auto features = casc_stack.features(hb);
    features.push_back(-hb);
    features.push_back(hb);

    // Gaussian instrument response, unit area in GHz.
    const double sigma = spectrometer.fwhm_ghz / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * phys::pi));
    std::vector<double> out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double c = (grid[k] - nu0) * 1e3;
        const double lo = std::max(-hb, c - 8 * sigma);
        const double hi = std::min(hb, c + 8 * sigma);
        double value = 0.0;
        if (hi > lo) {
            std::vector<double> bp{c};
            for (double x : features)
                if (x > lo && x < hi) bp.push_back(x);
            value = integrate(
                [&](double d) {
                    const double u = (d - c) / sigma;
                    return density(d) * norm * std::exp(-0.5 * u * u);
                },
                lo, hi, bp, 1e-7);
        }
        double width = 0.0;  // bin width in GHz
        if (grid.size() == 1) {
            width = spectrometer.fwhm_ghz;
        } else {
            const double left = k == 0 ? grid[1] - grid[0] : grid[k] - grid[k - 1];
            const double right = k + 1 == grid.size() ? grid[k] - grid[k - 1] : grid[k + 1] - grid[k];
            width = 0.5 * (left + right) * 1e3;
        }
        out[k] = value * width;
    }
    return out;
}

}  // namespace qfc
