#include <gtest/gtest.h>

#include <cmath>

#include "qfc/config.hpp"
#include "qfc/quadrature.hpp"
#include "qfc/spectral.hpp"

using namespace qfc;

namespace {

ConverterModel nominal() {
    ConverterModel m;
    m.eta_nor = 0.01;
    m.uv_absorption_coeff = 2.0;
    m.noise_linear_coeff = 50;
    m.noise_quadratic_coeff = 3;
    return m;
}

}  // namespace

TEST(Wavelengths, EnergyConservation) {
    EXPECT_NEAR(sfg_output_wavelength(1311.0, 514.5), 369.49301561216106, 1e-9);
    const auto sig = spdc_signal_wavelength(514.5, 1311.0);
    EXPECT_NEAR(sig.nm, 846.8418079096045, 1e-9);
    EXPECT_TRUE(sig.within_validity);
    const auto gap = energy_gap(369.5, 1311.0);
    EXPECT_NEAR(gap.ev, 2.409736348207125, 1e-12);
    EXPECT_NEAR(gap.thz, 582.6716566225825, 1e-9);
    EXPECT_LT(energy_gap(1311.0, 369.5).ev, 0);

    // Degenerate pump/idler: far outside the validity window, still finite.
    const auto far = spdc_signal_wavelength(514.5, 514.6);
    EXPECT_FALSE(far.within_validity);
    EXPECT_TRUE(std::isfinite(far.nm));
    EXPECT_THROW(spdc_signal_wavelength(514.5, 500.0), std::domain_error);
    EXPECT_THROW(sfg_output_wavelength(-1, 514.5), std::domain_error);

    const auto t = WavelengthTriple::from_input_and_pump(1311.0, 514.5);
    EXPECT_NEAR(frequency_thz(t.output_nm), frequency_thz(1311.0) + frequency_thz(514.5), 1e-9);
    EXPECT_NEAR(frequency_thz(t.signal_nm) + frequency_thz(1311.0), frequency_thz(514.5), 1e-9);
}

TEST(Wavelengths, WidthConversion) {
    EXPECT_NEAR(wavelength_width_to_ghz(369.5, 6.0), 13174.77077790453, 1e-6);
}

TEST(Filters, AiryEtalon) {
    const auto f = SpectralFilter::etalon(811.3, 340, 5.5, 0.5);
    EXPECT_DOUBLE_EQ(filter_transmission_detuned(f, 0), 0.5);
    EXPECT_NEAR(filter_transmission_detuned(f, 170), 0.0003226242329511379, 1e-15);
    EXPECT_NEAR(filter_transmission_detuned(f, 2.75), 0.25, 1e-3);  // half maximum at FWHM/2
    EXPECT_NEAR(filter_transmission_detuned(f, 340), 0.5, 1e-12);
    EXPECT_FALSE(f.acts_on_residual);
    EXPECT_THROW(SpectralFilter::etalon(811.3, 5, 5.5, 0.5), std::domain_error);
}

TEST(Filters, ShapesAtHalfWidth) {
    const auto vbg = SpectralFilter::vbg_nm(847, 1.0);
    EXPECT_NEAR(filter_transmission_detuned(vbg, 0.5 * vbg.fwhm_ghz), 0.5, 1e-12);
    const auto line = SpectralFilter::lorentzian_line(811.3, 0.02);
    EXPECT_NEAR(filter_transmission_detuned(line, 0.01), 0.5, 1e-12);
    const auto bp = SpectralFilter::bandpass_nm(369.5, 6, 6);
    EXPECT_DOUBLE_EQ(filter_transmission_detuned(bp, 0.4 * bp.fwhm_ghz), 1.0);
    EXPECT_NEAR(filter_transmission_detuned(bp, 0.6 * bp.fwhm_ghz), 1e-6, 1e-18);
    EXPECT_EQ(filter_kind_from_name("vbg"), FilterKind::vbg);
    EXPECT_THROW(filter_kind_from_name("prism"), std::domain_error);
}

TEST(Filters, StackIsOrderIndependent) {
    const auto m = nominal();
    const auto lib = default_filter_library(m);
    const std::vector<SpectralFilter> ab{lib.at("uv_bandpass"), lib.at("etalon")};
    const std::vector<SpectralFilter> ba{lib.at("etalon"), lib.at("uv_bandpass")};
    for (double f : {811.0, 811.3, 811.4, 812.0})
        EXPECT_EQ(filter_stack_transmission(ab, f), filter_stack_transmission(ba, f));
    // The etalon does not act on the residual component.
    const double off = m.output_center_thz() + 0.17;
    EXPECT_NEAR(filter_stack_transmission(ab, off, NoiseComponent::residual), 1.0, 1e-12);
}

TEST(Quadrature, KnownIntegrals) {
    EXPECT_NEAR(integrate([](double x) { return std::sin(x); }, 0, phys::pi), 2.0, 1e-9);
    // Narrow Lorentzian needs breakpoints.
    const double w = 1e-3;
    auto lor = [&](double x) { return 1.0 / (1.0 + 4 * x * x / (w * w)); };
    EXPECT_NEAR(integrate(lor, -100, 100, {-10 * w, -w, 0, w, 10 * w}) / (phys::pi * w / 2), 1.0, 1e-4);
}

TEST(PhaseMatching, DispersionAndBandwidth) {
    const auto m = nominal();
    const auto disp = QpmDispersion::calibrated(m);
    EXPECT_NEAR(qpm_mismatch(m.triple(), m, disp.as_function()), 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(phasematching_response(0, m.length_mm), 1.0);
    EXPECT_NEAR(phasematching_response(2 * phys::pi / m.length_mm, m.length_mm), 0.0, 1e-15);

    const PhaseMatchingProfile pm(m);
    EXPECT_NEAR(pm(0), 1.0, 1e-9);
    // Half maximum at +-W/2 up to the residual cubic term.
    EXPECT_NEAR(pm(0.5 * m.noise_bandwidth_ghz), 0.5, 5e-3);
    EXPECT_NEAR(pm(-0.5 * m.noise_bandwidth_ghz), 0.5, 5e-3);
    // Area of a pure sinc^2 with FWHM W over +-10 THz: 1.09088 W.
    EXPECT_DOUBLE_EQ(pm.band_half_width_ghz(), 0.5 * m.spdc_bandwidth_ghz);
    EXPECT_NEAR(pm.integral() / (1.0908796510194507 * m.noise_bandwidth_ghz), 1.0, 0.02);
}

TEST(Efficiency, SaturatedSinSquared) {
    const auto m = nominal();
    LossBudget l;
    l.mode_matching = 0.5;
    EXPECT_NEAR(conversion_efficiency(200, m, true, l), 0.11854800153996922, 1e-14);
    EXPECT_NEAR(conversion_efficiency(200, m, false, l), 0.5 * 0.11854800153996922, 1e-14);
    EXPECT_NEAR(small_signal_conversion(200, m), 0.18432, 1e-14);
    EXPECT_DOUBLE_EQ(conversion_efficiency(0, m, true, l), 0.0);
    EXPECT_THROW(conversion_efficiency(-1, m, true, l), std::domain_error);
    // Absorption bends the curve over: maximum at P_eff' = 0, i.e. P = 1 / coeff.
    EXPECT_GT(conversion_efficiency(500, m, true, l), conversion_efficiency(900, m, true, l));
}

TEST(Noise, ScalingLawAndFilterFactors) {
    const auto m = nominal();
    const auto lib = default_filter_library(m);
    const std::vector<SpectralFilter> none;
    EXPECT_DOUBLE_EQ(noise_rate(0, none, m), m.dark_count_rate);
    const auto b = noise_breakdown(100, none, m);
    EXPECT_DOUBLE_EQ(b.residual, 50 * 100);
    EXPECT_DOUBLE_EQ(b.cascaded, 3 * 100 * 100);

    // Etalon over a phase-matching band many FSRs wide: the Airy mean
    // peak / sqrt(1 + (2F/pi)^2).
    const auto& et = lib.at("etalon");
    const double k = 2 * et.finesse() / phys::pi;
    const double airy_mean = et.peak_transmission / std::sqrt(1 + k * k);
    EXPECT_NEAR(cascaded_filter_factor({et}, m) / airy_mean, 1.0, 0.05);
    EXPECT_DOUBLE_EQ(residual_filter_factor({et}, m), 1.0);

    // Ion-line filter: Lorentzian area over the phase-matching area.
    const auto& ion = lib.at("ion_line");
    const PhaseMatchingProfile pm(m);
    EXPECT_NEAR(cascaded_filter_factor({ion}, m) / (phys::pi * ion.fwhm_ghz / 2 / pm.integral()), 1.0, 1e-3);

    // Luminescence: coeff P^exponent times band integral.
    auto lm = m;
    lm.signal_luminescence_coeff = 2.5;
    const auto vbg = SpectralFilter::vbg_nm(m.triple().signal_nm, 1.0);
    const double gauss_area = vbg.fwhm_ghz * std::sqrt(phys::pi / (4 * std::log(2.0)));
    EXPECT_NEAR(signal_luminescence_rate(10, {vbg}, lm, 0.1) / (2.5 * 100 * 0.1 * gauss_area), 1.0, 1e-6);
}

TEST(Noise, PairRateReproducesQuadraticCoefficient) {
    auto m = nominal();
    LossBudget l;
    m.pair_rate_coeff = consistent_pair_rate_coeff(m, l);
    const PhaseMatchingProfile pm(m);
    const double per_pair = small_signal_conversion(1, m) * pm.integral() / m.spdc_bandwidth_ghz * l.detection_path();
    EXPECT_NEAR(m.pair_rate_coeff * per_pair, m.noise_quadratic_coeff, 1e-9);
}

TEST(Noise, SpectrumPeaksAtOutputWavelength) {
    const auto m = nominal();
    const auto spec = SpectralFilter::spectrometer_nm(m.triple().output_nm, 0.15);
    std::vector<double> grid;
    for (double nm = 374; nm >= 365; nm -= 0.05) grid.push_back(frequency_thz(nm));
    const auto s = noise_spectrum(200, {}, m, grid, spec);
    const auto peak = std::max_element(s.begin(), s.end()) - s.begin();
    EXPECT_NEAR(wavelength_nm(grid[peak]), 369.49, 0.06);
}

TEST(Model, ValidationRejectsNonsense) {
    auto m = nominal();
    m.signal_luminescence_exponent = -1;
    EXPECT_THROW(m.validate(), std::domain_error);
    LossBudget l;
    l.detector_efficiency = 1.5;
    EXPECT_THROW(l.validate(), std::domain_error);
}
