#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "qfc/fock.hpp"

using namespace qfc;
using C = std::complex<double>;

namespace {

CouplingParams<double> coupling(double kappa, double gamma, C amp = {1, 0}, double t = 1) {
    CouplingParams<double> p;
    p.kappa = kappa;
    p.gamma = gamma;
    p.pump_amplitude = amp;
    p.interaction_time = t;
    return p;
}

}  // namespace

TEST(FockBasis, DimensionAndIndexRoundTrip) {
    const FockBasis b(3);
    EXPECT_EQ(b.dim(), 64);
    for (Eigen::Index k = 0; k < b.dim(); ++k) {
        const auto o = b.occupation(k);
        EXPECT_EQ(b.index(o[0], o[1], o[2]), k);
    }
    EXPECT_EQ(b.index(1, 2, 3), (1 * 4 + 2) * 4 + 3);
    EXPECT_THROW(b.index(4, 0, 0), std::out_of_range);
    EXPECT_THROW(FockBasis(0), std::domain_error);
}

TEST(FockOperators, AnnihilatorMatrixElements) {
    const FockBasis b(3);
    const auto a = build_annihilator<double>(b, Mode::idler);
    // a|n> = sqrt(n)|n-1>
    EXPECT_DOUBLE_EQ(a(b.index(0, 2, 1), b.index(0, 3, 1)).real(), std::sqrt(3.0));
    EXPECT_DOUBLE_EQ(a(b.index(2, 0, 0), b.index(2, 1, 0)).real(), 1.0);
    // Commutator is the identity away from the truncation edge.
    const ComplexMatrix<double> comm = a * a.adjoint() - a.adjoint() * a;
    for (Eigen::Index k = 0; k < b.dim(); ++k)
        EXPECT_NEAR(comm(k, k).real(), b.occupation(k, Mode::idler) == 3 ? -3.0 : 1.0, 1e-15);
    EXPECT_EQ(build_annihilator<double>(b, "s"), build_annihilator<double>(b, Mode::signal));
    EXPECT_THROW(mode_from_label("pump"), std::domain_error);
}

TEST(FockOperators, HamiltoniansAreHermitianWithPinnedSign) {
    const FockBasis b(2);
    const auto p = coupling(0.7, 0.3, std::polar(1.2, 0.4));
    const auto hq = build_qfc_hamiltonian<double>(b, p);
    const auto hs = build_spdc_hamiltonian<double>(b, p);
    EXPECT_LT(hermiticity_defect(hq), 1e-15);
    EXPECT_LT(hermiticity_defect(hs), 1e-15);
    // <1,1,0|H_SPDC|0,0,0> = +i gamma A
    const C expected = C(0, 1) * 0.3 * std::polar(1.2, 0.4);
    EXPECT_NEAR(std::abs(hs(b.index(1, 1, 0), b.index(0, 0, 0)) - expected), 0.0, 1e-15);
    // <0,0,1|H_QFC|0,1,0> = +i kappa A
    EXPECT_NEAR(std::abs(hq(b.index(0, 0, 1), b.index(0, 1, 0)) - 0.7 * C(0, 1) * std::polar(1.2, 0.4)), 0.0, 1e-15);
    EXPECT_THROW(build_qfc_hamiltonian<double>(b, coupling(-1, 0)), std::domain_error);
}

TEST(FockEvolution, UnitaryAndRejectsBadInput) {
    const FockBasis b(3);
    const auto p = coupling(1.3, 0.8, std::polar(0.9, 1.1), 2.0);
    const ComplexMatrix<double> h = build_qfc_hamiltonian<double>(b, p) + build_spdc_hamiltonian<double>(b, p);
    EXPECT_LT(unitarity_defect(evolution_operator<double>(h, 2.0)), 1e-12);

    ComplexMatrix<double> bad = h;
    bad(0, 1) += 0.5;
    EXPECT_THROW(evolution_operator<double>(bad, 1.0), std::domain_error);

    auto s = FockState<double>::vacuum(b);
    s.amplitudes *= 2.0;
    EXPECT_THROW(evolve<double>(s, h, 1.0), std::domain_error);
    EXPECT_THROW(evolve<double>(FockState<double>::vacuum(FockBasis(2)), h, 1.0), std::domain_error);
}

// Single photon through the converter: <0,0,1|psi> = -sin(kappa A t) for real A.
TEST(FockEvolution, BeamsplitterLaw) {
    const FockBasis b(1);
    const auto in = FockState<double>::basis_state(b, 0, 1, 0);
    for (double theta : {0.0, 0.3, 1.0, 1.5707963267948966, 2.2, 3.141592653589793}) {
        const auto p = coupling(1.0, 0.0);
        const auto out = evolve<double>(in, build_qfc_hamiltonian<double>(b, p), theta);
        EXPECT_NEAR(out.population(0, 0, 1), std::sin(theta) * std::sin(theta), 1e-12);
        EXPECT_NEAR(out.amplitude(0, 0, 1).real(), -std::sin(theta), 1e-12);
        EXPECT_NEAR(out.amplitude(0, 1, 0).real(), std::cos(theta), 1e-12);
    }
}

// Two-mode squeezed vacuum: c_n = (-tanh r)^n / cosh r with r = gamma |A| t.
TEST(FockEvolution, TwoModeSqueezedVacuumClosedForm) {
    const FockBasis b(7);
    const double r = 0.2;
    const auto p = coupling(0.0, r);
    const auto st = evolve<double>(FockState<double>::vacuum(b), build_spdc_hamiltonian<double>(b, p), 1.0);
    for (int n = 0; n <= 4; ++n) {
        const double expected = std::pow(-std::tanh(r), n) / std::cosh(r);
        // Relative: the top levels feel the truncation edge.
        EXPECT_NEAR(st.amplitude(n, n, 0).real(), expected, 1e-6 * std::abs(expected)) << "n = " << n;
        EXPECT_NEAR(st.amplitude(n, n, 0).imag(), 0.0, 1e-10);
    }
    const auto obs = correlation_observables(st);
    const double sh2 = std::sinh(r) * std::sinh(r);
    EXPECT_NEAR(obs.mean_photons[0], sh2, 1e-10);
    EXPECT_NEAR(*obs.g2_signal_idler, 2.0 + 1.0 / sh2, 1e-6);
    EXPECT_NEAR(*obs.g2_auto[0], 2.0, 1e-6);
    EXPECT_FALSE(obs.g2_signal_output.has_value());  // no output photons
}

TEST(FockCascade, LeadingOrderAmplitudes) {
    const FockBasis b(3);
    for (double g : {0.01, 0.05})
        for (double k : {0.01, 0.05}) {
            const auto st = cascaded_evolution<double>(b, coupling(k, g));
            EXPECT_NEAR(std::abs(st.amplitude(1, 1, 0)) / g, 1.0, 0.05);
            EXPECT_NEAR(std::abs(st.amplitude(1, 0, 1)) / (g * k), 1.0, 0.05);
        }
    // Product form and joint exponential differ at second order.
    const auto p = coupling(0.5, 0.5);
    const auto seq = cascaded_evolution<double>(b, p, CascadeOrder::sequential);
    const auto joint = cascaded_evolution<double>(b, p, CascadeOrder::joint);
    EXPECT_GT((seq.amplitudes - joint.amplitudes).norm(), 1e-3);
}

TEST(FockCascade, TruncationFlag) {
    const auto small = cascaded_observables_checked<double>(3, coupling(0.01, 0.01));
    EXPECT_FALSE(small.truncation_limited);
    EXPECT_LT(small.max_change, 1e-6);
    const auto large = cascaded_observables_checked<double>(3, coupling(0.5, 0.8));
    EXPECT_TRUE(large.truncation_limited);
    const auto recs = large.observables.records(4, large.truncation_limited);
    ASSERT_EQ(recs.size(), 6u);
    EXPECT_EQ(recs[0].label, "g2_s_i");
    EXPECT_TRUE(recs[0].truncation_limited);
}

TEST(FockObservablesTest, UndefinedCorrelationOnVacuum) {
    const auto obs = correlation_observables(FockState<double>::vacuum(FockBasis(2)));
    EXPECT_FALSE(obs.g2_signal_idler.has_value());
    EXPECT_THROW(require(obs.g2_signal_idler, "g2_s_i"), UndefinedCorrelation);
}

TEST(FockEngine, FloatScalar) {
    const FockBasis b(1);
    CouplingParams<float> p;
    p.kappa = 1.0f;
    const auto out = evolve<float>(FockState<float>::basis_state(b, 0, 1, 0), build_qfc_hamiltonian<float>(b, p), 0.5f,
                                   1e-4f);
    EXPECT_NEAR(out.population(0, 0, 1), std::sin(0.5f) * std::sin(0.5f), 1e-5);
}
