#pragma once

// Truncated three-mode Fock space (signal, idler, output) for the cascaded
// SPDC + frequency-conversion process.
//
// Conventions:
//   * hbar = 1, couplings are angular rates and kappa*|A_p|*t is an angle.
//   * H_QFC  = i kappa A_p a_i a_o^dag + h.c.
//   * H_SPDC = i gamma A_p a_s^dag a_i^dag + h.c.
//     so <1,1,0|H_SPDC|0,0,0> = +i gamma A_p.
//   * U(t) = exp(+i t H), the cascade is U_QFC * U_SPDC (two exponentials).
//   * Basis order is lexicographic in (n_s, n_i, n_o), n_o fastest.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfc/errors.hpp"

namespace qfc {

enum class Mode { signal = 0, idler = 1, output = 2 };

inline Mode mode_from_label(std::string_view label) {
    if (label == "signal" || label == "s") return Mode::signal;
    if (label == "idler" || label == "i" || label == "input") return Mode::idler;
    if (label == "output" || label == "o") return Mode::output;
    throw std::domain_error("unknown mode label '" + std::string(label) + "'");
}

inline const char* mode_label(Mode m) {
    switch (m) {
        case Mode::signal: return "signal";
        case Mode::idler: return "idler";
        case Mode::output: return "output";
    }
    return "?";
}

template <typename Real = double>
using ComplexVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

template <typename Real = double>
using ComplexMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

class FockBasis {
public:
    explicit FockBasis(int n_max = 3) : n_max_(n_max) {
        if (n_max < 1) throw std::domain_error("FockBasis: n_max must be >= 1");
    }

    int n_max() const { return n_max_; }
    int levels() const { return n_max_ + 1; }
    Eigen::Index dim() const {
        const Eigen::Index l = levels();
        return l * l * l;
    }

    Eigen::Index index(int ns, int ni, int no) const {
        if (ns < 0 || ni < 0 || no < 0 || ns > n_max_ || ni > n_max_ || no > n_max_)
            throw std::out_of_range("FockBasis: occupation outside truncation");
        const Eigen::Index l = levels();
        return (static_cast<Eigen::Index>(ns) * l + ni) * l + no;
    }

    std::array<int, 3> occupation(Eigen::Index k) const {
        const int l = levels();
        const int no = static_cast<int>(k % l);
        const int ni = static_cast<int>((k / l) % l);
        const int ns = static_cast<int>(k / (static_cast<Eigen::Index>(l) * l));
        return {ns, ni, no};
    }

    int occupation(Eigen::Index k, Mode m) const { return occupation(k)[static_cast<int>(m)]; }

    bool operator==(const FockBasis& other) const { return n_max_ == other.n_max_; }

private:
    int n_max_;
};

template <typename Real = double>
struct CouplingParams {
    Real kappa = 0;
    Real gamma = 0;
    std::complex<Real> pump_amplitude{1, 0};
    Real interaction_time = 1;

    void validate() const {
        if (!(kappa >= 0) || !(gamma >= 0) || !(interaction_time >= 0))
            throw std::domain_error("CouplingParams: kappa, gamma and interaction_time must be >= 0");
    }
    // Effective rotation angles of the two stages.
    Real conversion_angle() const { return kappa * std::abs(pump_amplitude) * interaction_time; }
    Real squeezing_angle() const { return gamma * std::abs(pump_amplitude) * interaction_time; }
};

template <typename Real = double>
struct FockState {
    FockBasis basis;
    ComplexVector<Real> amplitudes;

    static FockState basis_state(const FockBasis& b, int ns, int ni, int no) {
        FockState s{b, ComplexVector<Real>::Zero(b.dim())};
        s.amplitudes(b.index(ns, ni, no)) = 1;
        return s;
    }
    static FockState vacuum(const FockBasis& b) { return basis_state(b, 0, 0, 0); }

    std::complex<Real> amplitude(int ns, int ni, int no) const {
        return amplitudes(basis.index(ns, ni, no));
    }
    Real population(int ns, int ni, int no) const { return std::norm(amplitude(ns, ni, no)); }
    Real norm() const { return amplitudes.norm(); }
};

// ---------------------------------------------------------------------------
// Operators

template <typename Real = double>
ComplexMatrix<Real> build_annihilator(const FockBasis& basis, Mode mode) {
    const Eigen::Index d = basis.dim();
    ComplexMatrix<Real> a = ComplexMatrix<Real>::Zero(d, d);
    for (Eigen::Index col = 0; col < d; ++col) {
        auto occ = basis.occupation(col);
        int& n = occ[static_cast<int>(mode)];
        if (n == 0) continue;
        const Real amp = std::sqrt(static_cast<Real>(n));
        --n;
        a(basis.index(occ[0], occ[1], occ[2]), col) = amp;
    }
    return a;
}

template <typename Real = double>
ComplexMatrix<Real> build_annihilator(const FockBasis& basis, std::string_view mode_label_) {
    return build_annihilator<Real>(basis, mode_from_label(mode_label_));
}

template <typename Real = double>
ComplexMatrix<Real> number_operator(const FockBasis& basis, Mode mode) {
    const Eigen::Index d = basis.dim();
    ComplexMatrix<Real> n = ComplexMatrix<Real>::Zero(d, d);
    for (Eigen::Index k = 0; k < d; ++k) n(k, k) = static_cast<Real>(basis.occupation(k, mode));
    return n;
}

template <typename Real = double>
ComplexMatrix<Real> build_qfc_hamiltonian(const FockBasis& basis, const CouplingParams<Real>& p) {
    p.validate();
    const auto ai = build_annihilator<Real>(basis, Mode::idler);
    const auto ao = build_annihilator<Real>(basis, Mode::output);
    const std::complex<Real> i(0, 1);
    ComplexMatrix<Real> h = i * p.kappa * p.pump_amplitude * (ai * ao.adjoint());
    return h + h.adjoint().eval();
}

template <typename Real = double>
ComplexMatrix<Real> build_spdc_hamiltonian(const FockBasis& basis, const CouplingParams<Real>& p) {
    p.validate();
    const auto as = build_annihilator<Real>(basis, Mode::signal);
    const auto ai = build_annihilator<Real>(basis, Mode::idler);
    const std::complex<Real> i(0, 1);
    ComplexMatrix<Real> h = i * p.gamma * p.pump_amplitude * (as.adjoint() * ai.adjoint());
    return h + h.adjoint().eval();
}

template <typename Derived>
typename Derived::RealScalar hermiticity_defect(const Eigen::MatrixBase<Derived>& h) {
    if (h.size() == 0) return 0;
    return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

template <typename Derived>
typename Derived::RealScalar unitarity_defect(const Eigen::MatrixBase<Derived>& u) {
    using Plain = typename Derived::PlainObject;
    if (u.size() == 0) return 0;
    return (u.adjoint() * u - Plain::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

// exp(i t H) for Hermitian H via the eigendecomposition H = V diag(w) V^dag.
// Throws std::domain_error for non-Hermitian input and ConvergenceError if the
// decomposition residual (scaled by |t|) exceeds `tolerance`.
template <typename Real = double>
ComplexMatrix<Real> evolution_operator(const ComplexMatrix<Real>& h, Real time, Real tolerance = Real(1e-10)) {
    if (!(tolerance > 0)) throw std::domain_error("evolve: tolerance must be > 0");
    if (h.rows() != h.cols()) throw std::domain_error("evolve: Hamiltonian must be square");
    const Real scale = std::max<Real>(1, h.size() ? h.cwiseAbs().maxCoeff() : Real(0));
    if (hermiticity_defect(h) > Real(1e-12) * scale)
        throw std::domain_error("evolve: Hamiltonian is not Hermitian");

    Eigen::SelfAdjointEigenSolver<ComplexMatrix<Real>> eig(h);
    if (eig.info() != Eigen::Success) throw ConvergenceError("evolve: eigendecomposition failed");
    const auto& v = eig.eigenvectors();
    const auto& w = eig.eigenvalues();

    const Real residual = (h * v - v * w.asDiagonal()).cwiseAbs().maxCoeff();
    const Real ortho = unitarity_defect(v);
    const Real estimate = std::abs(time) * residual * static_cast<Real>(h.rows()) + ortho;
    if (estimate > tolerance)
    {
        char msg[128];
        std::snprintf(msg, sizeof msg, "evolve: eigendecomposition error estimate %.3e exceeds tolerance %.3e",
                      static_cast<double>(estimate), static_cast<double>(tolerance));
        throw ConvergenceError(msg);
    }

    const std::complex<Real> i(0, 1);
    ComplexVector<Real> phases = (i * time * w.template cast<std::complex<Real>>()).array().exp();
    return v * phases.asDiagonal() * v.adjoint();
}

template <typename Real = double>
FockState<Real> evolve(const FockState<Real>& state, const ComplexMatrix<Real>& h, Real time,
                       Real tolerance = Real(1e-10)) {
    if (h.rows() != state.basis.dim()) throw std::domain_error("evolve: operator/basis size mismatch");
    if (std::abs(state.norm() - 1) > Real(1e-12)) throw std::domain_error("evolve: input state is not normalized");
    if (time == 0) return state;
    return FockState<Real>{state.basis, evolution_operator<Real>(h, time, tolerance) * state.amplitudes};
}

enum class CascadeOrder {
    sequential,  // U_QFC * U_SPDC, as two separate exponentials
    joint        // exp(i t (H_QFC + H_SPDC)), for sensitivity studies
};

template <typename Real = double>
FockState<Real> cascaded_evolution(const FockBasis& basis, const CouplingParams<Real>& p,
                                   CascadeOrder order = CascadeOrder::sequential,
                                   Real tolerance = Real(1e-10)) {
    p.validate();
    const auto h_qfc = build_qfc_hamiltonian<Real>(basis, p);
    const auto h_spdc = build_spdc_hamiltonian<Real>(basis, p);
    const auto vac = FockState<Real>::vacuum(basis);
    if (order == CascadeOrder::joint) {
        const ComplexMatrix<Real> h = h_qfc + h_spdc;
        return evolve<Real>(vac, h, p.interaction_time, tolerance);
    }
    return evolve<Real>(evolve<Real>(vac, h_spdc, p.interaction_time, tolerance), h_qfc,
                        p.interaction_time, tolerance);
}

// ---------------------------------------------------------------------------
// Observables

struct ModeCorrelation {
    std::string label;             // "g2_s_i", "g2_o(0)", ...
    std::optional<double> value;   // empty when a mean photon number < 1e-15
    int basis_levels = 0;          // n_max + 1
    bool truncation_limited = false;
};

template <typename Real = double>
struct FockObservables {
    std::array<Real, 3> mean_photons{};
    std::optional<Real> g2_signal_idler;
    std::optional<Real> g2_signal_output;
    std::optional<Real> g2_idler_output;
    std::array<std::optional<Real>, 3> g2_auto{};  // g2(0) per mode

    std::vector<ModeCorrelation> records(int levels, bool truncation_limited) const {
        auto rec = [&](std::string name, std::optional<Real> v) {
            ModeCorrelation r{std::move(name), std::nullopt, levels, truncation_limited};
            if (v) r.value = static_cast<double>(*v);
            return r;
        };
        return {rec("g2_s_i", g2_signal_idler),  rec("g2_s_o", g2_signal_output),
                rec("g2_i_o", g2_idler_output),  rec("g2_s(0)", g2_auto[0]),
                rec("g2_i(0)", g2_auto[1]),      rec("g2_o(0)", g2_auto[2])};
    }
};

inline constexpr double kMinMeanPhotons = 1e-15;

template <typename Real = double>
FockObservables<Real> correlation_observables(const FockState<Real>& state) {
    const FockBasis& b = state.basis;
    FockObservables<Real> out;
    std::array<Real, 3> nn_diag{};       // <n(n-1)> per mode
    Real n_si = 0, n_so = 0, n_io = 0;   // <n_a n_b>
    for (Eigen::Index k = 0; k < b.dim(); ++k) {
        const Real p = std::norm(state.amplitudes(k));
        if (p == 0) continue;
        const auto occ = b.occupation(k);
        for (int m = 0; m < 3; ++m) {
            out.mean_photons[m] += p * occ[m];
            nn_diag[m] += p * occ[m] * (occ[m] - 1);
        }
        n_si += p * occ[0] * occ[1];
        n_so += p * occ[0] * occ[2];
        n_io += p * occ[1] * occ[2];
    }
    const auto& n = out.mean_photons;
    auto cross = [&](Real nab, int a, int c) -> std::optional<Real> {
        if (n[a] < kMinMeanPhotons || n[c] < kMinMeanPhotons) return std::nullopt;
        return nab / (n[a] * n[c]);
    };
    out.g2_signal_idler = cross(n_si, 0, 1);
    out.g2_signal_output = cross(n_so, 0, 2);
    out.g2_idler_output = cross(n_io, 1, 2);
    for (int m = 0; m < 3; ++m)
        if (n[m] >= kMinMeanPhotons) out.g2_auto[m] = nn_diag[m] / (n[m] * n[m]);
    return out;
}

// Throws UndefinedCorrelation instead of returning an empty optional.
template <typename Real = double>
Real require(const std::optional<Real>& v, const char* what) {
    if (!v) throw UndefinedCorrelation(std::string(what) + ": mean photon number below 1e-15");
    return *v;
}

// Evaluates the cascaded state at n_max and n_max + 1 and reports whether any
// observable moved by more than `threshold` (absolute for mean photon numbers,
// relative for g2 values above 1).
template <typename Real = double>
struct TruncationReport {
    FockObservables<Real> observables;
    Real max_change = 0;
    bool truncation_limited = false;
};

template <typename Real = double>
TruncationReport<Real> cascaded_observables_checked(int n_max, const CouplingParams<Real>& p,
                                                    CascadeOrder order = CascadeOrder::sequential,
                                                    Real threshold = Real(1e-6)) {
    const auto lo = correlation_observables(cascaded_evolution<Real>(FockBasis(n_max), p, order));
    const auto hi = correlation_observables(cascaded_evolution<Real>(FockBasis(n_max + 1), p, order));
    Real change = 0;
    auto cmp = [&](const std::optional<Real>& a, const std::optional<Real>& c) {
        if (a.has_value() != c.has_value()) {
            change = std::numeric_limits<Real>::infinity();
            return;
        }
        if (a) change = std::max(change, std::abs(*a - *c) / std::max(Real(1), std::abs(*a)));
    };
    for (int m = 0; m < 3; ++m) {
        change = std::max(change, std::abs(lo.mean_photons[m] - hi.mean_photons[m]));
        cmp(lo.g2_auto[m], hi.g2_auto[m]);
    }
    cmp(lo.g2_signal_idler, hi.g2_signal_idler);
    cmp(lo.g2_signal_output, hi.g2_signal_output);
    cmp(lo.g2_idler_output, hi.g2_idler_output);
    return {lo, change, change >= threshold};
}

}  // namespace qfc
