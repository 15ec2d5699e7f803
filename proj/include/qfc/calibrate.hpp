#pragma once

// Least-squares fit of model coefficients to measured anchor values.
//
// Observables are named "<quantity>" or "<quantity>@<pump mW>":
//   eta_int@P, eta_ext@P          conversion efficiencies
//   noise@P, noise_etalon@P       UV noise behind uv_bandpass (+ etalon), Hz
//   ion_line_noise@P              dark-free noise behind uv_bandpass + ion_line
//   snr@P, snr_etalon@P           rate with input / rate without
//   noise_exponent[_etalon]       log-log slope of dark-free noise, 25..400 mW
//   dark_rate                     noise at zero pump

#include <string>
#include <vector>

#include "qfc/config.hpp"

namespace qfc {

struct Anchor {
    std::string observable;
    double target = 0;
    double scale = 0;  // residual unit; 0 means max(|target|, 1e-12)
};

struct AnchorResidual {
    std::string observable;
    double target = 0;
    double value = 0;
    double scale = 1;
    double residual() const { return (value - target) / scale; }
};

struct CalibrateOptions {
    int max_iterations = 200;
    double tolerance = 1e-10;  // relative cost change and step size
};

struct CalibrationResult {
    Calibration calibration;
    std::vector<AnchorResidual> residuals;
    int iterations = 0;
    double cost = 0;  // sum of squared scaled residuals
    json report() const;
};

double evaluate_observable(const std::string& observable, const Calibration& c);

// Names accepted as free parameters.
const std::vector<std::string>& calibratable_parameters();
double get_parameter(const Calibration& c, const std::string& name);
void set_parameter(Calibration& c, const std::string& name, double value);

// Levenberg-Marquardt on log (or logit, for fractions) parameters.
// pair_rate_coeff is re-derived from the fitted noise model.
// Throws ConfigError if the anchors cannot determine every free parameter and
// ConvergenceError (with the best residuals) if the fit does not settle.
CalibrationResult calibrate(const Calibration& start, const std::vector<Anchor>& anchors,
                            const std::vector<std::string>& free_parameters, const CalibrateOptions& options = {});

// Anchor set and free parameters used for the bundled calibration.
std::vector<Anchor> reference_anchors();
std::vector<std::string> reference_free_parameters();

std::vector<Anchor> anchors_from_json(const json& j);
json to_json(const std::vector<Anchor>& anchors);

}  // namespace qfc
