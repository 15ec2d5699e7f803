#include <gtest/gtest.h>

#include <cmath>

#include "qfc/calibrate.hpp"
#include "qfc/errors.hpp"

using namespace qfc;

// Closed-form root: asin(sqrt(0.105)) = sqrt(eta_nor P_eff) L, P_eff = 0.2 W e^-0.4.
constexpr double kEtaNorFor105 = 0.008813664923135374;

TEST(Calibrate, SingleAnchorMatchesClosedFormRoot) {
    const auto res = calibrate(default_calibration(), {{"eta_int@200", 0.105, 0}}, {"eta_nor"});
    EXPECT_NEAR(res.calibration.model.eta_nor / kEtaNorFor105, 1.0, 1e-8);
    ASSERT_EQ(res.residuals.size(), 1u);
    EXPECT_NEAR(res.residuals[0].value, 0.105, 1e-10);
    EXPECT_LT(res.cost, 1e-12);
    EXPECT_GT(res.iterations, 0);
    EXPECT_EQ(res.calibration.report["free_parameters"], json({"eta_nor"}));
}

TEST(Calibrate, EfficiencyPairFixesModeMatching) {
    const auto res = calibrate(default_calibration(), {{"eta_int@200", 0.105, 0}, {"eta_ext@200", 0.055, 0}},
                               {"eta_nor", "mode_matching"});
    EXPECT_NEAR(res.calibration.losses.mode_matching, 0.055 / 0.105, 1e-8);
    EXPECT_NEAR(res.calibration.model.eta_nor / kEtaNorFor105, 1.0, 1e-8);
}

TEST(Calibrate, ConflictingDuplicatesSettleOnCompromise) {
    const auto res = calibrate(default_calibration(), {{"eta_int@200", 0.10, 0.01}, {"eta_int@200", 0.11, 0.01}},
                               {"eta_nor"});
    EXPECT_NEAR(res.residuals[0].value, 0.105, 1e-8);
    EXPECT_NEAR(res.residuals[0].residual(), 0.5, 1e-6);
    EXPECT_NEAR(res.residuals[1].residual(), -0.5, 1e-6);
    EXPECT_NEAR(res.cost, 0.5, 1e-6);
}

TEST(Calibrate, UnderdeterminedNamesMissingAnchors) {
    try {
        calibrate(default_calibration(), {{"eta_int@200", 0.105, 0}}, {"eta_nor", "noise_quadratic_coeff"});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("underdetermined"), std::string::npos);
        EXPECT_NE(msg.find("noise_quadratic_coeff"), std::string::npos);
    }
    // Enough anchors but one parameter is invisible to all of them.
    EXPECT_THROW(calibrate(default_calibration(), {{"eta_int@200", 0.105, 0}, {"eta_int@100", 0.06, 0}},
                           {"eta_nor", "noise_linear_coeff"}),
                 ConfigError);
}

TEST(Calibrate, ZeroFreeParametersIsIdentity) {
    const auto start = default_calibration();
    const auto res = calibrate(start, reference_anchors(), {});
    EXPECT_EQ(res.iterations, 0);
    EXPECT_EQ(config_hash(res.calibration), config_hash(start));
    EXPECT_EQ(res.residuals.size(), reference_anchors().size());
}

TEST(Calibrate, NonConvergenceReportsBestResiduals) {
    CalibrateOptions opt;
    opt.max_iterations = 1;
    try {
        calibrate(default_calibration(), reference_anchors(), reference_free_parameters(), opt);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("eta_int@200"), std::string::npos);
    }
}

TEST(Calibrate, RejectsBadInput) {
    EXPECT_THROW(calibrate(default_calibration(), {{"eta_int@200", 0.1, 0}}, {"length_mm"}), ConfigError);
    EXPECT_THROW(calibrate(default_calibration(), {{"eta_int@200", 0.1, 0}}, {"eta_nor", "eta_nor"}), ConfigError);
    EXPECT_THROW(calibrate(default_calibration(), {{"brightness@200", 0.1, 0}}, {"eta_nor"}), ConfigError);
    EXPECT_THROW(anchors_from_json(json::object()), ConfigError);
    EXPECT_THROW(anchors_from_json(json::parse(R"([{"observable": "dark_rate"}])")), ConfigError);
    const auto a = reference_anchors();
    const auto back = anchors_from_json(to_json(a));
    ASSERT_EQ(back.size(), a.size());
    EXPECT_EQ(back[3].observable, a[3].observable);
}

TEST(Calibrate, BundledCalibrationReproducesAnchors) {
    const auto c = load_calibration(bundled_calibration_path());
    EXPECT_NEAR(evaluate_observable("eta_int@200", c), 0.105, 1e-4);
    EXPECT_NEAR(evaluate_observable("eta_ext@200", c), 0.055, 1e-4);
    EXPECT_NEAR(evaluate_observable("ion_line_noise@200", c), 1.3, 0.01);
    EXPECT_NEAR(evaluate_observable("snr_etalon@200", c), 2.3, 0.01);
    EXPECT_EQ(evaluate_observable("dark_rate", c), 13.0);
    // Unfiltered noise exponent sits inside [1.85, 2.15], the etalon one inside [0.85, 1.15].
    EXPECT_NEAR(evaluate_observable("noise_exponent", c), 2.0, 0.15);
    EXPECT_NEAR(evaluate_observable("noise_exponent_etalon", c), 1.0, 0.15);
    EXPECT_NEAR(c.model.pair_rate_coeff / consistent_pair_rate_coeff(c.model, c.losses), 1.0, 1e-12);
}
