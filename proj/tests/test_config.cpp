#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "qfc/config.hpp"
#include "qfc/errors.hpp"

using namespace qfc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("qfc_test_config_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Calibration, JsonRoundTripPreservesHash) {
    const auto c = default_calibration();
    const auto j = to_json(c);
    const auto back = calibration_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);
    // Formatting does not enter the hash.
    EXPECT_EQ(content_hash(json::parse(j.dump(4))), content_hash(j));
}

TEST(Calibration, HashIgnoresReportButNotParameters) {
    auto c = default_calibration();
    const auto h = config_hash(c);
    c.report = {{"note", "refit"}};
    EXPECT_EQ(config_hash(c), h);
    c.model.eta_nor *= 1.0000001;
    EXPECT_NE(config_hash(c), h);
}

// FNV-1a 64 over the compact dumps.
TEST(Calibration, ContentHashOracle) {
    EXPECT_EQ(content_hash(json("")), "07cc7607b4949e25");  // dump() is two quote characters
    EXPECT_EQ(content_hash(json::parse("{}")), "08f44b07b5901a25");
}

TEST(Calibration, RejectsUnknownAndInvalid) {
    auto j = to_json(default_calibration());
    j["model"]["eta_nro"] = 1.0;
    EXPECT_THROW(calibration_from_json(j), ConfigError);

    j = to_json(default_calibration());
    j["losses"]["detector_efficiency"] = 1.7;
    EXPECT_THROW(calibration_from_json(j), ConfigError);

    j = to_json(default_calibration());
    j["schema_version"] = 99;
    EXPECT_THROW(calibration_from_json(j), ConfigError);

    j = to_json(default_calibration());
    j["filters"]["etalon"]["kind"] = "prism";
    EXPECT_THROW(calibration_from_json(j), ConfigError);

    EXPECT_THROW(default_calibration().filter("no_such_filter"), ConfigError);
}

TEST(Calibration, FiltersAcceptWavelengthUnits) {
    const json f = {{"kind", "bandpass"}, {"center_nm", 369.5}, {"fwhm_nm", 6.0}, {"out_of_band_od", 6.0}};
    const auto bp = filter_from_json("uv", f);
    EXPECT_NEAR(bp.center_thz, 299792.458 / 369.5, 1e-9);
    EXPECT_NEAR(bp.fwhm_ghz, 13174.77077790453, 1e-6);
    EXPECT_EQ(bp.name, "uv");
}

TEST(Files, AtomicWriteRefusesOverwrite) {
    const auto d = temp_dir("write");
    const auto p = d / "cal.json";
    save_calibration(default_calibration(), p, false);
    EXPECT_THROW(save_calibration(default_calibration(), p, false), ConfigError);
    EXPECT_NO_THROW(save_calibration(default_calibration(), p, true));
    EXPECT_FALSE(fs::exists(d / "cal.json.tmp"));
    EXPECT_EQ(config_hash(load_calibration(p)), config_hash(default_calibration()));

    std::ofstream(d / "broken.json") << "{ \"model\": ";
    EXPECT_THROW(load_calibration(d / "broken.json"), ConfigError);
    EXPECT_THROW(load_calibration(d / "missing.json"), ConfigError);
}

TEST(Files, BundledCalibrationIsValid) {
    const auto c = load_calibration(bundled_calibration_path());
    EXPECT_NO_THROW(c.validate());
    for (const char* name : {"uv_bandpass", "etalon", "ion_line", "signal_bandpass", "signal_vbg", "spectrometer"})
        EXPECT_NO_THROW(c.filter(name)) << name;
    EXPECT_EQ(c.model.dark_count_rate, 13.0);
    EXPECT_TRUE(c.report.contains("residuals"));
}
