#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qfc/config.hpp"
#include "qfc/rng.hpp"
#include "qfc/tagstream.hpp"

using namespace qfc;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result qfc_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + QFC_CLI_PATH + std::string(" ") + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.out += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("qfc_test_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json tiny_manifest(const fs::path& cal) {
    return {{"schema_version", 1},
            {"calibration", cal.string()},
            {"seed", 4},
            {"output_dir", "out"},
            {"scenarios",
             {{{"name", "fock"}, {"kind", "fock_demo"}, {"expected", {{"power_exponent", {{"min", 1.9}, {"max", 2.1}}}}}},
              {{"name", "snr"}, {"kind", "snr_sweep"}, {"params", {{"powers_mw", {100}}, {"duration_s", 0.1}}}}}}};
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(qfc_cli("--version").code, 0);
    EXPECT_EQ(qfc_cli("--help").code, 0);
    EXPECT_EQ(qfc_cli("").code, 2);
    EXPECT_EQ(qfc_cli("frobnicate").code, 2);
    EXPECT_EQ(qfc_cli("verify --criteria 11").code, 2);
    EXPECT_EQ(qfc_cli("run --manifest /nonexistent/manifest.json").code, 2);
}

TEST(Cli, VerifySubsetPasses) {
    const auto r = qfc_cli("verify --criteria 1,3,5");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("[PASS]  1 energy conservation"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("3/3 criteria passed"), std::string::npos) << r.out;
}

TEST(Cli, CorruptedCalibrationFailsEfficiency) {
    const auto d = temp_dir("corrupt");
    auto cal = load_calibration(bundled_calibration_path());
    cal.model.eta_nor *= 2;
    save_calibration(cal, d / "bad.json", true);
    const auto r = qfc_cli("verify --criteria 3 --config " + (d / "bad.json").string());
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("[FAIL]  3 efficiency calibration"), std::string::npos) << r.out;
}

TEST(Cli, EmptyManifestWarnsAndSucceeds) {
    const auto d = temp_dir("empty");
    write(d / "m.json", {{"schema_version", 1}});
    const auto r = qfc_cli("verify --manifest " + (d / "m.json").string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("warning"), std::string::npos);
    EXPECT_EQ(qfc_cli("run --manifest " + (d / "m.json").string()).code, 0);
}

TEST(Cli, RunWritesArtifactsAndHonoursOutputPrecedence) {
    const auto d = temp_dir("run");
    write(d / "m.json", tiny_manifest(bundled_calibration_path()));
    const auto m = (d / "m.json").string();

    auto r = qfc_cli("run --manifest " + m);
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(d / "out" / "fock" / "summary.json"));
    EXPECT_TRUE(fs::exists(d / "out" / "snr" / "snr.csv"));

    r = qfc_cli("run --manifest " + m + " --scenario snr --no-plots", "QFC_OUTPUT_DIR=" + (d / "env").string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(d / "env" / "snr" / "snr.csv"));
    EXPECT_FALSE(fs::exists(d / "env" / "fock"));
    EXPECT_FALSE(fs::exists(d / "env" / "snr" / "snr.svg"));
    EXPECT_EQ(slurp(d / "env" / "snr" / "snr.csv"), slurp(d / "out" / "snr" / "snr.csv"));

    r = qfc_cli("run --manifest " + m + " --scenario snr --out " + (d / "flag").string(),
                "QFC_OUTPUT_DIR=" + (d / "env2").string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(d / "flag" / "snr" / "snr.csv"));
    EXPECT_FALSE(fs::exists(d / "env2"));

    EXPECT_EQ(qfc_cli("run --manifest " + m + " --scenario nope").code, 2);
}

TEST(Cli, RunValidatesEverythingBeforeRunning) {
    const auto d = temp_dir("validate");
    auto j = tiny_manifest(bundled_calibration_path());
    j["scenarios"].push_back({{"name", "bad"}, {"kind", "snr_sweep"}, {"params", {{"powers_mw", json::array()}}}});
    write(d / "m.json", j);
    const auto r = qfc_cli("run --manifest " + (d / "m.json").string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("powers_mw"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(d / "out" / "fock"));
}

TEST(Cli, FailedExpectationExitsOne) {
    const auto d = temp_dir("expect");
    auto j = tiny_manifest(bundled_calibration_path());
    j["scenarios"][0]["expected"]["power_exponent"] = {{"min", 5.0}};
    write(d / "m.json", j);
    const auto r = qfc_cli("run --manifest " + (d / "m.json").string() + " --scenario fock");
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("[FAIL] fock"), std::string::npos) << r.out;
}

TEST(Cli, CalibrateRefusesOverwrite) {
    const auto d = temp_dir("calibrate");
    write(d / "anchors.json", json::parse(R"([{"observable": "eta_int@200", "target": 0.105}])"));
    const std::string base = "calibrate --anchors " + (d / "anchors.json").string() + " --free eta_nor --out " +
                             (d / "cal.json").string();
    auto r = qfc_cli(base);
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NEAR(load_calibration(d / "cal.json").model.eta_nor, 0.008813664923135374, 1e-10);
    EXPECT_EQ(qfc_cli(base).code, 2);
    EXPECT_EQ(qfc_cli(base + " --force").code, 0);
    // One anchor cannot pin two parameters.
    r = qfc_cli("calibrate --anchors " + (d / "anchors.json").string() + " --free eta_nor,mode_matching --out " +
                (d / "x.json").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("underdetermined"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(d / "x.json"));
}

TEST(Cli, ConvertRoundTripIsBitExact) {
    const auto d = temp_dir("convert");
    Rng rng(8);
    TagStream a, b;
    a.channel = 0;
    b.channel = 2;
    a.duration_ps = b.duration_ps = 10 * kPsPerSecond;
    for (int k = 0; k < 5000; ++k) a.tags.push_back(static_cast<timestamp_ps>(rng.uniform() * 1e13));
    for (int k = 0; k < 300; ++k) b.tags.push_back(static_cast<timestamp_ps>(rng.uniform() * 1e13));
    std::sort(a.tags.begin(), a.tags.end());
    std::sort(b.tags.begin(), b.tags.end());
    write_qtag_file((d / "a.qtag").string(), a);
    write_qtag_file((d / "b.qtag").string(), b);

    auto r = qfc_cli("convert " + (d / "a.qtag").string() + " " + (d / "b.qtag").string() + " --out " +
                     (d / "ab.csv").string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(qfc_cli("convert " + (d / "ab.csv").string() + " --out " + (d / "back.qtag").string()).code, 2);
    r = qfc_cli("convert " + (d / "ab.csv").string() + " --channel 2 --out " + (d / "b2.qtag").string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(slurp(d / "b2.qtag"), slurp(d / "b.qtag"));
    r = qfc_cli("convert " + (d / "b2.qtag").string() + " --out " + (d / "b2.csv").string());
    EXPECT_EQ(r.code, 0);
    r = qfc_cli("convert " + (d / "b2.csv").string() + " --out " + (d / "b3.qtag").string());
    EXPECT_EQ(slurp(d / "b3.qtag"), slurp(d / "b.qtag"));
    EXPECT_EQ(qfc_cli("convert " + (d / "b2.csv").string() + " --out " + (d / "b3.qtag").string()).code, 2);
    EXPECT_EQ(qfc_cli("convert " + (d / "a.txt").string() + " --out " + (d / "z.csv").string()).code, 2);
}
