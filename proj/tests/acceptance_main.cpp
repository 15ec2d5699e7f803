// Runs every acceptance criterion against the bundled calibration and prints
// one line per criterion. Nonzero exit if any criterion fails.

#include <cstdio>
#include <exception>

#include "qfc/acceptance.hpp"
#include "qfc/config.hpp"

int main() {
    using namespace qfc;
    try {
        const auto cal = load_calibration(bundled_calibration_path());
        int failed = 0;
        run_acceptance(cal, {}, [&](const CriterionResult& r) {
            std::printf("%s\n", format_result(r).c_str());
            std::fflush(stdout);
            if (!r.passed) ++failed;
        });
        std::printf("%d/%d criteria passed\n", kCriterionCount - failed, kCriterionCount);
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: %s\n", e.what());
        return 2;
    }
}
