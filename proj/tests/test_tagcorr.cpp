#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qfc/errors.hpp"
#include "qfc/rng.hpp"
#include "qfc/tagcorr.hpp"
#include "qfc/tagstream.hpp"

using namespace qfc;

namespace {

TagStream stream(std::vector<timestamp_ps> tags, timestamp_ps duration = 1'000'000, std::uint16_t ch = 0) {
    TagStream s;
    s.channel = ch;
    s.duration_ps = duration;
    s.tags = std::move(tags);
    return s;
}

TagStream random_stream(Rng& rng, std::size_t n, timestamp_ps duration, std::uint16_t ch) {
    TagStream s;
    s.channel = ch;
    s.duration_ps = duration;
    for (std::size_t k = 0; k < n; ++k) s.tags.push_back(static_cast<timestamp_ps>(rng.uniform() * duration));
    std::sort(s.tags.begin(), s.tags.end());
    return s;
}

CoincidenceHistogram flat_with_peak(std::int64_t base, std::int64_t peak) {
    CoincidenceHistogram h;
    h.bin_width = 100;
    h.tau_min = -1000;
    h.tau_max = 1000;
    h.counts.assign(20, base);
    h.counts[10] = peak;  // [0, 100)
    return h;
}

}  // namespace

// a = {0, 100, 1000}, b = {50, 150, 1200}; in-range taus -50, 50, 50, 150, 200.
TEST(Histogram, HandComputed) {
    const auto h = coincidence_histogram(stream({0, 100, 1000}), stream({50, 150, 1200}), 100, -200, 300);
    EXPECT_EQ(h.counts, (std::vector<std::int64_t>{0, 1, 2, 1, 1}));
    EXPECT_EQ(h.singles_a, 3);
    EXPECT_EQ(h.singles_b, 3);
    EXPECT_EQ(h.total(), 5);
    EXPECT_DOUBLE_EQ(h.center(0), -150.0);
    // Half-open bins: tau = 300 falls outside, tau = -200 inside.
    const auto edge = coincidence_histogram(stream({500}), stream({300, 800}), 100, -200, 300);
    EXPECT_EQ(edge.counts, (std::vector<std::int64_t>{1, 0, 0, 0, 0}));
    EXPECT_THROW(coincidence_histogram(stream({0}), stream({0}), 0, -10, 10), std::domain_error);
    EXPECT_THROW(coincidence_histogram(stream({0}), stream({0}), 7, -10, 10), std::domain_error);
}

TEST(Histogram, MatchesAllPairsWithTiesAndBursts) {
    Rng rng(42);
    for (int c = 0; c < 30; ++c) {
        auto a = random_stream(rng, 500 + c * 37, 5'000'000, 0);
        auto b = random_stream(rng, 400 + c * 53, 5'000'000, 1);
        // Exact ties, a dense burst and copies on bin edges.
        b.tags.insert(b.tags.end(), a.tags.begin(), a.tags.begin() + 50);
        for (int k = 0; k < 40; ++k) a.tags.push_back(2'500'000 + k);
        for (int k = 0; k < 20; ++k) b.tags.push_back(a.tags[k] + 200);
        std::sort(a.tags.begin(), a.tags.end());
        std::sort(b.tags.begin(), b.tags.end());
        const auto fast = coincidence_histogram(a, b, 100, -5000, 5000);
        EXPECT_EQ(fast, coincidence_histogram_all_pairs(a, b, 100, -5000, 5000)) << "case " << c;
        EXPECT_EQ(fast, coincidence_histogram_parallel(a, b, 100, -5000, 5000, 3, 7)) << "case " << c;
    }
}

TEST(Histogram, AutoCorrelationCountsOrderedPairs) {
    const auto h = auto_correlation_histogram(stream({0, 0, 150, 300}), 100, 0, 400);
    // tau: 0 (tie), 150, 150, 300, 300, 150
    EXPECT_EQ(h.counts, (std::vector<std::int64_t>{1, 3, 0, 2}));
}

TEST(Correlation, G2AndUncertainty) {
    const auto h = flat_with_peak(25, 400);
    const auto r = g2_from_histogram(h, 0, 100);
    EXPECT_DOUBLE_EQ(r.g2, 400.0 / 25.0);
    EXPECT_NEAR(r.sigma, 16.0 * std::sqrt(1.0 / 400 + 1.0 / (25 * 19)), 1e-12);
    EXPECT_EQ(r.baseline_bin_count, 19u);

    const auto a = g2_auto(h, PeakMethod::max_bin, 0.0);
    EXPECT_EQ(a.peak_lo, 0);
    EXPECT_EQ(a.peak_hi, 100);
    EXPECT_DOUBLE_EQ(a.g2, 16.0);

    EXPECT_THROW(g2_from_histogram(flat_with_peak(0, 5), 0, 100), UndefinedCorrelation);
    EXPECT_THROW(g2_from_histogram(h, -2000, 100), std::domain_error);
}

TEST(Correlation, CauchySchwarz) {
    CorrelationResult c;
    c.g2 = 4.5;
    c.sigma = 0.1;
    const auto cs = cauchy_schwarz_test(c);
    EXPECT_TRUE(cs.violated);
    EXPECT_DOUBLE_EQ(cs.bound, 2.0);
    EXPECT_NEAR(cs.sigma_violation, 25.0, 1e-12);
    EXPECT_NEAR(cauchy_schwarz_test(c, 1.0, 1.44).bound, 1.2, 1e-15);
    EXPECT_THROW(cauchy_schwarz_test(c, 3.0, 2.0), std::domain_error);
    EXPECT_NO_THROW(cauchy_schwarz_test(c, 3.0, 2.0, true));
}

TEST(Metrics, RateMetricsAndPowerLaw) {
    LossBudget l;
    const double flux = 6e6;
    const auto m = rate_metrics(1000 + flux * l.eta_loss(true) * 0.05, 1000, flux, l, true, 0.5);
    EXPECT_NEAR(m.eta_ext, 0.05, 1e-12);
    EXPECT_NEAR(m.eta_int, 0.1, 1e-12);
    EXPECT_FALSE(m.low_signal);
    const auto low = rate_metrics(900, 1000, flux, l, true, 0.5);
    EXPECT_TRUE(low.low_signal);
    EXPECT_EQ(low.eta_ext, 0.0);

    std::vector<std::pair<double, double>> pts;
    for (double p : {25.0, 50.0, 100.0, 200.0, 400.0}) pts.push_back({p, 13 + 3.0 * std::pow(p, 1.7)});
    const auto fit = power_law_fit(pts, 13);
    EXPECT_NEAR(fit.exponent, 1.7, 1e-9);
    EXPECT_NEAR(fit.prefactor, 3.0, 1e-7);
    EXPECT_EQ(fit.used, 5u);
    pts.push_back({800, 12});
    EXPECT_EQ(power_law_fit(pts, 13).dropped, std::vector<std::size_t>{5});
}

TEST(Formats, HistogramCsvRoundTrip) {
    auto h = coincidence_histogram(stream({0, 100, 1000}), stream({50, 150, 1200}), 100, -200, 300);
    h.config_hash = "0123456789abcdef";
    h.acquisition_time_s = 1.25;
    std::stringstream ss;
    write_histogram_csv(ss, h);
    EXPECT_EQ(read_histogram_csv(ss), h);
}

TEST(Formats, QtagAndCsvRoundTrip) {
    Rng rng(5);
    const auto a = random_stream(rng, 1000, 1'000'000'000'000'000, 3);
    std::stringstream bin;
    write_qtag(bin, a);
    const auto back = read_qtag(bin);
    EXPECT_EQ(back.tags, a.tags);
    EXPECT_EQ(back.channel, 3);
    EXPECT_EQ(back.duration_ps, a.duration_ps);

    const auto b = random_stream(rng, 10, 1'000'000'000'000'000, 7);
    std::stringstream csv;
    write_tag_csv(csv, {a, b});
    const auto both = read_tag_csv(csv);
    ASSERT_EQ(both.size(), 2u);
    EXPECT_EQ(both[0].tags, a.tags);
    EXPECT_EQ(both[1].tags, b.tags);
    EXPECT_EQ(both[1].channel, 7);

    std::stringstream bad("QTAX");
    EXPECT_ANY_THROW(read_qtag(bad));
    auto unsorted = stream({5, 3});
    EXPECT_THROW(unsorted.validate(), std::domain_error);
}
