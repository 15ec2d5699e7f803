#pragma once

// Coincidence histograms and correlation statistics over time-tag streams.
// tau = t_b - t_a; bins are half-open [lower, upper) and tile the range.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "qfc/spectral.hpp"
#include "qfc/tagstream.hpp"

namespace qfc {

struct CoincidenceHistogram {
    timestamp_ps bin_width = 0;
    timestamp_ps tau_min = 0;
    timestamp_ps tau_max = 0;
    std::vector<std::int64_t> counts;
    double acquisition_time_s = 0;
    std::int64_t singles_a = 0;
    std::int64_t singles_b = 0;
    std::string config_hash;

    std::size_t bins() const { return counts.size(); }
    timestamp_ps lower(std::size_t k) const { return tau_min + static_cast<timestamp_ps>(k) * bin_width; }
    double center(std::size_t k) const { return static_cast<double>(lower(k)) + 0.5 * static_cast<double>(bin_width); }
    std::int64_t total() const;
    bool operator==(const CoincidenceHistogram& o) const;
};

CoincidenceHistogram coincidence_histogram(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                           timestamp_ps tau_min, timestamp_ps tau_max);
// Same result from disjoint slices of `a` processed concurrently.
CoincidenceHistogram coincidence_histogram_parallel(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                                    timestamp_ps tau_min, timestamp_ps tau_max, unsigned threads,
                                                    std::size_t slices = 0);
// O(n_a n_b) reference.
CoincidenceHistogram coincidence_histogram_all_pairs(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                                     timestamp_ps tau_min, timestamp_ps tau_max);
// Ordered pairs i < j within one stream (positive tau only, no self-pairs).
CoincidenceHistogram auto_correlation_histogram(const TagStream& a, timestamp_ps bin_width, timestamp_ps tau_min,
                                                timestamp_ps tau_max);

struct CorrelationResult {
    double g2 = 0;
    double sigma = 0;
    timestamp_ps peak_lo = 0;   // tau window used as the peak, [lo, hi)
    timestamp_ps peak_hi = 0;
    std::size_t peak_bin_count = 0;
    std::size_t baseline_bin_count = 0;
    std::int64_t peak_counts = 0;
    std::int64_t baseline_counts = 0;
};

// Peak = bins whose centre lies in [peak_lo, peak_hi); baseline = all others.
CorrelationResult g2_from_histogram(const CoincidenceHistogram& h, timestamp_ps peak_lo, timestamp_ps peak_hi);
// Explicit bin masks.
CorrelationResult g2_from_masks(const CoincidenceHistogram& h, const std::vector<bool>& peak,
                                const std::vector<bool>& baseline);

enum class PeakMethod {
    fwhm,     // contiguous bins above half maximum around the tallest bin
    max_bin   // the tallest bin alone
};
// Automatic selection; baseline = bins farther than `baseline_fwhm_multiple`
// peak widths from the peak centre.
CorrelationResult g2_auto(const CoincidenceHistogram& h, PeakMethod method = PeakMethod::fwhm,
                          double baseline_fwhm_multiple = 5.0);

struct CauchySchwarzResult {
    bool violated = false;
    double bound = 2.0;
    double sigma_violation = 0.0;
};
// Classical bound sqrt(g2_a(0) g2_b(0)); autos default to the thermal value 2.
CauchySchwarzResult cauchy_schwarz_test(const CorrelationResult& cross, double auto_a = 2.0, double auto_b = 2.0,
                                        bool allow_outside_thermal_range = false);

struct RateMetrics {
    double S = 0;     // Hz, with input
    double N = 0;     // Hz, without input
    double snr = 0;   // S / N
    double eta_ext = 0;
    double eta_int = 0;
    bool low_signal = false;  // S < N, efficiencies clamped to 0
};
RateMetrics rate_metrics(double with_input_hz, double without_input_hz, double flux_hz, const LossBudget& losses,
                         bool with_etalon, double mode_matching);
RateMetrics rate_metrics(const TagStream& with_input, const TagStream& without_input, double flux_hz,
                         const LossBudget& losses, bool with_etalon, double mode_matching);

struct PowerLawFit {
    double exponent = 0;
    double uncertainty = 0;  // standard error of the slope
    double prefactor = 0;    // rate = prefactor * P^exponent
    std::size_t used = 0;
    std::vector<std::size_t> dropped;  // indices with rate <= floor
};
// Least squares of log(rate - floor) against log(power).
PowerLawFit power_law_fit(const std::vector<std::pair<double, double>>& points, double subtract_floor = 0.0);

// CSV with a self-describing '#' header.
void write_histogram_csv(std::ostream& os, const CoincidenceHistogram& h);
CoincidenceHistogram read_histogram_csv(std::istream& is);

}  // namespace qfc
