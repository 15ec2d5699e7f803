#include "qfc/tagcorr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "qfc/errors.hpp"

namespace qfc {

std::int64_t CoincidenceHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

bool CoincidenceHistogram::operator==(const CoincidenceHistogram& o) const {
    return bin_width == o.bin_width && tau_min == o.tau_min && tau_max == o.tau_max && counts == o.counts &&
           singles_a == o.singles_a && singles_b == o.singles_b && acquisition_time_s == o.acquisition_time_s;
}

namespace {

CoincidenceHistogram empty_histogram(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                     timestamp_ps tau_min, timestamp_ps tau_max) {
    if (bin_width <= 0) throw std::domain_error("histogram: bin width must be positive");
    if (tau_max <= tau_min) throw std::domain_error("histogram: degenerate tau range");
    const timestamp_ps span = tau_max - tau_min;
    if (span % bin_width != 0) throw std::domain_error("histogram: bins must tile the tau range exactly");
    if (span / bin_width < 3) throw std::domain_error("histogram: tau range must span at least 3 bins");
    if (!a.is_sorted() || !b.is_sorted()) throw std::domain_error("histogram: input streams must be sorted");
    CoincidenceHistogram h;
    h.bin_width = bin_width;
    h.tau_min = tau_min;
    h.tau_max = tau_max;
    h.counts.assign(static_cast<std::size_t>(span / bin_width), 0);
    h.acquisition_time_s = std::max(a.duration_s(), b.duration_s());
    h.singles_a = static_cast<std::int64_t>(a.size());
    h.singles_b = static_cast<std::int64_t>(b.size());
    return h;
}

// Accumulates pairs for a[first, last) into counts.
void accumulate_range(const std::vector<timestamp_ps>& a, std::size_t first, std::size_t last,
                      const std::vector<timestamp_ps>& b, timestamp_ps bin_width, timestamp_ps tau_min,
                      timestamp_ps tau_max, std::vector<std::int64_t>& counts) {
    if (first >= last) return;
    auto lo = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), a[first] + tau_min) - b.begin());
    const std::size_t nb = b.size();
    for (std::size_t i = first; i < last; ++i) {
        const timestamp_ps start = a[i] + tau_min;
        const timestamp_ps stop = a[i] + tau_max;
        while (lo < nb && b[lo] < start) ++lo;
        for (std::size_t j = lo; j < nb && b[j] < stop; ++j) ++counts[static_cast<std::size_t>((b[j] - start) / bin_width)];
    }
}

}  // namespace

CoincidenceHistogram coincidence_histogram(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                           timestamp_ps tau_min, timestamp_ps tau_max) {
    auto h = empty_histogram(a, b, bin_width, tau_min, tau_max);
    accumulate_range(a.tags, 0, a.tags.size(), b.tags, bin_width, tau_min, tau_max, h.counts);
    return h;
}

CoincidenceHistogram coincidence_histogram_parallel(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                                    timestamp_ps tau_min, timestamp_ps tau_max, unsigned threads,
                                                    std::size_t slices) {
    auto h = empty_histogram(a, b, bin_width, tau_min, tau_max);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    if (slices == 0) slices = threads;
    slices = std::max<std::size_t>(1, std::min(slices, a.tags.size()));
    // Slice boundaries in a; each slice looks up its own start in b, which
    // plays the role of an overlap margin of one tau range.
    std::vector<std::vector<std::int64_t>> partial(slices, std::vector<std::int64_t>(h.counts.size(), 0));
    auto work = [&](std::size_t s) {
        const std::size_t first = a.tags.size() * s / slices;
        const std::size_t last = a.tags.size() * (s + 1) / slices;
        accumulate_range(a.tags, first, last, b.tags, bin_width, tau_min, tau_max, partial[s]);
    };
    std::vector<std::thread> pool;
    const std::size_t nthreads = std::min<std::size_t>(threads, slices);
    for (std::size_t t = 0; t < nthreads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t s = t; s < slices; s += nthreads) work(s);
        });
    for (auto& th : pool) th.join();
    for (const auto& p : partial)
        for (std::size_t k = 0; k < p.size(); ++k) h.counts[k] += p[k];
    return h;
}

CoincidenceHistogram coincidence_histogram_all_pairs(const TagStream& a, const TagStream& b, timestamp_ps bin_width,
                                                     timestamp_ps tau_min, timestamp_ps tau_max) {
    auto h = empty_histogram(a, b, bin_width, tau_min, tau_max);
    for (auto ta : a.tags)
        for (auto tb : b.tags) {
            const timestamp_ps tau = tb - ta;
            if (tau >= tau_min && tau < tau_max) ++h.counts[static_cast<std::size_t>((tau - tau_min) / bin_width)];
        }
    return h;
}

CoincidenceHistogram auto_correlation_histogram(const TagStream& a, timestamp_ps bin_width, timestamp_ps tau_min,
                                                timestamp_ps tau_max) {
    auto h = empty_histogram(a, a, bin_width, tau_min, tau_max);
    const auto& t = a.tags;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            const timestamp_ps tau = t[j] - t[i];
            if (tau >= tau_max) break;
            if (tau >= tau_min) ++h.counts[static_cast<std::size_t>((tau - tau_min) / bin_width)];
        }
    return h;
}

// ---------------------------------------------------------------------------

CorrelationResult g2_from_masks(const CoincidenceHistogram& h, const std::vector<bool>& peak,
                                const std::vector<bool>& baseline) {
    if (peak.size() != h.bins() || baseline.size() != h.bins()) throw std::domain_error("g2: mask size mismatch");
    CorrelationResult r;
    bool first = true;
    for (std::size_t k = 0; k < h.bins(); ++k) {
        if (peak[k] && baseline[k]) throw std::domain_error("g2: bin used as both peak and baseline");
        if (peak[k]) {
            ++r.peak_bin_count;
            r.peak_counts += h.counts[k];
            if (first) r.peak_lo = h.lower(k);
            r.peak_hi = h.lower(k) + h.bin_width;
            first = false;
        } else if (baseline[k]) {
            ++r.baseline_bin_count;
            r.baseline_counts += h.counts[k];
        }
    }
    if (r.peak_bin_count == 0) throw std::domain_error("g2: empty peak window");
    if (r.baseline_bin_count == 0) throw std::domain_error("g2: no baseline bins outside the peak window");
    if (r.baseline_counts == 0) throw UndefinedCorrelation("g2: zero baseline counts");
    const double peak_mean = static_cast<double>(r.peak_counts) / static_cast<double>(r.peak_bin_count);
    const double base_mean = static_cast<double>(r.baseline_counts) / static_cast<double>(r.baseline_bin_count);
    r.g2 = peak_mean / base_mean;
    const double rel2 = (r.peak_counts > 0 ? 1.0 / static_cast<double>(r.peak_counts) : 0.0) +
                        1.0 / static_cast<double>(r.baseline_counts);
    r.sigma = r.g2 * std::sqrt(rel2);
    return r;
}

CorrelationResult g2_from_histogram(const CoincidenceHistogram& h, timestamp_ps peak_lo, timestamp_ps peak_hi) {
    if (peak_lo >= peak_hi || peak_lo < h.tau_min || peak_hi > h.tau_max)
        throw std::domain_error("g2: peak window must lie within the tau range");
    std::vector<bool> peak(h.bins()), base(h.bins());
    for (std::size_t k = 0; k < h.bins(); ++k) {
        const double c = h.center(k);
        peak[k] = c >= static_cast<double>(peak_lo) && c < static_cast<double>(peak_hi);
        base[k] = !peak[k];
    }
    return g2_from_masks(h, peak, base);
}

CorrelationResult g2_auto(const CoincidenceHistogram& h, PeakMethod method, double baseline_fwhm_multiple) {
    if (h.bins() == 0) throw std::domain_error("g2: empty histogram");
    const auto top = static_cast<std::size_t>(std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
    std::size_t first = top, last = top;
    if (method == PeakMethod::fwhm) {
        std::vector<std::int64_t> sorted = h.counts;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double floor = static_cast<double>(sorted[sorted.size() / 2]);
        const double half = floor + 0.5 * (static_cast<double>(h.counts[top]) - floor);
        while (first > 0 && static_cast<double>(h.counts[first - 1]) >= half) --first;
        while (last + 1 < h.bins() && static_cast<double>(h.counts[last + 1]) >= half) ++last;
    }
    const double width = static_cast<double>((last - first + 1) * static_cast<std::size_t>(h.bin_width));
    const double centre = 0.5 * (static_cast<double>(h.lower(first)) + static_cast<double>(h.lower(last) + h.bin_width));
    std::vector<bool> peak(h.bins()), base(h.bins());
    for (std::size_t k = 0; k < h.bins(); ++k) {
        peak[k] = k >= first && k <= last;
        base[k] = !peak[k] && std::abs(h.center(k) - centre) > baseline_fwhm_multiple * width;
    }
    return g2_from_masks(h, peak, base);
}

CauchySchwarzResult cauchy_schwarz_test(const CorrelationResult& cross, double auto_a, double auto_b,
                                        bool allow_outside_thermal_range) {
    if (!(cross.sigma > 0)) throw std::domain_error("cauchy_schwarz_test: sigma must be positive");
    if (!allow_outside_thermal_range && (auto_a < 1 || auto_a > 2 || auto_b < 1 || auto_b > 2))
        throw std::domain_error("cauchy_schwarz_test: auto-correlations outside [1, 2]");
    if (!(auto_a >= 0 && auto_b >= 0)) throw std::domain_error("cauchy_schwarz_test: negative auto-correlation");
    CauchySchwarzResult r;
    r.bound = std::sqrt(auto_a * auto_b);
    r.violated = cross.g2 > r.bound;
    r.sigma_violation = (cross.g2 - r.bound) / cross.sigma;
    return r;
}

// ---------------------------------------------------------------------------

RateMetrics rate_metrics(double s, double n, double flux, const LossBudget& losses, bool with_etalon,
                         double mode_matching) {
    if (!(flux > 0)) throw std::domain_error("rate_metrics: flux must be positive");
    if (!(n > 0)) throw std::domain_error("rate_metrics: noise rate must be positive");
    if (!(mode_matching > 0 && mode_matching <= 1)) throw std::domain_error("rate_metrics: mode_matching outside (0, 1]");
    RateMetrics m;
    m.S = s;
    m.N = n;
    m.snr = s / n;
    if (s < n) {
        m.low_signal = true;
        return m;
    }
    m.eta_ext = std::min(1.0, (s - n) / (flux * losses.eta_loss(with_etalon)));
    m.eta_int = std::min(1.0, m.eta_ext / mode_matching);
    return m;
}

RateMetrics rate_metrics(const TagStream& with_input, const TagStream& without_input, double flux,
                         const LossBudget& losses, bool with_etalon, double mode_matching) {
    if (with_input.duration_ps <= 0 || without_input.duration_ps <= 0)
        throw std::domain_error("rate_metrics: streams need a positive duration");
    return rate_metrics(with_input.rate(), without_input.rate(), flux, losses, with_etalon, mode_matching);
}

PowerLawFit power_law_fit(const std::vector<std::pair<double, double>>& points, double floor) {
    if (points.size() < 3) throw std::domain_error("power_law_fit: need at least 3 points");
    PowerLawFit fit;
    std::vector<double> x, y;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto [p, r] = points[k];
        if (!(p > 0)) throw std::domain_error("power_law_fit: powers must be positive");
        if (!(r - floor > 0)) {
            fit.dropped.push_back(k);
            continue;
        }
        x.push_back(std::log(p));
        y.push_back(std::log(r - floor));
    }
    fit.used = x.size();
    if (fit.used < 3) throw std::domain_error("power_law_fit: fewer than 3 points above the floor");
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        a(k, 0) = 1.0;
        a(k, 1) = x[static_cast<std::size_t>(k)];
        b(k) = y[static_cast<std::size_t>(k)];
    }
    const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
    fit.exponent = coef(1);
    fit.prefactor = std::exp(coef(0));
    const double rss = (a * coef - b).squaredNorm();
    const double dof = static_cast<double>(n - 2);
    const Eigen::Matrix2d cov = (a.transpose() * a).inverse() * (dof > 0 ? rss / dof : 0.0);
    fit.uncertainty = std::sqrt(std::max(0.0, cov(1, 1)));
    return fit;
}

// ---------------------------------------------------------------------------

void write_histogram_csv(std::ostream& os, const CoincidenceHistogram& h) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", h.acquisition_time_s);
    os << "# coincidence histogram, tau = t_b - t_a, bins [lower, upper)\n"
       << "# bin_width_ps=" << h.bin_width << '\n'
       << "# tau_min_ps=" << h.tau_min << '\n'
       << "# tau_max_ps=" << h.tau_max << '\n'
       << "# acquisition_time_s=" << buf << '\n'
       << "# singles_a=" << h.singles_a << '\n'
       << "# singles_b=" << h.singles_b << '\n'
       << "# config_hash=" << h.config_hash << '\n'
       << "bin_lower_ps,bin_upper_ps,counts\n";
    for (std::size_t k = 0; k < h.bins(); ++k) os << h.lower(k) << ',' << h.lower(k) + h.bin_width << ',' << h.counts[k] << '\n';
    if (!os) throw std::runtime_error("histogram CSV: write failed");
}

CoincidenceHistogram read_histogram_csv(std::istream& is) {
    CoincidenceHistogram h;
    std::string line;
    bool header = false;
    auto value = [](const std::string& l, const char* key, std::string& out) {
        const std::string k = std::string("# ") + key + "=";
        if (l.rfind(k, 0) != 0) return false;
        out = l.substr(k.size());
        return true;
    };
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string v;
        if (line[0] == '#') {
            if (value(line, "bin_width_ps", v)) h.bin_width = std::stoll(v);
            else if (value(line, "tau_min_ps", v)) h.tau_min = std::stoll(v);
            else if (value(line, "tau_max_ps", v)) h.tau_max = std::stoll(v);
            else if (value(line, "acquisition_time_s", v)) h.acquisition_time_s = std::stod(v);
            else if (value(line, "singles_a", v)) h.singles_a = std::stoll(v);
            else if (value(line, "singles_b", v)) h.singles_b = std::stoll(v);
            else if (value(line, "config_hash", v)) h.config_hash = v;
            continue;
        }
        if (!header) {
            if (line != "bin_lower_ps,bin_upper_ps,counts") throw std::runtime_error("histogram CSV: bad header");
            header = true;
            continue;
        }
        const auto c2 = line.rfind(',');
        if (c2 == std::string::npos) throw std::runtime_error("histogram CSV: malformed row");
        h.counts.push_back(std::stoll(line.substr(c2 + 1)));
    }
    if (h.bin_width <= 0 || static_cast<timestamp_ps>(h.counts.size()) * h.bin_width != h.tau_max - h.tau_min)
        throw std::runtime_error("histogram CSV: bins do not tile the declared range");
    return h;
}

}  // namespace qfc
