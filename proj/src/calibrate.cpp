#include "qfc/calibrate.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "qfc/errors.hpp"
#include "qfc/tagcorr.hpp"

namespace qfc {

namespace {

struct ParamInfo {
    double lo;  // open lower bound
    double hi;  // upper bound, inf for none
    const char* hint;
};

const std::map<std::string, ParamInfo>& param_table() {
    static const std::map<std::string, ParamInfo> t = {
        {"eta_nor", {0, INFINITY, "eta_int@P"}},
        {"uv_absorption_coeff", {0, INFINITY, "eta_int at a second pump power"}},
        {"mode_matching", {0, 1, "eta_ext@P"}},
        {"noise_linear_coeff", {0, INFINITY, "snr_etalon@P or noise_exponent_etalon"}},
        {"noise_quadratic_coeff", {0, INFINITY, "noise@P or noise_exponent"}},
        {"noise_bandwidth_ghz", {0, INFINITY, "ion_line_noise@P"}},
        {"dark_count_rate", {0, INFINITY, "dark_rate"}},
        {"signal_luminescence_coeff", {0, INFINITY, "none (set directly)"}},
    };
    return t;
}

// Unconstrained coordinate: log for (0, inf), logit for (0, 1].
double to_free(double v, const ParamInfo& p) {
    if (std::isinf(p.hi)) return std::log(v);
    const double f = std::min(v / p.hi, 1.0 - 1e-12);
    return std::log(f / (1.0 - f));
}
double from_free(double x, const ParamInfo& p) {
    if (std::isinf(p.hi)) return std::exp(x);
    return p.hi / (1.0 + std::exp(-x));
}

double at_power(const std::string& obs, std::string& base) {
    const auto at = obs.find('@');
    if (at == std::string::npos) {
        base = obs;
        return std::numeric_limits<double>::quiet_NaN();
    }
    base = obs.substr(0, at);
    std::size_t used = 0;
    double p = 0;
    try {
        p = std::stod(obs.substr(at + 1), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != obs.size() - at - 1 || !(p >= 0)) throw ConfigError("observable '" + obs + "': bad pump power");
    return p;
}

double exponent_of(const Calibration& c, const std::vector<SpectralFilter>& stack) {
    const auto factors = noise_filter_factors(stack, c.model);
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < 9; ++k) {
        const double p = 25.0 * std::pow(16.0, k / 8.0);
        const auto n = noise_breakdown(p, factors, c.model);
        pts.emplace_back(p, n.residual + n.cascaded);
    }
    return power_law_fit(pts).exponent;
}

}  // namespace

double evaluate_observable(const std::string& observable, const Calibration& c) {
    std::string base;
    const double p = at_power(observable, base);
    const bool has_p = !std::isnan(p);
    auto need_p = [&] {
        if (!has_p) throw ConfigError("observable '" + observable + "' needs a pump power (name@mW)");
    };
    const auto plain = c.stack({"uv_bandpass"});
    const auto with_etalon = c.stack({"uv_bandpass", "etalon"});
    if (base == "eta_int" || base == "eta_ext") {
        need_p();
        return conversion_efficiency(p, c.model, base == "eta_int", c.losses);
    }
    if (base == "noise") return need_p(), noise_rate(p, plain, c.model);
    if (base == "noise_etalon") return need_p(), noise_rate(p, with_etalon, c.model);
    if (base == "ion_line_noise") {
        need_p();
        const auto n = noise_breakdown(p, c.stack({"uv_bandpass", "ion_line"}), c.model);
        return n.residual + n.cascaded;
    }
    if (base == "snr" || base == "snr_etalon") {
        need_p();
        const auto& stack = base == "snr" ? plain : with_etalon;
        return detected_signal_rate(c.model, p, c.losses, stack) / noise_rate(p, stack, c.model);
    }
    if (has_p) throw ConfigError("observable '" + observable + "' takes no pump power");
    if (base == "noise_exponent") return exponent_of(c, plain);
    if (base == "noise_exponent_etalon") return exponent_of(c, with_etalon);
    if (base == "dark_rate") return noise_rate(0.0, plain, c.model);
    throw ConfigError("unknown observable '" + observable + "'");
}

const std::vector<std::string>& calibratable_parameters() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [k, info] : param_table()) v.push_back(k);
        return v;
    }();
    return names;
}

double get_parameter(const Calibration& c, const std::string& name) {
    const auto& m = c.model;
    if (name == "eta_nor") return m.eta_nor;
    if (name == "uv_absorption_coeff") return m.uv_absorption_coeff;
    if (name == "mode_matching") return c.losses.mode_matching;
    if (name == "noise_linear_coeff") return m.noise_linear_coeff;
    if (name == "noise_quadratic_coeff") return m.noise_quadratic_coeff;
    if (name == "noise_bandwidth_ghz") return m.noise_bandwidth_ghz;
    if (name == "dark_count_rate") return m.dark_count_rate;
    if (name == "signal_luminescence_coeff") return m.signal_luminescence_coeff;
    throw ConfigError("unknown parameter '" + name + "'");
}

void set_parameter(Calibration& c, const std::string& name, double v) {
    auto& m = c.model;
    if (name == "eta_nor") m.eta_nor = v;
    else if (name == "uv_absorption_coeff") m.uv_absorption_coeff = v;
    else if (name == "mode_matching") c.losses.mode_matching = v;
    else if (name == "noise_linear_coeff") m.noise_linear_coeff = v;
    else if (name == "noise_quadratic_coeff") m.noise_quadratic_coeff = v;
    else if (name == "noise_bandwidth_ghz") m.noise_bandwidth_ghz = v;
    else if (name == "dark_count_rate") m.dark_count_rate = v;
    else if (name == "signal_luminescence_coeff") m.signal_luminescence_coeff = v;
    else throw ConfigError("unknown parameter '" + name + "'");
}

json CalibrationResult::report() const {
    json res = json::array();
    for (const auto& r : residuals)
        res.push_back({{"observable", r.observable},
                       {"target", r.target},
                       {"value", r.value},
                       {"scale", r.scale},
                       {"residual", r.residual()}});
    return {{"residuals", res}, {"iterations", iterations}, {"cost", cost}};
}

CalibrationResult calibrate(const Calibration& start, const std::vector<Anchor>& anchors,
                            const std::vector<std::string>& free_parameters, const CalibrateOptions& opt) {
    start.validate();
    std::vector<ParamInfo> info;
    for (const auto& name : free_parameters) {
        auto it = param_table().find(name);
        if (it == param_table().end()) throw ConfigError("unknown free parameter '" + name + "'");
        for (const auto& other : free_parameters)
            if (&other != &name && other == name) throw ConfigError("duplicate free parameter '" + name + "'");
        info.push_back(it->second);
    }
    for (const auto& a : anchors) evaluate_observable(a.observable, start);  // name check

    const auto n = static_cast<Eigen::Index>(free_parameters.size());
    const auto m = static_cast<Eigen::Index>(anchors.size());

    auto apply = [&](const Eigen::VectorXd& x) {
        Calibration c = start;
        for (Eigen::Index k = 0; k < n; ++k) set_parameter(c, free_parameters[k], from_free(x(k), info[k]));
        return c;
    };
    auto scale_of = [](const Anchor& a) { return a.scale > 0 ? a.scale : std::max(std::abs(a.target), 1e-12); };
    auto residual_vector = [&](const Calibration& c) {
        Eigen::VectorXd r(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto& a = anchors[k];
            r(k) = (evaluate_observable(a.observable, c) - a.target) / scale_of(a);
        }
        return r;
    };
    auto finish = [&](const Calibration& c, int iterations) {
        CalibrationResult out;
        out.calibration = c;
        out.calibration.model.pair_rate_coeff = consistent_pair_rate_coeff(c.model, c.losses);
        for (const auto& a : anchors)
            out.residuals.push_back({a.observable, a.target, evaluate_observable(a.observable, c), scale_of(a)});
        out.cost = 0;
        for (const auto& r : out.residuals) out.cost += r.residual() * r.residual();
        out.iterations = iterations;
        out.calibration.report = out.report();
        out.calibration.report["free_parameters"] = free_parameters;
        return out;
    };
    auto describe = [&](const Eigen::VectorXd& r) {
        std::ostringstream os;
        for (Eigen::Index k = 0; k < m; ++k) os << "\n  " << anchors[k].observable << ": scaled residual " << r(k);
        return os.str();
    };

    if (n == 0) return finish(start, 0);

    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double v = get_parameter(start, free_parameters[k]);
        if (!(v > info[k].lo)) throw ConfigError("free parameter '" + free_parameters[k] + "' must start positive");
        x(k) = to_free(v, info[k]);
    }

    auto jacobian = [&](const Eigen::VectorXd& at) {
        Eigen::MatrixXd jac(m, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double h = 1e-5 * std::max(1.0, std::abs(at(k)));
            Eigen::VectorXd xp = at, xm = at;
            xp(k) += h;
            xm(k) -= h;
            jac.col(k) = (residual_vector(apply(xp)) - residual_vector(apply(xm))) / (2 * h);
        }
        return jac;
    };

    Eigen::VectorXd r = residual_vector(apply(x));
    Eigen::MatrixXd jac = jacobian(x);

    // Every free parameter must move at least one anchor.
    std::vector<std::string> blind;
    for (Eigen::Index k = 0; k < n; ++k)
        if (jac.col(k).cwiseAbs().maxCoeff() < 1e-12) blind.push_back(free_parameters[k]);
    if (m < n || !blind.empty()) {
        std::ostringstream os;
        os << "underdetermined calibration: " << n << " free parameters, " << m << " anchors";
        if (m < n) os << " (need at least " << n - m << " more)";
        os << "; missing anchors for:";
        const auto& list = blind.empty() ? free_parameters : blind;
        for (const auto& p : list) os << "\n  " << p << " (e.g. " << param_table().at(p).hint << ")";
        throw ConfigError(os.str());
    }

    double cost = r.squaredNorm();
    double lambda = 1e-3;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < opt.tolerance * std::max(1.0, cost)) return finish(apply(x), it);
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd xn = x + step;
            const Eigen::VectorXd rn = residual_vector(apply(xn));
            const double cn = rn.squaredNorm();
            if (std::isfinite(cn) && cn <= cost) {
                const bool small = step.lpNorm<Eigen::Infinity>() < opt.tolerance * (1 + x.lpNorm<Eigen::Infinity>()) ||
                                   cost - cn <= opt.tolerance * cost;
                x = xn;
                r = rn;
                cost = cn;
                lambda = std::max(lambda / 5, 1e-12);
                improved = true;
                if (small) return finish(apply(x), it);
                break;
            }
            lambda *= 4;
        }
        if (!improved) {
            // No descent direction left at machine precision: a stationary point.
            if (g.lpNorm<Eigen::Infinity>() < 1e-6 * std::max(1.0, cost)) return finish(apply(x), it);
            throw ConvergenceError("calibration did not converge; best residuals:" + describe(r));
        }
        jac = jacobian(x);
    }
    throw ConvergenceError("calibration hit the iteration limit; best residuals:" + describe(r));
}

std::vector<Anchor> reference_anchors() {
    return {{"eta_int@200", 0.105, 0.01},
            {"eta_ext@200", 0.055, 0.005},
            {"ion_line_noise@200", 1.3, 0.3},
            {"snr_etalon@200", 2.3, 0.1},
            {"noise_exponent", 2.0, 0.15},
            {"noise_exponent_etalon", 1.0, 0.15},
            {"dark_rate", 13.0, 0.1}};
}

std::vector<std::string> reference_free_parameters() {
    return {"eta_nor", "mode_matching", "noise_linear_coeff", "noise_quadratic_coeff", "noise_bandwidth_ghz"};
}

std::vector<Anchor> anchors_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("anchors: expected an array");
    std::vector<Anchor> out;
    for (const auto& a : j) {
        if (!a.is_object() || !a.contains("observable") || !a.contains("target"))
            throw ConfigError("anchors: each entry needs observable and target");
        Anchor x;
        try {
            x.observable = a.at("observable").get<std::string>();
            x.target = a.at("target").get<double>();
            if (a.contains("scale")) x.scale = a.at("scale").get<double>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("anchors: ") + e.what());
        }
        out.push_back(x);
    }
    return out;
}

json to_json(const std::vector<Anchor>& anchors) {
    json j = json::array();
    for (const auto& a : anchors) j.push_back({{"observable", a.observable}, {"target", a.target}, {"scale", a.scale}});
    return j;
}

}  // namespace qfc
