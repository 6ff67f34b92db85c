#pragma once

// Flat, line-oriented experiment configuration:
//
//   # comment
//   [section]
//   key = value
//
// Values are numbers, lists (spaces or commas, ';' separates matrix rows) or
// quoted expression strings. Unknown sections or keys are errors, as are
// unconsumed keys; the seed fixes all sampling.

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "linequiv/certify.hpp"
#include "linequiv/conjugacy.hpp"
#include "linequiv/trajectories.hpp"

namespace linequiv {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

/// Raw parsed file: section -> key -> value, with consumption tracking so
/// unknown keys surface as errors.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str(), path);
    }

    static ConfigFile parse_text(const std::string& text, const std::string& origin = "<text>") {
        ConfigFile cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line, section;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
                section = detail::trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
                cfg.sections_[section];  // materialize even if empty
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
            std::string key = detail::trim(t.substr(0, eq));
            std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            auto& sec = cfg.sections_[section];
            if (sec.count(key))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            sec[key] = value;
            continue;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto it = sections_.find(section);
        return it != sections_.end() && it->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        auto it = sections_.find(section);
        if (it == sections_.end() || !it->second.count(key))
            throw ConfigError("missing key [" + section + "] " + key);
        consumed_.insert(section + "." + key);
        return it->second.at(key);
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        if (!has(section, key)) return fallback;
        return get(section, key);
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(get(section, key), section, key);
    }
    double get_double_or(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return get_double(section, key);
    }
    long get_long(const std::string& section, const std::string& key) const {
        const std::string v = get(section, key);
        long out = 0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ConfigError("[" + section + "] " + key + ": not an integer: '" + v + "'");
        return out;
    }
    long get_long_or(const std::string& section, const std::string& key, long fallback) const {
        if (!has(section, key)) return fallback;
        return get_long(section, key);
    }

    /// Quoted expression text (quotes required, to keep '=' and spaces unambiguous).
    std::string get_quoted(const std::string& section, const std::string& key) const {
        std::string v = get(section, key);
        if (v.size() < 2 || v.front() != '"' || v.back() != '"')
            throw ConfigError("[" + section + "] " + key + ": expression must be quoted");
        return v.substr(1, v.size() - 2);
    }

    std::vector<double> get_list(const std::string& section, const std::string& key) const {
        return split_numbers(get(section, key), section, key);
    }

    /// d x d matrix: rows separated by ';', entries by spaces or commas.
    Matrix get_matrix(const std::string& section, const std::string& key, int dim) const {
        const std::string v = get(section, key);
        std::vector<std::vector<double>> rows;
        std::string part;
        std::istringstream in(v);
        while (std::getline(in, part, ';'))
            rows.push_back(split_numbers(part, section, key));
        if (static_cast<int>(rows.size()) != dim)
            throw ConfigError("[" + section + "] " + key + ": expected " + std::to_string(dim) + " rows");
        Matrix m(dim, dim);
        for (int i = 0; i < dim; ++i) {
            if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != dim)
                throw ConfigError("[" + section + "] " + key + ": row " + std::to_string(i) +
                                  " needs " + std::to_string(dim) + " entries");
            for (int j = 0; j < dim; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        return m;
    }

    /// Every key must have been consumed by a get*; leftovers are errors.
    void ensure_fully_consumed(const std::set<std::string>& known_sections) const {
        for (const auto& [sec, kv] : sections_) {
            if (!known_sections.count(sec))
                throw ConfigError("unknown section [" + sec + "]");
            for (const auto& [key, value] : kv)
                if (!consumed_.count(sec + "." + key))
                    throw ConfigError("unknown key '" + key + "' in section [" + sec + "]");
        }
    }

private:
    static double to_double(const std::string& v, const std::string& section,
                            const std::string& key) {
        double out = 0.0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ConfigError("[" + section + "] " + key + ": not a number: '" + v + "'");
        return out;
    }

    static std::vector<double> split_numbers(const std::string& v, const std::string& section,
                                             const std::string& key) {
        std::vector<double> out;
        std::string token;
        for (char c : v) {
            if (c == ',' || c == ' ' || c == '\t') {
                if (!token.empty()) { out.push_back(to_double(token, section, key)); token.clear(); }
            } else {
                token += c;
            }
        }
        if (!token.empty()) out.push_back(to_double(token, section, key));
        if (out.empty()) throw ConfigError("[" + section + "] " + key + ": empty list");
        return out;
    }

    std::string origin_;
    std::map<std::string, std::map<std::string, std::string>> sections_;
    mutable std::set<std::string> consumed_;
};

struct ExperimentConfig {
    int dimension = 1;
    long horizon = 50;

    MatrixSequence linear = MatrixSequence::constant(Matrix::Identity(1, 1));
    ProjectorPair projector = ProjectorPair::identity(1);
    PerturbationSpec perturbation = PerturbationSpec::zero(1);
    // rates are built after policy so the h cache covers the series horizon
    RatePair rates = RatePair::geometric(ScalarSequence::constant(1.0), 0.5, 8);

    TruncationPolicy policy;

    int samples = 100;
    long k_max = 20;
    long m_max = 10;
    double sample_box = 1.0;
    std::uint64_t seed = 1;

    int p3_samples = 1000;
    double p3_box = 2.0;
};

namespace detail {

inline ScalarSequence load_weight(const ConfigFile& cfg, const std::string& section,
                                  const std::string& name) {
    const std::string fam = cfg.get_or(section, name + "_family", "constant");
    if (fam == "constant") return ScalarSequence::constant(cfg.get_double(section, name));
    if (fam == "geometric")
        return ScalarSequence::geometric(cfg.get_double(section, name + "_coeff"),
                                         cfg.get_double(section, name + "_ratio"));
    if (fam == "tabulated") {
        auto values = cfg.get_list(section, name + "_table");
        const long cutoff = cfg.get_long_or(section, name + "_cutoff", -1);
        return ScalarSequence::tabulated(std::move(values), cutoff);
    }
    throw ConfigError("[" + section + "] " + name + "_family: unknown family '" + fam + "'");
}

inline PerturbationSpec::Component::Func parse_func(const std::string& s) {
    using F = PerturbationSpec::Component::Func;
    if (s == "none") return F::None;
    if (s == "sin") return F::Sin;
    if (s == "cos") return F::Cos;
    if (s == "tanh") return F::Tanh;
    if (s == "id") return F::Id;
    throw ConfigError("unknown componentwise function '" + s + "' (none|sin|cos|tanh|id)");
}

}  // namespace detail

inline ExperimentConfig load_experiment(const ConfigFile& cfg) {
    ExperimentConfig ec;
    ec.dimension = static_cast<int>(cfg.get_long("system", "dimension"));
    if (ec.dimension < 1 || ec.dimension > 16)
        throw ConfigError("dimension must be in [1,16]");
    ec.horizon = cfg.get_long("system", "horizon");
    if (ec.horizon < 1) throw ConfigError("horizon must be >= 1");
    const int d = ec.dimension;

    // [policy] first: the rate cache must cover the series horizon
    ec.policy.series_horizon = cfg.get_long_or("policy", "series_horizon", 60);
    ec.policy.fixed_point_tol = cfg.get_double_or("policy", "fixed_point_tol", 1e-9);
    ec.policy.max_iters = cfg.get_long_or("policy", "max_iters", 10000);
    ec.policy.backward_tol = cfg.get_double_or("policy", "backward_tol", 1e-12);

    // [linear]
    {
        const std::string fam = cfg.get("linear", "family");
        if (fam == "constant") {
            ec.linear = MatrixSequence::constant(cfg.get_matrix("linear", "matrix", d));
        } else if (fam == "diagonal") {
            auto v = cfg.get_list("linear", "diag");
            if (static_cast<int>(v.size()) != d) throw ConfigError("[linear] diag needs d entries");
            ec.linear = MatrixSequence::diagonal(Eigen::Map<Vector>(v.data(), d));
        } else if (fam == "expression") {
            std::vector<Expr> entries;
            entries.reserve(static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const std::string key = "entry_" + std::to_string(i) + "_" + std::to_string(j);
                    entries.push_back(parse_expr(cfg.get_quoted("linear", key)));
                }
            ec.linear = MatrixSequence::expression(d, std::move(entries));
        } else if (fam == "tabulated") {
            std::vector<Matrix> table;
            for (long k = 0;; ++k) {
                const std::string key = "table_" + std::to_string(k);
                if (!cfg.has("linear", key)) break;
                table.push_back(cfg.get_matrix("linear", key, d));
            }
            if (table.empty()) throw ConfigError("[linear] tabulated family needs table_0, table_1, ...");
            ec.linear = MatrixSequence::tabulated(std::move(table));
        } else {
            throw ConfigError("[linear] family: unknown '" + fam + "'");
        }
    }

    // [projector]
    {
        const std::string fam = cfg.get_or("projector", "family", "identity");
        if (fam == "identity") {
            ec.projector = ProjectorPair::identity(d);
        } else if (fam == "diagonal") {
            auto v = cfg.get_list("projector", "stable");
            if (static_cast<int>(v.size()) != d) throw ConfigError("[projector] stable needs d entries");
            ec.projector = ProjectorPair::diagonal(Eigen::Map<Vector>(v.data(), d));
        } else if (fam == "matrix") {
            ec.projector = ProjectorPair::constant(cfg.get_matrix("projector", "matrix", d));
        } else {
            throw ConfigError("[projector] family: unknown '" + fam + "'");
        }
    }

    // [rates]
    {
        const long rate_span = std::max(ec.horizon, ec.policy.series_horizon) + 2;
        ScalarSequence rho = ScalarSequence::constant(cfg.get_double_or("rates", "rho", 1.0));
        const std::string fam = cfg.get("rates", "h_family");
        if (fam == "geometric") {
            ec.rates = RatePair::geometric(std::move(rho), cfg.get_double("rates", "theta"), rate_span);
        } else if (fam == "generalized_exp") {
            Expr u = parse_expr(cfg.get_quoted("rates", "u"));
            const double u_min = cfg.get_double_or("rates", "u_min", 0.0);
            ec.rates = RatePair::generalized_exp(std::move(rho),
                                                 ScalarSequence::expression(std::move(u)), u_min,
                                                 rate_span);
        } else if (fam == "tabulated") {
            ec.rates = RatePair::tabulated(std::move(rho), cfg.get_list("rates", "h_table"));
        } else {
            throw ConfigError("[rates] h_family: unknown '" + fam + "'");
        }
    }

    // [perturbation]
    {
        const std::string fam = cfg.get("perturbation", "family");
        if (fam == "zero") {
            ec.perturbation = PerturbationSpec::zero(d);
        } else if (fam == "constant") {
            auto v = cfg.get_list("perturbation", "constant");
            if (static_cast<int>(v.size()) != d) throw ConfigError("[perturbation] constant needs d entries");
            ec.perturbation = PerturbationSpec::constant(Eigen::Map<Vector>(v.data(), d));
        } else if (fam == "componentwise") {
            std::vector<PerturbationSpec::Component> comps(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) {
                auto& c = comps[static_cast<std::size_t>(i)];
                const std::string p = "f_" + std::to_string(i) + "_";
                c.bias = cfg.get_double_or("perturbation", p + "bias", 0.0);
                c.amp = cfg.get_double_or("perturbation", p + "amp", 0.0);
                c.decay = cfg.get_double_or("perturbation", p + "decay", 1.0);
                c.shift = cfg.get_double_or("perturbation", p + "shift", 0.0);
                c.src = static_cast<int>(cfg.get_long_or("perturbation", p + "src", 0));
                if (c.src < 0 || c.src >= d) throw ConfigError("[perturbation] " + p + "src out of range");
                c.func = detail::parse_func(cfg.get_or("perturbation", p + "func", "none"));
            }
            ec.perturbation = PerturbationSpec::componentwise(
                std::move(comps), detail::load_weight(cfg, "perturbation", "gamma"),
                detail::load_weight(cfg, "perturbation", "mu"));
        } else if (fam == "expression") {
            std::vector<Expr> comps;
            comps.reserve(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i)
                comps.push_back(parse_expr(cfg.get_quoted("perturbation", "f_" + std::to_string(i))));
            ec.perturbation = PerturbationSpec::expressions(
                std::move(comps), detail::load_weight(cfg, "perturbation", "gamma"),
                detail::load_weight(cfg, "perturbation", "mu"));
        } else {
            throw ConfigError("[perturbation] family: unknown '" + fam + "'");
        }
        ec.p3_box = cfg.get_double_or("perturbation", "box", 2.0);
    }

    // [sampling]
    ec.samples = static_cast<int>(cfg.get_long_or("sampling", "samples", 100));
    ec.k_max = cfg.get_long_or("sampling", "k_max", std::min<long>(ec.horizon, 20));
    ec.m_max = cfg.get_long_or("sampling", "m_max", 10);
    ec.sample_box = cfg.get_double_or("sampling", "box", 1.0);
    ec.seed = static_cast<std::uint64_t>(cfg.get_long_or("sampling", "seed", 1));

    // [certify]
    ec.p3_samples = static_cast<int>(cfg.get_long_or("certify", "p3_samples", 1000));

    if (ec.k_max > ec.horizon)
        throw ConfigError("sampling k_max exceeds the certification horizon");
    if (ec.k_max > ec.policy.series_horizon)
        throw ConfigError("sampling k_max exceeds the series horizon");
    if (ec.m_max > ec.k_max) throw ConfigError("sampling m_max exceeds k_max");

    cfg.ensure_fully_consumed({"system", "linear", "projector", "rates", "perturbation",
                               "policy", "sampling", "certify"});
    return ec;
}

/// Builds the certified system pair from a loaded experiment. Throws on
/// certification failure only via the returned certificate flags; numeric
/// errors (singular coefficients, unsummable tails) propagate.
struct BuiltExperiment {
    SystemPair sys;
    TruncationPolicy policy;
};

inline BuiltExperiment build_experiment(const ExperimentConfig& ec) {
    const long cache_horizon = std::max(ec.horizon, ec.policy.series_horizon) + 2;
    TransitionCache cache(ec.linear, cache_horizon);
    CertifyOptions opts;
    opts.horizon = ec.horizon;
    opts.p3_samples = ec.p3_samples;
    opts.p3_box = ec.p3_box;
    opts.seed = ec.seed;
    DichotomyCertificate cert = certify_system(cache, ec.projector, ec.rates, ec.perturbation,
                                               ec.policy, opts);
    SystemPair sys = SystemPair::assemble(std::move(cache), ec.projector, ec.rates,
                                          ec.perturbation, std::move(cert));
    return BuiltExperiment{std::move(sys), ec.policy};
}

}  // namespace linequiv
