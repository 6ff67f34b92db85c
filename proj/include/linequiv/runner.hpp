#pragma once

// Command implementations behind the CLI: certify, conjugate, stability.
// Reports are written as text + CSV (RFC-4180-style, header row mandatory,
// '.' decimal separator, 17 significant digits so doubles round-trip).
//
// Exit codes: 0 success, 2 config error, 3 certification/threshold failure,
// 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "linequiv/config.hpp"
#include "linequiv/stability.hpp"

namespace linequiv {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitCertification = 3,
    kExitNumeric = 4,
};

// -- logging ------------------------------------------------------------------

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel& log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("LINEQUIV_LOG");
        if (!env) return LogLevel::Error;
        const std::string v(env);
        if (v == "debug") return LogLevel::Debug;
        if (v == "info") return LogLevel::Info;
        return LogLevel::Error;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}
inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

// -- formatting ---------------------------------------------------------------

/// 17 significant digits: a double printed this way parses back bit-exactly.
inline std::string fmt_g17(double v) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

struct CliOptions {
    std::string config_path;
    std::optional<long> horizon;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

inline ExperimentConfig load_with_overrides(const CliOptions& opt) {
    ConfigFile file = ConfigFile::parse_file(opt.config_path);
    ExperimentConfig ec = load_experiment(file);
    if (opt.horizon) {
        ec.horizon = *opt.horizon;
        if (ec.horizon < 1) throw ConfigError("--horizon must be >= 1");
        if (ec.k_max > ec.horizon)
            throw ConfigError("--horizon override is below the sampling k_max");
    }
    if (opt.seed) ec.seed = *opt.seed;
    return ec;
}

inline std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);  // '\n' line endings on every platform
    if (!out) throw Error("cannot write " + path);
    return out;
}

// -- certify ------------------------------------------------------------------

inline void write_certify_report(const DichotomyCertificate& cert, const std::string& out_dir) {
    {
        auto txt = open_out(out_dir, "certify.txt");
        auto line = [&txt](const std::string& label, const HypothesisResult& hr,
                           const std::string& detail) {
            txt << label << ": " << (hr.holds ? "HOLDS" : "FAILS") << "  " << detail;
            if (hr.witness_k >= 0) txt << "  witness k=" << hr.witness_k;
            if (hr.witness_n >= 0) txt << " n=" << hr.witness_n;
            txt << "\n";
        };
        txt << "dichotomy certification (finite horizon " << cert.horizon << ", dim "
            << cert.dim << ")\n";
        line("P1 bounded invertible coefficients", cert.p1, "M = " + fmt_g17(cert.M));
        line(cert.contraction_case ? "P2/S1 contraction envelope" : "P2 nonuniform dichotomy",
             cert.p2, "worst violation = " + fmt_g17(cert.p2.worst));
        line("P3 declared Lipschitz/bound sampling", cert.p3,
             "worst excess = " + fmt_g17(cert.p3.worst));
        line(cert.contraction_case ? "P4/S2 mu series" : "P4 mu series", cert.p4,
             "p = " + fmt_g17(cert.p));
        line(cert.contraction_case ? "P5/S3 gamma series" : "P5 gamma series", cert.p5,
             "q = " + fmt_g17(cert.q));
        line("P6 backward contraction", cert.p6, "margin = " + fmt_g17(cert.p6_margin));
        if (cert.contraction_case)
            line("S4 rate-product trend", cert.s4,
                 "s(horizon) = " + fmt_g17(cert.s4.worst) +
                     ", last rise at k=" + std::to_string(cert.s4.witness_k));
        txt << "contraction case: " << (cert.contraction_case ? "yes" : "no") << "\n";
        txt << "q (S3 envelope form): " << fmt_g17(cert.s3_q_envelope) << "\n";
        txt << "sup ||P(n)||: " << fmt_g17(cert.sup_p_norm)
            << "  sup ||Q(n)||: " << fmt_g17(cert.sup_q_norm) << "\n";
        txt << "projector idempotency defect: " << fmt_g17(cert.proj_idempotency_defect)
            << "  invariance defect: " << fmt_g17(cert.proj_invariance_defect) << "\n";
        txt << "overall: " << (cert.all_hold() ? "CERTIFIED" : "NOT CERTIFIED") << "\n";
    }
    {
        auto csv = open_out(out_dir, "certify.csv");
        csv << "hypothesis,holds,value,witness_k,witness_n\n";
        auto row = [&csv](const std::string& name, const HypothesisResult& hr, double value) {
            csv << name << "," << (hr.holds ? 1 : 0) << "," << fmt_g17(value) << ","
                << hr.witness_k << "," << hr.witness_n << "\n";
        };
        row("P1_M", cert.p1, cert.M);
        row("P2_worst_violation", cert.p2, cert.p2.worst);
        row("P3_worst_excess", cert.p3, cert.p3.worst);
        row("P4_p", cert.p4, cert.p);
        row("P5_q", cert.p5, cert.q);
        row("P6_margin", cert.p6, cert.p6_margin);
        row("S4_s_at_horizon", cert.s4, cert.s4.worst);
        csv << "S3_q_envelope," << 1 << "," << fmt_g17(cert.s3_q_envelope) << ",-1,-1\n";
        csv << "contraction_case," << (cert.contraction_case ? 1 : 0) << ",0,-1,-1\n";
    }
}

inline int cmd_certify(const CliOptions& opt) {
    ExperimentConfig ec = load_with_overrides(opt);
    log_info("certifying " + opt.config_path + " over horizon " + std::to_string(ec.horizon));
    BuiltExperiment built = build_experiment(ec);
    write_certify_report(built.sys.cert, opt.out_dir);
    std::printf("certify: %s (M=%s, p=%s, q=%s, P6 margin=%s)\n",
                built.sys.cert.all_hold() ? "PASS" : "FAIL", fmt_g17(built.sys.cert.M).c_str(),
                fmt_g17(built.sys.cert.p).c_str(), fmt_g17(built.sys.cert.q).c_str(),
                fmt_g17(built.sys.cert.p6_margin).c_str());
    return built.sys.cert.all_hold() ? kExitOk : kExitCertification;
}

// -- conjugate ------------------------------------------------------------------

inline std::vector<ConjugacySample> draw_samples(const ExperimentConfig& ec, int dim) {
    std::mt19937_64 rng(ec.seed);
    std::vector<ConjugacySample> samples;
    samples.reserve(static_cast<std::size_t>(ec.samples));
    for (int s = 0; s < ec.samples; ++s) {
        ConjugacySample cs;
        cs.m = static_cast<long>(rng() % static_cast<std::uint64_t>(ec.m_max + 1));
        cs.xi = Vector(dim);
        cs.eta = Vector(dim);
        for (int i = 0; i < dim; ++i) {
            cs.xi(i) = uniform_in(rng, -ec.sample_box, ec.sample_box);
            cs.eta(i) = uniform_in(rng, -ec.sample_box, ec.sample_box);
        }
        samples.push_back(std::move(cs));
    }
    return samples;
}

inline int cmd_conjugate(const CliOptions& opt) {
    ExperimentConfig ec = load_with_overrides(opt);
    BuiltExperiment built = build_experiment(ec);
    write_certify_report(built.sys.cert, opt.out_dir);
    if (!built.sys.cert.all_hold()) {
        std::printf("conjugate: certification failed, see certify.txt\n");
        return kExitCertification;
    }
    ConjugacyPair cp(std::move(built.sys), built.policy);
    const auto samples = draw_samples(ec, cp.system().dim());
    log_info("verifying conjugacy on " + std::to_string(samples.size()) + " samples, k <= " +
             std::to_string(ec.k_max));
    ConjugacyReport conj = cp.verify_conjugacy(samples, ec.k_max);
    IdentityReport ident = cp.verify_identities(samples, ec.k_max);

    {
        auto csv = open_out(opt.out_dir, "conjugacy.csv");
        csv << "k,m,sample_id,res_conj,res_inv_HG,res_inv_GH,res_ident_wz,err_budget\n";
        for (const auto& row : conj.rows) {
            csv << row.k << "," << row.m << "," << row.sample_id << "," << fmt_g17(row.res_conj)
                << "," << fmt_g17(row.res_inv_hg) << "," << fmt_g17(row.res_inv_gh) << ","
                << fmt_g17(row.res_ident_wz) << "," << fmt_g17(row.err_budget) << "\n";
        }
    }
    {
        auto txt = open_out(opt.out_dir, "conjugacy.txt");
        txt << "samples: " << samples.size() << "  window k <= " << ec.k_max << "\n";
        txt << "max |H[k,x(k,m,xi)] - y(k,m,H(m,xi))|: " << fmt_g17(conj.max_res_conj) << "\n";
        txt << "max |G[k,y(k,m,eta)] - Phi(k,m)G(m,eta)|: " << fmt_g17(conj.max_res_lin) << "\n";
        txt << "max inverse residual: " << fmt_g17(conj.max_res_inv) << "\n";
        txt << "max |w* + z* o G|: " << fmt_g17(conj.max_res_wz) << "\n";
        txt << "max identity residual: " << fmt_g17(ident.max_res) << "\n";
        txt << "conjugacy within budget: " << (conj.within_budget ? "yes" : "no") << "\n";
        txt << "identities within budget: " << (ident.within_budget ? "yes" : "no") << "\n";
    }
    const bool ok = conj.within_budget && ident.within_budget;
    std::printf("conjugate: %s (max inverse residual %s, max identity residual %s)\n",
                ok ? "PASS" : "FAIL", fmt_g17(conj.max_res_inv).c_str(),
                fmt_g17(ident.max_res).c_str());
    return ok ? kExitOk : kExitCertification;
}

// -- stability ------------------------------------------------------------------

inline int cmd_stability(const CliOptions& opt) {
    ExperimentConfig ec = load_with_overrides(opt);
    BuiltExperiment built = build_experiment(ec);
    write_certify_report(built.sys.cert, opt.out_dir);
    if (!built.sys.cert.all_hold()) {
        std::printf("stability: certification failed, see certify.txt\n");
        return kExitCertification;
    }
    if (!built.sys.cert.contraction_case)
        throw ConfigError("stability command requires the contraction case (projector = identity)");

    const long horizon = std::min(ec.horizon, ec.policy.series_horizon);
    EquilibriumResult eq = find_equilibrium(built.sys, 1e-9);
    ConjugacyPair cp(std::move(built.sys), built.policy);
    StabilityReport rep = verify_stability_preservation(cp, eq, horizon);
    std::mt19937_64 rng(ec.seed);
    ProbeReport probe = asymptotic_stability_probe(cp, eq, ec.samples, horizon,
                                                   ec.sample_box, rng);

    {
        auto csv = open_out(opt.out_dir, "stability.csv");
        csv << "k,H_k0_dev,majorant,G_kystar_norm,rho0_h_bound\n";
        for (const auto& row : rep.rows) {
            csv << row.k << "," << fmt_g17(row.h_k0_dev) << "," << fmt_g17(row.majorant) << ","
                << fmt_g17(row.g_kystar_norm) << "," << fmt_g17(row.rho0_h_bound) << "\n";
        }
    }
    {
        auto txt = open_out(opt.out_dir, "stability.txt");
        txt << "y*: [";
        for (Eigen::Index i = 0; i < eq.y_star.size(); ++i)
            txt << (i ? " " : "") << fmt_g17(eq.y_star(i));
        txt << "]\nequilibrium residual over horizon: " << fmt_g17(eq.residual) << "\n";
        txt << "unique (8-point multistart): " << (eq.unique_flag ? "yes" : "no") << "\n";
        txt << "zero equilibrium: " << (rep.y_star_zero ? "yes" : "no") << "\n";
        txt << "worst majorant excess: " << fmt_g17(rep.worst_majorant_excess) << "\n";
        txt << "worst G-bound excess: " << fmt_g17(rep.worst_g_excess) << "\n";
        txt << "worst |G(k,y*) - Phi(k,0)y*|: " << fmt_g17(rep.worst_g_identity) << "\n";
        txt << "probe: all samples decayed below 10%: " << (probe.all_decayed ? "yes" : "no")
            << "\n";
        txt << "probe: decomposition bound held: " << (probe.decomposition_ok ? "yes" : "no")
            << "\n";
    }
    const bool ok = rep.within && eq.unique_flag && probe.all_decayed && probe.decomposition_ok;
    std::printf("stability: %s (y* residual %s, worst majorant excess %s)\n",
                ok ? "PASS" : "FAIL", fmt_g17(eq.residual).c_str(),
                fmt_g17(rep.worst_majorant_excess).c_str());
    return ok ? kExitOk : kExitCertification;
}

}  // namespace linequiv
