// linequiv: certify dichotomy hypotheses of a nonautonomous difference system,
// construct the topological-equivalence maps H and G against its nonlinear
// perturbation, and run stability experiments. Config-driven; see configs/.

#include <cstdio>
#include <cstring>
#include <string>

#include "linequiv/runner.hpp"

namespace {

void usage(std::FILE* to) {
    std::fprintf(to,
                 "usage: linequiv <certify|conjugate|stability> --config <path>\n"
                 "                [--horizon N] [--seed S] [--out DIR]\n"
                 "\n"
                 "  certify    check hypotheses (P1)-(P6) / (S1)-(S4), write certify.{txt,csv}\n"
                 "  conjugate  build H, G and verify the equivalence, write conjugacy.{txt,csv}\n"
                 "  stability  equilibrium + preservation checks, write stability.{txt,csv}\n"
                 "\n"
                 "  LINEQUIV_LOG=error|info|debug controls stderr logging.\n"
                 "  exit codes: 0 ok, 2 config error, 3 certification failure, 4 numeric failure\n");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace linequiv;
    if (argc < 2) {
        usage(stderr);
        return kExitConfig;
    }
    const std::string cmd = argv[1];
    if (cmd == "-h" || cmd == "--help" || cmd == "help") {
        usage(stdout);
        return kExitOk;
    }

    CliOptions opt;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&]() -> const char* {
            if (i + 1 >= argc) {
                std::fprintf(stderr, "missing value for %s\n", arg.c_str());
                std::exit(kExitConfig);
            }
            return argv[++i];
        };
        if (arg == "--config") {
            opt.config_path = next();
        } else if (arg == "--horizon") {
            opt.horizon = std::strtol(next(), nullptr, 10);
        } else if (arg == "--seed") {
            opt.seed = std::strtoull(next(), nullptr, 10);
        } else if (arg == "--out") {
            opt.out_dir = next();
        } else {
            std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
            usage(stderr);
            return kExitConfig;
        }
    }
    if (opt.config_path.empty()) {
        std::fprintf(stderr, "--config is required\n");
        return kExitConfig;
    }

    try {
        if (cmd == "certify") return cmd_certify(opt);
        if (cmd == "conjugate") return cmd_conjugate(opt);
        if (cmd == "stability") return cmd_stability(opt);
        std::fprintf(stderr, "unknown command: %s\n", cmd.c_str());
        usage(stderr);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    } catch (const NotContractionCase& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    } catch (const Error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    }
}
