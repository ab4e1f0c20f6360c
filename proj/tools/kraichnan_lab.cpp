#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "studies.hpp"

namespace {

enum Exit { ok = 0, usage = 1, assumption = 2, numerical = 3, certificate = 4 };

unsigned env_threads() {
    const char* e = std::getenv("KRAICHNAN_THREADS");
    if (!e) return 1;
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (end == e || *end != '\0' || v < 1) {
        std::fprintf(stderr, "kraichnan-lab: ignoring KRAICHNAN_THREADS='%s' (need a positive integer)\n", e);
        return 1;
    }
    return unsigned(v);
}

lab::json load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw lab::ConfigError(path + ": cannot open");
    lab::json j;
    try {
        j = lab::json::parse(f);
    } catch (const lab::json::parse_error& e) {
        throw lab::ConfigError(path + ": " + e.what());
    }
    // a manifest from an earlier run reproduces that run
    if (j.is_object() && j.value("kind", "") == "kraichnan-lab-manifest") {
        if (!j.contains("config")) throw lab::ConfigError(path + ": manifest has no config");
        return j.at("config");
    }
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fourier-lattice laboratory for passive scalars in Kraichnan transport noise", "kraichnan-lab"};
    std::string study_name, config_path, out_dir;
    unsigned threads = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    for (const auto& [n, s] : lab::study_names()) names.push_back(n);
    app.add_option("study", study_name, "decay | smoothing | invariant | annuli | poincare | mc-validate | audit")
        ->required()
        ->check(CLI::IsMember(names));
    app.add_option("--config", config_path, "JSON run config or a manifest.json from an earlier run")->required();
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides output.directory)");
    auto* thr_opt = app.add_option("--threads", threads, "worker threads (overrides KRAICHNAN_THREADS)")->check(CLI::Range(1u, 4096u));
    auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
    app.set_version_flag("--version", std::string(KRAICHNAN_VERSION));
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage;
    }

    const auto study = *lab::parse_study(study_name);
    lab::RunConfig cfg;
    try {
        cfg = lab::parse_config(load(config_path), study);
    } catch (const lab::ConfigError& e) {
        std::fprintf(stderr, "kraichnan-lab: invalid config: %s\n", e.what());
        return usage;
    }
    if (*seed_opt) cfg.seed = seed;
    if (*out_opt) cfg.out_dir = out_dir;
    const unsigned nthreads = *thr_opt ? threads : env_threads();

    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        std::fprintf(stderr, "kraichnan-lab: cannot create output directory %s\n", dir.string().c_str());
        return usage;
    }

    lab::Outputs out(dir);
    lab::Context ctx{cfg, nthreads, out};
    lab::json manifest;
    manifest["kind"] = "kraichnan-lab-manifest";
    manifest["manifest_version"] = 1;
    manifest["tool_version"] = KRAICHNAN_VERSION;
    manifest["study"] = lab::to_string(study);
    manifest["seed"] = cfg.seed;
    manifest["config"] = lab::resolved(cfg);

    int code = ok;
    lab::json failure;
    try {
        lab::run_study(ctx);
    } catch (const kraichnan::AssumptionError& e) {
        code = assumption;
        failure = {{"kind", "assumption"}, {"message", e.what()}, {"audit", lab::detail::audit_json(e.audit)}};
    } catch (const kraichnan::IntegrationError& e) {
        code = numerical;
        failure = {{"kind", "numerical"}, {"message", e.what()}, {"time", e.time}};
    } catch (const kraichnan::NumericalError& e) {
        code = numerical;
        failure = {{"kind", "numerical"}, {"message", e.what()}};
    } catch (const lab::CertificateFailure& e) {
        code = certificate;
        failure = {{"kind", "certificate"}, {"message", e.what()}, {"detail", e.detail}};
    } catch (const kraichnan::CertificateError& e) {
        code = certificate;
        failure = {{"kind", "certificate"}, {"message", e.what()}};
    } catch (const std::exception& e) {
        code = usage;
        failure = {{"kind", "input"}, {"message", e.what()}};
    }

    if (code != ok) {
        out.remove_all();
        if (failure.contains("detail") && failure["detail"].contains("witness")) {
            try {
                out.json_file("witness.json", failure["detail"]["witness"]);
            } catch (const std::exception&) {
            }
        }
        std::fprintf(stderr, "kraichnan-lab: %s failed (exit %d): %s\n", lab::to_string(study).c_str(), code,
                     failure["message"].get<std::string>().c_str());
    }
    manifest["status"] = code == ok ? "ok" : "failed";
    manifest["exit_code"] = code;
    manifest["outputs"] = out.listing();
    if (code != ok) manifest["failure"] = failure;
    try {
        std::ofstream f(dir / "manifest.json", std::ios::binary);
        f << manifest.dump(2) << "\n";
        f.close();
        if (!f) throw std::runtime_error("write failed");
    } catch (const std::exception& e) {
        std::fprintf(stderr, "kraichnan-lab: cannot write manifest: %s\n", e.what());
        return code == ok ? usage : code;
    }
    if (code == ok)
        std::printf("kraichnan-lab: %s ok (threads %u), outputs in %s\n", lab::to_string(study).c_str(), nthreads, dir.string().c_str());
    return code;
}
