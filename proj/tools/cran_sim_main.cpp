#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cran/errors.hpp"
#include "cran/runner.hpp"
#include "cran/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cran-sim: desk-scale LPWAN localization testbed"};
    app.require_subcommand(1);

    std::string config_path = "configs/ilmenau.json";
    std::string out_dir = "out";
    std::string mode = "inproc";
    std::string exp_name;
    std::vector<std::string> sets;

    CLI::App* run = app.add_subcommand("run", "full pipeline on a scenario config");
    run->add_option("--config", config_path, "scenario JSON path")->capture_default_str();
    run->add_option("--mode", mode, "transport mode")
        ->check(CLI::IsMember({"inproc", "sockets"}))
        ->capture_default_str();
    run->add_option("--out", out_dir, "output directory")->capture_default_str();
    run->add_option("--set", sets, "config override, key.path=value (repeatable)");

    CLI::App* exp = app.add_subcommand("experiment", "named study on a scenario config");
    exp->add_option("name", exp_name, "run | per-table | sync-sigma | tdoa-mc")->required();
    exp->add_option("--config", config_path, "scenario JSON path")->capture_default_str();
    exp->add_option("--out", out_dir, "output directory")->capture_default_str();
    exp->add_option("--set", sets, "config override, key.path=value (repeatable)");

    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream f(config_path);
        if (!f) {
            std::fprintf(stderr, "error: cannot open config '%s'\n", config_path.c_str());
            return 2;
        }
        std::string text((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
        if (!sets.empty()) text = cran::apply_config_overrides(text, sets);
        cran::ScenarioConfig cfg = cran::scenario_from_json_text(text);

        cran::ExperimentResult res;
        if (run->parsed()) {
            res = cran::run_scenario(cfg, out_dir,
                                     mode == "sockets" ? cran::RunMode::sockets
                                                       : cran::RunMode::inproc);
        } else {
            res = cran::run_experiment(exp_name, cfg, out_dir);
        }

        std::printf("%s  config %s\n", res.name.c_str(), res.config_hash.c_str());
        for (const auto& [key, value] : res.metrics)
            std::printf("  %-24s %.12g\n", key.c_str(), value);
        std::printf("  summary: %s\n", res.summary_json_path.string().c_str());
        if (!res.errors.empty()) {
            std::fprintf(stderr, "%zu anomalies:\n", res.errors.size());
            for (std::size_t i = 0; i < res.errors.size() && i < 20; ++i)
                std::fprintf(stderr, "  %s\n", res.errors[i].c_str());
            if (res.errors.size() > 20) std::fprintf(stderr, "  ...\n");
        }
        return res.metrics.empty() ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
