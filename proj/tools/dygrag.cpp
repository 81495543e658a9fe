#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "dygrag/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dygrag: retrieval-augmented generation on dynamic graphs"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::string> axes = {"K", "ablations", "strategies", "retrievers"};

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (INI-style sections)");
        cmd->add_option("--set", overrides, "override as section.key=value")
            ->take_all();
    };

    std::vector<CLI::App*> commands;
    for (const char* stage : dygrag::kStageNames) {
        CLI::App* cmd = app.add_subcommand(stage, std::string("run the ") + stage + " stage");
        add_common(cmd);
        commands.push_back(cmd);
    }
    CLI::App* all = app.add_subcommand("all", "run the full pipeline and emit the report");
    add_common(all);
    CLI::App* matrix = app.add_subcommand("matrix", "run the experiment grid");
    add_common(matrix);
    matrix->add_option("--axes", axes, "axes: K, ablations, strategies, retrievers")->take_all();

    CLI11_PARSE(app, argc, argv);

    try {
        dygrag::Config cfg = config_path.empty() ? dygrag::Config::defaults()
                                                 : dygrag::Config::from_file(config_path);
        cfg.apply_env_overrides();
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                std::cerr << "bad --set (want key=value): " << kv << "\n";
                return 2;
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }

        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "all") {
            std::cout << "report: " << dygrag::run_all(cfg) << "\n";
        } else if (sub == "matrix") {
            std::cout << "matrix: " << dygrag::run_matrix(cfg, axes) << "\n";
        } else {
            dygrag::run_stage(cfg, sub);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
