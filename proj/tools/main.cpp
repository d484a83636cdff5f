#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "graphon_mfc/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"graphon-mfc: mean-field optimal control lab for graphon-interacting diffusions"};
    app.require_subcommand(1);

    gmfc::RunOptions options;
    auto* run = app.add_subcommand("run", "execute a task described by a JSON config");
    run->add_option("config", options.config_path, "path to the config file")->required();
    run->add_option("--threads", options.threads, "worker thread count (default: hardware)");
    run->add_option("--out", options.out_dir, "output directory (overrides config)");

    std::string task;
    auto* describe = app.add_subcommand("describe", "print the config schema for a task");
    describe->add_option("task", task, "task name")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        return gmfc::run_task(options, std::cerr);
    }
    return gmfc::describe_task(task, std::cout);
}
