// Command-line front end: teacher training, consistency distillation,
// few-step sampling, metric evaluation, sweeps, solver validation, ablations.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lcmkit/commands.hpp"

namespace {

std::vector<double> parse_grid(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) out.push_back(std::stod(cell));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale diffusion distillation engine"};
    app.require_subcommand(1);

    std::string config_path, out_path, teacher_path, model_path, cond = "all";
    std::string samples_path, dataset_name, kind, grid_list, drop;
    int steps = 2, count = 2000;
    double omega = 5.0;

    auto* train = app.add_subcommand("train-teacher", "train a diffusion teacher");
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out_path)->required();

    auto* distill = app.add_subcommand("distill", "distill a consistency model from a teacher");
    distill->add_option("--teacher", teacher_path)->required();
    distill->add_option("--config", config_path)->required();
    distill->add_option("--out", out_path)->required();

    auto* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
    sample->add_option("--model", model_path)->required();
    sample->add_option("--steps", steps)->required();
    sample->add_option("--omega", omega)->required();
    sample->add_option("--cond", cond, "class index or 'all'");
    sample->add_option("--count", count);
    sample->add_option("--out", out_path)->required();

    auto* eval = app.add_subcommand("eval", "score a sample CSV against a dataset");
    eval->add_option("--samples", samples_path)->required();
    eval->add_option("--dataset", dataset_name)->required();
    eval->add_option("--out", out_path)->required();

    auto* sweep = app.add_subcommand("sweep", "grid experiment (k, omega, or steps)");
    sweep->add_option("--kind", kind)->required()->check(CLI::IsMember({"k", "omega", "steps"}));
    sweep->add_option("--grid", grid_list)->required();
    sweep->add_option("--config", config_path)->required();
    sweep->add_option("--out", out_path)->required();

    auto* oracle = app.add_subcommand("oracle-check", "validate the solver against closed forms");
    (void)oracle;

    auto* ablate = app.add_subcommand("ablate", "train with one backbone toggle off");
    ablate->add_option("--drop", drop)->required()->check(CLI::IsMember({"rope", "rmsnorm", "swiglu"}));
    ablate->add_option("--config", config_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            lcmkit::cmd_train_teacher(config_path, out_path, std::cout);
        } else if (distill->parsed()) {
            lcmkit::cmd_distill(teacher_path, config_path, out_path, std::cout);
        } else if (sample->parsed()) {
            lcmkit::cmd_sample(model_path, steps, omega, cond, count, out_path, std::cout);
        } else if (eval->parsed()) {
            lcmkit::cmd_eval(samples_path, dataset_name, out_path);
        } else if (sweep->parsed()) {
            lcmkit::cmd_sweep(kind, parse_grid(grid_list), config_path, out_path, std::cout);
        } else if (oracle->parsed()) {
            return lcmkit::cmd_oracle_check(std::cout) ? 0 : 1;
        } else if (ablate->parsed()) {
            lcmkit::cmd_ablate(drop, config_path, std::cout, std::cerr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
