#include "bdt/cli/cli.hpp"

#include <CLI11.hpp>

#include <map>

int main(int argc, char** argv) {
    CLI::App app{"Backdoor attack / detection / elimination toolkit"};
    app.require_subcommand(1);

    const std::map<std::string, std::string> descriptions = {
        {"train-backdoor", "poison the training set and train a classifier"},
        {"train-clean", "train the clean control classifier"},
        {"train-vae", "train the feature-grid VAE for a model"},
        {"calibrate", "set the detection threshold on held-out benign data"},
        {"detect", "emit a verdict per image in a directory"},
        {"eliminate", "fine-tune the backdoor away against a frozen reference"},
        {"evaluate", "ACC/ASR (and AUROC with --detector) for a checkpoint"},
        {"dropout-study", "ACC/ASR under feature dropout ratios"},
        {"consistency-study", "cross-trigger activation and feature distances"},
        {"report", "aggregate reports sharing one config hash"},
    };

    bdt::CliOptions opt;
    for (const auto& name : bdt::kCliCommands) {
        auto* sub = app.add_subcommand(name, descriptions.at(name));
        sub->add_option("--config", opt.config_path, "JSON config file");
        sub->add_option("--seed", opt.seed, "seed override");
        sub->add_option("--output", opt.output_dir, "output directory override");
        sub->add_flag("--force", opt.force, "ignore cached checkpoints");
        sub->add_option("--model", opt.model_path, "classifier checkpoint");
        sub->add_option("--detector", opt.detector_path,
                        "VAE/detector checkpoint");
        sub->add_option("--images", opt.images_dir, "directory of .ppm/.pgm");
        sub->callback([&opt, name] { opt.command = name; });
    }

    CLI11_PARSE(app, argc, argv);
    return bdt::run_command(opt);
}
