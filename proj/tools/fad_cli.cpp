// Command-line front end: pretrain / adapt / ablate / verify / gen-data /
// analyze-kernel over JSON run configurations.
//
// Exit codes: 0 success, 1 property or test failure, 2 configuration error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fad/harness.hpp"

namespace {

fad::RunConfig load_config(const std::string& config_path, const std::string& out_dir,
                           std::uint64_t seed, bool seed_set, std::size_t episodes,
                           bool episodes_set, double lr, bool lr_set,
                           const std::string& checkpoint) {
    fad::RunConfig config;
    if (!config_path.empty())
        config = fad::run_config_from_json(fad::json::parse(fad::read_text_file(config_path)));
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed_set) config.seed = seed;
    if (episodes_set) config.episodes = episodes;
    if (lr_set) config.opt_lr = lr;
    if (!checkpoint.empty()) config.checkpoint = checkpoint;
    config.validate();
    return config;
}

void print_table(const fad::ResultTable& table) {
    for (const auto& row : table.rows)
        std::printf("%-28s n=%zu mean=%.4f ci95=%.4f\n", row.id.c_str(), row.accuracies.size(),
                    row.mean(), row.ci95_halfwidth());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency adaptation and diversion experiment harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint;
    std::uint64_t seed = 0;
    std::size_t episodes = 0;
    double lr = 0.0;
    bool seed_set = false, episodes_set = false, lr_set = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "base seed")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--episodes", episodes, "episode count")
            ->each([&](const std::string&) { episodes_set = true; });
        cmd->add_option("--lr", lr, "learning-rate multiplier")
            ->each([&](const std::string&) { lr_set = true; });
        cmd->add_option("--checkpoint", checkpoint, "backbone checkpoint base path");
    };

    CLI::App* c_pretrain = app.add_subcommand("pretrain", "train and freeze a source backbone");
    add_common(c_pretrain);

    CLI::App* c_adapt = app.add_subcommand("adapt", "episodic meta-test adaptation");
    add_common(c_adapt);

    std::string axis;
    CLI::App* c_ablate = app.add_subcommand("ablate", "run one ablation axis");
    add_common(c_ablate);
    c_ablate->add_option("--axis", axis, "components | kernels | thresholds | blocks")
        ->required();

    CLI::App* c_verify = app.add_subcommand("verify", "run the property suite");

    CLI::App* c_gen = app.add_subcommand("gen-data", "export the synthetic shift pair as IDX");
    add_common(c_gen);

    std::size_t ak_k = 3, ak_grid = 16;
    std::uint64_t ak_seed = 1;
    std::string ak_out = "out";
    CLI::App* c_ak = app.add_subcommand("analyze-kernel",
                                        "emit a kernel's transfer-function magnitude");
    c_ak->add_option("--k", ak_k, "kernel size (odd)");
    c_ak->add_option("--grid", ak_grid, "grid size");
    c_ak->add_option("--seed", ak_seed, "kernel seed");
    c_ak->add_option("--out", ak_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_verify->parsed()) return fad::cmd_verify(std::cout);

        if (c_ak->parsed()) {
            const fad::json summary = fad::cmd_analyze_kernel(ak_k, ak_grid, ak_seed, ak_out);
            std::cout << summary.dump(2) << "\n";
            return 0;
        }

        const fad::RunConfig config = load_config(config_path, out_dir, seed, seed_set, episodes,
                                                  episodes_set, lr, lr_set, checkpoint);
        if (c_pretrain->parsed()) {
            const fad::PretrainResult r = fad::cmd_pretrain(config);
            std::printf("pretrain: %zu epochs, train accuracy %.4f, checkpoint %s/backbone\n",
                        r.epochs_run, r.train_accuracy, config.out_dir.c_str());
            return 0;
        }
        if (c_adapt->parsed()) {
            print_table(fad::cmd_adapt(config));
            return 0;
        }
        if (c_ablate->parsed()) {
            print_table(fad::cmd_ablate(config, axis));
            return 0;
        }
        if (c_gen->parsed()) {
            fad::cmd_gen_data(config);
            std::printf("gen-data: wrote IDX pairs to %s\n", config.out_dir.c_str());
            return 0;
        }
    } catch (const fad::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const fad::json::exception& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
