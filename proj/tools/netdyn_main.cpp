#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "netdyn/experiment.hpp"
#include "netdyn/io_util.hpp"
#include "netdyn/rng.hpp"

namespace {

using netdyn::ExperimentConfig;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int n_seeds = 1;
    std::string out_dir;
    bool deterministic = false;
};

ExperimentConfig resolve_cli(const CommonOpts& opts) {
    ExperimentConfig cfg = netdyn::load_experiment_config(opts.config_path);
    if (opts.seed_set) cfg.master_seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.deterministic) cfg.deterministic = true;
    return cfg;
}

// Aggregates "aggregate" blocks of per-seed report files into a summary.
void write_seed_summary(const std::filesystem::path& out,
                        const std::vector<std::filesystem::path>& seed_dirs) {
    nlohmann::json summary;
    summary["n_seeds"] = seed_dirs.size();
    std::map<std::string, std::vector<double>> columns;
    for (const auto& dir : seed_dirs) {
        for (const char* name : {"report.json", "ood_report.json"}) {
            const auto path = dir / name;
            if (!std::filesystem::exists(path)) continue;
            const auto j = nlohmann::json::parse(netdyn::read_text_file(path));
            if (!j.contains("aggregate")) continue;
            for (const auto& [key, value] : j.at("aggregate").items()) {
                if (value.is_number()) columns[key].push_back(value.get<double>());
            }
        }
    }
    nlohmann::json agg;
    for (const auto& [key, values] : columns) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double sq = 0.0;
        for (double v : values) sq += (v - mean) * (v - mean);
        const double stddev =
            values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
        agg[key + "_over_seeds"] = {{"mean", mean}, {"std", stddev}};
    }
    summary["aggregate"] = agg;
    netdyn::write_text_file(out / "seeds_summary.json", summary.dump(2) + "\n");
}

int run(const std::string& name, const CommonOpts& opts,
        const std::function<void(const ExperimentConfig&)>& command) {
    try {
        ExperimentConfig cfg = resolve_cli(opts);
        if (opts.n_seeds <= 1) {
            command(cfg);
            return 0;
        }
        std::vector<std::filesystem::path> seed_dirs;
        for (int k = 0; k < opts.n_seeds; ++k) {
            ExperimentConfig per = cfg;
            per.master_seed = netdyn::mix_seed(cfg.master_seed, 7000 + static_cast<std::uint64_t>(k));
            per.output_dir = cfg.output_dir / ("seed_" + std::to_string(k));
            if (name == "gen-data" && !cfg.dataset_dir.empty()) {
                per.dataset_dir = cfg.dataset_dir / ("seed_" + std::to_string(k));
            }
            command(per);
            seed_dirs.push_back(per.output_dir);
        }
        std::filesystem::create_directories(cfg.output_dir);
        write_seed_summary(cfg.output_dir, seed_dirs);
        return 0;
    } catch (const netdyn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const netdyn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const netdyn::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 3;
    } catch (const netdyn::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"netdyn: forecasting networked dynamics without topology knowledge"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::function<void(const ExperimentConfig&)>>>
        commands = {
            {"gen-data", netdyn::cmd_gen_data},   {"train", netdyn::cmd_train},
            {"eval", netdyn::cmd_eval},           {"ood", netdyn::cmd_ood},
            {"scalability", netdyn::cmd_scalability}, {"sweep", netdyn::cmd_sweep},
            {"noise", netdyn::cmd_noise},         {"transductive", netdyn::cmd_transductive},
        };
    const std::map<std::string, std::string> descriptions = {
        {"gen-data", "forge a synthetic (graph, trajectory) dataset"},
        {"train", "train a model and evaluate it on the test split"},
        {"eval", "evaluate a checkpoint on a dataset"},
        {"ood", "evaluate a checkpoint on out-of-distribution test sets"},
        {"scalability", "evaluate a small-graph checkpoint on larger graphs"},
        {"sweep", "hyperparameter grid over latent dim / condition length"},
        {"noise", "observation-noise robustness curve"},
        {"transductive", "chronological-split training on a panel CSV"},
    };

    std::map<std::string, CommonOpts> opts;
    for (const auto& [name, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
        CommonOpts& o = opts[name];
        sub->add_option("--config", o.config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override master_seed")->each([&o](const std::string&) {
            o.seed_set = true;
        });
        sub->add_option("--n-seeds", o.n_seeds, "repeat over derived seeds and aggregate")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out_dir, "override output_dir");
        sub->add_flag("--deterministic", o.deterministic, "force deterministic mode");
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& [name, fn] : commands) {
        if (app.got_subcommand(name)) return run(name, opts[name], fn);
    }
    return 2;
}
