#pragma once

// Command-line orchestration: config parsing, the experiment protocols
// (dataset forging, training, evaluation, OOD / noise / scalability / sweep
// studies, transductive ingestion) and report emission. Every command is
// replayable: (config, master_seed) fully determines its outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "netdyn/dataset.hpp"
#include "netdyn/model.hpp"
#include "netdyn/train.hpp"

namespace netdyn {

struct OodConfig {
    int n_per_scenario = 5;
    std::vector<std::string> scenarios{"topo", "weights", "ic"};
    // Shifted generation parameters (defaults follow the studied settings).
    double er_p = 0.2;
    int sf_m = 8;
    double cn_p_out = 0.2;
    double weight_lo = 2.0, weight_hi = 3.0;
    std::vector<double> density_grid; // mean-degree-to-size ratios
};

struct ScalabilityConfig {
    int n_nodes = 300;
    int n_graphs = 3;
    std::vector<int> pred_lengths{10, 50, 100, 175};
    int max_nodes = 2000; // memory guard
};

struct SweepConfig {
    std::vector<int> latent_dims;
    std::vector<int> t_obs_values;
    int epochs = 0; // 0 = use train.epochs
};

struct TransductiveConfig {
    std::filesystem::path csv;
    int split_index = 0;
    int t_obs = 21;
    std::vector<int> horizons{7, 14, 21};
};

struct ExperimentConfig {
    std::string protocol; // optional; validated against the subcommand
    std::filesystem::path output_dir;
    std::uint64_t master_seed = 0;
    bool deterministic = true;
    std::filesystem::path dataset_dir;
    std::filesystem::path checkpoint; // input for eval/ood/scalability/noise
    DatasetSpec dataset;
    ModelConfig model;
    bool n_heads_auto = true; // resolve from (dynamics, topology) when unset
    TrainConfig train;
    bool train_seed_explicit = false; // otherwise derived from master_seed
    bool export_grids = false;
    std::vector<double> grid_fractions{0.125, 0.375, 0.925};
    OodConfig ood;
    ScalabilityConfig scalability;
    SweepConfig sweep;
    std::vector<double> noise_sigmas{0.0, 0.01, 0.02, 0.04};
    TransductiveConfig transductive;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Resolved config with all defaults materialized; echoed into every report.
std::string experiment_config_json(const ExperimentConfig& cfg);

// 1 for SIS on ER and SF networks, 3 otherwise.
int resolve_n_heads(Dynamics dynamics, Topology topology, bool mixed);

// Owns an output directory for the duration of one command.
class DirLock {
  public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    std::filesystem::path path_;
};

void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_ood(const ExperimentConfig& cfg);
void cmd_scalability(const ExperimentConfig& cfg);
void cmd_sweep(const ExperimentConfig& cfg);
void cmd_noise(const ExperimentConfig& cfg);
void cmd_transductive(const ExperimentConfig& cfg);

// Dense panel CSV (node_id,timestamp,f_0,...) ingestion and export.
TrajectorySet load_panel_csv(const std::filesystem::path& path);
void save_panel_csv(const std::filesystem::path& path, const TrajectorySet& traj);

} // namespace netdyn
