#pragma once

// Dataset forging and on-disk layout: a manifest plus per-instance graph and
// trajectory files. Every instance derives its own random streams from
// (master seed, instance index), so generation is order-independent and a
// rerun with the same seed reproduces the directory byte for byte.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "netdyn/dynamics.hpp"
#include "netdyn/graph.hpp"

namespace netdyn {

struct DatasetSpec {
    Dynamics dynamics = Dynamics::Regulatory;
    Topology topology = Topology::ER;
    bool mixed = false; // concatenates ER, SF and Community blocks
    int n_nodes = 30;
    int n_train = 20, n_val = 5, n_test = 5;
    double er_p = 0.1;
    int sf_m = 4;
    double cn_p_in = 0.25, cn_p_out = 0.1;
    int cn_communities = 4;
    double weight_lo = 0.5, weight_hi = 1.5;
    IcMode ic_mode = IcMode::ID;
    double t_final = 0.0; // 0 = family default
    int n_timestamps = 200;
    double neural_tau = 1.0, neural_mu = 3.0;

    int count_per_topology() const { return n_train + n_val + n_test; }
    int count_total() const { return count_per_topology() * (mixed ? 3 : 1); }
};

struct DatasetManifest {
    int version = 1;
    std::string dynamics;
    std::string topology; // "Mixed" for concatenated datasets
    int n_nodes = 0;
    int n_timestamps = 0;
    int feature_dim = 1;
    double t_final = 0.0;
    std::vector<int> train_ids, val_ids, test_ids;
    std::uint64_t master_seed = 0;
    int count = 0;
};

struct Instance {
    int id = 0;
    TopologySpec topo;
    WeightedGraph graph;
    DynamicsSpec dyn;
    TrajectorySet traj;
};

std::string instance_name(int id); // zero-padded

// Builds one (graph, params, IC, trajectory) tuple. On integration failure
// the initial condition is resampled once; a second failure aborts with the
// instance id.
Instance make_instance(const DatasetSpec& spec, Topology family, std::uint64_t master_seed,
                       int index);

void generate_dataset(const DatasetSpec& spec, std::uint64_t master_seed,
                      const std::filesystem::path& dir);

struct LoadedDataset {
    DatasetManifest manifest;
    std::filesystem::path dir;
    std::vector<TrajectorySet> train, val, test; // graph_id carries the instance name
};

DatasetManifest load_manifest(const std::filesystem::path& dir);
LoadedDataset load_dataset(const std::filesystem::path& dir);
TrajectorySet load_dataset_trajectory(const std::filesystem::path& dir, int id);
WeightedGraph load_dataset_graph(const std::filesystem::path& dir, int id,
                                 TopologySpec* spec_out = nullptr);

} // namespace netdyn
