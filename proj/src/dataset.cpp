#include "netdyn/dataset.hpp"

#include <cstdio>

#include <json.hpp>

#include "netdyn/io_util.hpp"
#include "netdyn/parallel.hpp"
#include "netdyn/rng.hpp"

namespace netdyn {

std::string instance_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return buf;
}

namespace {

TopologySpec topo_spec_for(const DatasetSpec& spec, Topology family, std::uint64_t seed) {
    TopologySpec t;
    t.family = family;
    t.n_nodes = spec.n_nodes;
    t.p = spec.er_p;
    t.m = spec.sf_m;
    t.p_in = spec.cn_p_in;
    t.p_out = spec.cn_p_out;
    t.n_communities = spec.cn_communities;
    t.weight_lo = spec.weight_lo;
    t.weight_hi = spec.weight_hi;
    t.seed = seed;
    return t;
}

} // namespace

Instance make_instance(const DatasetSpec& spec, Topology family, std::uint64_t master_seed,
                       int index) {
    const std::uint64_t base = mix_seed(master_seed, static_cast<std::uint64_t>(index));
    Instance inst;
    inst.id = index;
    inst.topo = topo_spec_for(spec, family, base);
    inst.graph = generate_graph(inst.topo);
    inst.dyn = sample_dynamics_params(spec.dynamics, inst.graph, mix_seed(base, 3), spec.t_final,
                                      spec.n_timestamps);
    inst.dyn.neural_tau = spec.neural_tau;
    inst.dyn.neural_mu = spec.neural_mu;

    std::vector<double> x0 =
        sample_initial_condition(spec.dynamics, spec.n_nodes, spec.ic_mode, mix_seed(base, 4));
    try {
        inst.traj = integrate(inst.dyn, inst.graph, x0);
    } catch (const NumericError&) {
        // One resample, then abort: keeps datasets reproducible while
        // tolerating rare stiff draws.
        x0 = sample_initial_condition(spec.dynamics, spec.n_nodes, spec.ic_mode, mix_seed(base, 5));
        try {
            inst.traj = integrate(inst.dyn, inst.graph, x0);
        } catch (const NumericError& e) {
            throw NumericError("instance " + instance_name(index) +
                               ": integration failed after IC resample: " + e.what());
        }
    }
    inst.traj.graph_id = instance_name(index);
    return inst;
}

namespace {

nlohmann::json manifest_json(const DatasetSpec& spec, std::uint64_t master_seed,
                             double t_final) {
    nlohmann::json j;
    j["version"] = 1;
    j["dynamics"] = to_string(spec.dynamics);
    j["topology"] = spec.mixed ? "Mixed" : to_string(spec.topology);
    j["n_nodes"] = spec.n_nodes;
    j["n_timestamps"] = spec.n_timestamps;
    j["feature_dim"] = 1;
    j["t_final"] = t_final;
    j["master_seed"] = master_seed;
    j["count"] = spec.count_total();
    nlohmann::json splits;
    std::vector<int> train, val, test;
    const int blocks = spec.mixed ? 3 : 1;
    const int per = spec.count_per_topology();
    for (int b = 0; b < blocks; ++b) {
        for (int k = 0; k < spec.n_train; ++k) train.push_back(b * per + k);
        for (int k = 0; k < spec.n_val; ++k) val.push_back(b * per + spec.n_train + k);
        for (int k = 0; k < spec.n_test; ++k) test.push_back(b * per + spec.n_train + spec.n_val + k);
    }
    splits["train"] = train;
    splits["val"] = val;
    splits["test"] = test;
    j["splits"] = splits;
    nlohmann::json ds;
    ds["ic_mode"] = spec.ic_mode == IcMode::ID ? "ID" : "OOD";
    ds["er_p"] = spec.er_p;
    ds["sf_m"] = spec.sf_m;
    ds["cn_p_in"] = spec.cn_p_in;
    ds["cn_p_out"] = spec.cn_p_out;
    ds["cn_communities"] = spec.cn_communities;
    ds["weight_range"] = {spec.weight_lo, spec.weight_hi};
    ds["neural_tau"] = spec.neural_tau;
    ds["neural_mu"] = spec.neural_mu;
    j["dataset_spec"] = ds;
    return j;
}

} // namespace

void generate_dataset(const DatasetSpec& spec, std::uint64_t master_seed,
                      const std::filesystem::path& dir) {
    if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0 || spec.count_per_topology() < 1) {
        throw ConfigError("dataset: split counts must be nonnegative with at least one instance");
    }
    std::filesystem::create_directories(dir);
    const double t_final = spec.t_final > 0.0 ? spec.t_final : default_t_final(spec.dynamics);

    const int total = spec.count_total();
    const int per = spec.count_per_topology();
    parallel_for(static_cast<std::size_t>(total), [&](std::size_t k) {
        const int id = static_cast<int>(k);
        Topology family = spec.topology;
        if (spec.mixed) {
            const Topology block[3] = {Topology::ER, Topology::SF, Topology::Community};
            family = block[id / per];
        }
        Instance inst = make_instance(spec, family, master_seed, id);
        save_graph(dir / ("graph_" + instance_name(id) + ".json"), inst.graph, inst.topo);
        save_trajectory_csv(dir / ("trajectory_" + instance_name(id) + ".csv"), inst.traj);
    });

    write_text_file(dir / "manifest.json", manifest_json(spec, master_seed, t_final).dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.dynamics = j.at("dynamics").get<std::string>();
        m.topology = j.at("topology").get<std::string>();
        m.n_nodes = j.at("n_nodes").get<int>();
        m.n_timestamps = j.at("n_timestamps").get<int>();
        m.feature_dim = j.at("feature_dim").get<int>();
        m.t_final = j.at("t_final").get<double>();
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.count = j.at("count").get<int>();
        m.train_ids = j.at("splits").at("train").get<std::vector<int>>();
        m.val_ids = j.at("splits").at("val").get<std::vector<int>>();
        m.test_ids = j.at("splits").at("test").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    return m;
}

TrajectorySet load_dataset_trajectory(const std::filesystem::path& dir, int id) {
    TrajectorySet t = load_trajectory_csv(dir / ("trajectory_" + instance_name(id) + ".csv"));
    t.graph_id = instance_name(id);
    return t;
}

WeightedGraph load_dataset_graph(const std::filesystem::path& dir, int id, TopologySpec* spec_out) {
    return load_graph(dir / ("graph_" + instance_name(id) + ".json"), spec_out);
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    LoadedDataset ds;
    ds.dir = dir;
    ds.manifest = load_manifest(dir);
    auto load_split = [&](const std::vector<int>& ids, std::vector<TrajectorySet>& out) {
        out.resize(ids.size());
        parallel_for(ids.size(), [&](std::size_t k) {
            out[k] = load_dataset_trajectory(dir, ids[k]);
        });
    };
    load_split(ds.manifest.train_ids, ds.train);
    load_split(ds.manifest.val_ids, ds.val);
    load_split(ds.manifest.test_ids, ds.test);
    return ds;
}

} // namespace netdyn
