#include "netdyn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fcntl.h>
#include <limits>
#include <set>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "netdyn/io_util.hpp"
#include "netdyn/metrics.hpp"
#include "netdyn/parallel.hpp"
#include "netdyn/rng.hpp"

namespace netdyn {

using nlohmann::json;

int resolve_n_heads(Dynamics dynamics, Topology topology, bool mixed) {
    if (!mixed && dynamics == Dynamics::SIS &&
        (topology == Topology::ER || topology == Topology::SF)) {
        return 1;
    }
    return 3;
}

namespace {

template <class T> T get_or(const json& j, const char* key, T def) {
    if (!j.contains(key) || j.at(key).is_null()) return def;
    return j.at(key).get<T>();
}

DatasetSpec parse_dataset(const json& j) {
    DatasetSpec d;
    if (j.contains("dynamics")) d.dynamics = dynamics_from_string(j.at("dynamics").get<std::string>());
    const std::string topo = get_or<std::string>(j, "topology", "ER");
    if (topo == "Mixed") {
        d.mixed = true;
    } else {
        d.topology = topology_from_string(topo);
    }
    d.n_nodes = get_or(j, "n_nodes", d.n_nodes);
    d.n_train = get_or(j, "n_train", d.n_train);
    d.n_val = get_or(j, "n_val", d.n_val);
    d.n_test = get_or(j, "n_test", d.n_test);
    d.er_p = get_or(j, "er_p", d.er_p);
    d.sf_m = get_or(j, "sf_m", d.sf_m);
    d.cn_p_in = get_or(j, "cn_p_in", d.cn_p_in);
    d.cn_p_out = get_or(j, "cn_p_out", d.cn_p_out);
    d.cn_communities = get_or(j, "cn_communities", d.cn_communities);
    if (j.contains("weight_range")) {
        d.weight_lo = j.at("weight_range").at(0).get<double>();
        d.weight_hi = j.at("weight_range").at(1).get<double>();
    }
    d.ic_mode = get_or<std::string>(j, "ic_mode", "ID") == "OOD" ? IcMode::OOD : IcMode::ID;
    d.t_final = get_or(j, "t_final", d.t_final);
    d.n_timestamps = get_or(j, "n_timestamps", d.n_timestamps);
    d.neural_tau = get_or(j, "neural_tau", d.neural_tau);
    d.neural_mu = get_or(j, "neural_mu", d.neural_mu);
    return d;
}

json dataset_json(const DatasetSpec& d) {
    json j;
    j["dynamics"] = to_string(d.dynamics);
    j["topology"] = d.mixed ? "Mixed" : to_string(d.topology);
    j["n_nodes"] = d.n_nodes;
    j["n_train"] = d.n_train;
    j["n_val"] = d.n_val;
    j["n_test"] = d.n_test;
    j["er_p"] = d.er_p;
    j["sf_m"] = d.sf_m;
    j["cn_p_in"] = d.cn_p_in;
    j["cn_p_out"] = d.cn_p_out;
    j["cn_communities"] = d.cn_communities;
    j["weight_range"] = {d.weight_lo, d.weight_hi};
    j["ic_mode"] = d.ic_mode == IcMode::ID ? "ID" : "OOD";
    j["t_final"] = d.t_final;
    j["n_timestamps"] = d.n_timestamps;
    j["neural_tau"] = d.neural_tau;
    j["neural_mu"] = d.neural_mu;
    return j;
}

} // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg;
    try {
        cfg.protocol = get_or<std::string>(j, "protocol", "");
        cfg.output_dir = get_or<std::string>(j, "output_dir", "");
        cfg.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);
        cfg.deterministic = get_or(j, "deterministic", true);
        cfg.dataset_dir = get_or<std::string>(j, "dataset_dir", "");
        cfg.checkpoint = get_or<std::string>(j, "checkpoint", "");
        if (j.contains("dataset")) cfg.dataset = parse_dataset(j.at("dataset"));
        if (j.contains("model")) {
            const json& m = j.at("model");
            cfg.model.latent_dim = get_or(m, "latent_dim", cfg.model.latent_dim);
            if (m.contains("n_heads") && !m.at("n_heads").is_null()) {
                cfg.model.n_heads = m.at("n_heads").get<int>();
                cfg.n_heads_auto = false;
            }
            cfg.model.encoder = encoder_from_string(get_or<std::string>(m, "encoder", "FFW"));
            cfg.model.ode_type =
                ode_type_from_string(get_or<std::string>(m, "ode_type", "StaticEdge"));
            cfg.model.t_obs = get_or(m, "t_obs", cfg.model.t_obs);
            cfg.model.feature_dim = get_or(m, "feature_dim", cfg.model.feature_dim);
            cfg.model.activation =
                activation_from_string(get_or<std::string>(m, "activation", "gelu"));
            cfg.model.f_hat_tanh = get_or(m, "f_hat_tanh", cfg.model.f_hat_tanh);
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            cfg.train.lr0 = get_or(t, "lr0", cfg.train.lr0);
            cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
            cfg.train.beta1 = get_or(t, "beta1", cfg.train.beta1);
            cfg.train.beta2 = get_or(t, "beta2", cfg.train.beta2);
            cfg.train.eps = get_or(t, "eps", cfg.train.eps);
            cfg.train.weight_decay = get_or(t, "weight_decay", cfg.train.weight_decay);
            cfg.train.grad_clip = get_or(t, "grad_clip", cfg.train.grad_clip);
            cfg.train.lr_min = get_or(t, "lr_min", cfg.train.lr_min);
            if (t.contains("seed") && !t.at("seed").is_null()) {
                cfg.train.seed = t.at("seed").get<std::uint64_t>();
                cfg.train_seed_explicit = true;
            }
        }
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            cfg.export_grids = get_or(e, "export_grids", cfg.export_grids);
            cfg.grid_fractions = get_or(e, "grid_fractions", cfg.grid_fractions);
        }
        if (j.contains("ood")) {
            const json& o = j.at("ood");
            cfg.ood.n_per_scenario = get_or(o, "n_per_scenario", cfg.ood.n_per_scenario);
            cfg.ood.scenarios = get_or(o, "scenarios", cfg.ood.scenarios);
            cfg.ood.er_p = get_or(o, "er_p", cfg.ood.er_p);
            cfg.ood.sf_m = get_or(o, "sf_m", cfg.ood.sf_m);
            cfg.ood.cn_p_out = get_or(o, "cn_p_out", cfg.ood.cn_p_out);
            if (o.contains("weight_range")) {
                cfg.ood.weight_lo = o.at("weight_range").at(0).get<double>();
                cfg.ood.weight_hi = o.at("weight_range").at(1).get<double>();
            }
            cfg.ood.density_grid = get_or(o, "density_grid", cfg.ood.density_grid);
        }
        if (j.contains("scalability")) {
            const json& s = j.at("scalability");
            cfg.scalability.n_nodes = get_or(s, "n_nodes", cfg.scalability.n_nodes);
            cfg.scalability.n_graphs = get_or(s, "n_graphs", cfg.scalability.n_graphs);
            cfg.scalability.pred_lengths = get_or(s, "pred_lengths", cfg.scalability.pred_lengths);
            cfg.scalability.max_nodes = get_or(s, "max_nodes", cfg.scalability.max_nodes);
        }
        if (j.contains("sweep")) {
            const json& s = j.at("sweep");
            cfg.sweep.latent_dims = get_or(s, "latent_dims", cfg.sweep.latent_dims);
            cfg.sweep.t_obs_values = get_or(s, "t_obs_values", cfg.sweep.t_obs_values);
            cfg.sweep.epochs = get_or(s, "epochs", cfg.sweep.epochs);
        }
        if (j.contains("noise")) {
            cfg.noise_sigmas = get_or(j.at("noise"), "sigmas", cfg.noise_sigmas);
        }
        if (j.contains("transductive")) {
            const json& t = j.at("transductive");
            cfg.transductive.csv = get_or<std::string>(t, "csv", "");
            cfg.transductive.split_index = get_or(t, "split_index", 0);
            cfg.transductive.t_obs = get_or(t, "t_obs", 21);
            cfg.transductive.horizons = get_or(t, "horizons", cfg.transductive.horizons);
        }
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    return cfg;
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
    json j;
    j["protocol"] = cfg.protocol;
    j["output_dir"] = cfg.output_dir.string();
    j["master_seed"] = cfg.master_seed;
    j["deterministic"] = cfg.deterministic;
    j["dataset_dir"] = cfg.dataset_dir.string();
    j["checkpoint"] = cfg.checkpoint.string();
    j["dataset"] = dataset_json(cfg.dataset);
    json m;
    m["latent_dim"] = cfg.model.latent_dim;
    m["n_heads"] = cfg.model.n_heads;
    m["encoder"] = to_string(cfg.model.encoder);
    m["ode_type"] = to_string(cfg.model.ode_type);
    m["t_obs"] = cfg.model.t_obs;
    m["feature_dim"] = cfg.model.feature_dim;
    m["activation"] = to_string(cfg.model.activation);
    m["f_hat_tanh"] = cfg.model.f_hat_tanh;
    j["model"] = m;
    json t;
    t["lr0"] = cfg.train.lr0;
    t["epochs"] = cfg.train.epochs;
    t["beta1"] = cfg.train.beta1;
    t["beta2"] = cfg.train.beta2;
    t["eps"] = cfg.train.eps;
    t["weight_decay"] = cfg.train.weight_decay;
    t["grad_clip"] = cfg.train.grad_clip;
    t["lr_min"] = cfg.train.lr_min;
    t["seed"] = cfg.train.seed;
    t["deterministic"] = cfg.train.deterministic;
    j["train"] = t;
    json e;
    e["export_grids"] = cfg.export_grids;
    e["grid_fractions"] = cfg.grid_fractions;
    j["eval"] = e;
    json o;
    o["n_per_scenario"] = cfg.ood.n_per_scenario;
    o["scenarios"] = cfg.ood.scenarios;
    o["er_p"] = cfg.ood.er_p;
    o["sf_m"] = cfg.ood.sf_m;
    o["cn_p_out"] = cfg.ood.cn_p_out;
    o["weight_range"] = {cfg.ood.weight_lo, cfg.ood.weight_hi};
    o["density_grid"] = cfg.ood.density_grid;
    j["ood"] = o;
    json s;
    s["n_nodes"] = cfg.scalability.n_nodes;
    s["n_graphs"] = cfg.scalability.n_graphs;
    s["pred_lengths"] = cfg.scalability.pred_lengths;
    s["max_nodes"] = cfg.scalability.max_nodes;
    j["scalability"] = s;
    json sw;
    sw["latent_dims"] = cfg.sweep.latent_dims;
    sw["t_obs_values"] = cfg.sweep.t_obs_values;
    sw["epochs"] = cfg.sweep.epochs;
    j["sweep"] = sw;
    j["noise"]["sigmas"] = cfg.noise_sigmas;
    json tr;
    tr["csv"] = cfg.transductive.csv.string();
    tr["split_index"] = cfg.transductive.split_index;
    tr["t_obs"] = cfg.transductive.t_obs;
    tr["horizons"] = cfg.transductive.horizons;
    j["transductive"] = tr;
    return j.dump(2) + "\n";
}

DirLock::DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    path_ = dir / ".netdyn.lock";
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw IoError("output directory is owned by another invocation (lockfile " +
                      path_.string() + " exists)");
    }
    ::close(fd);
}

DirLock::~DirLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

namespace {

// Materializes derived defaults; every command starts here.
ExperimentConfig resolve(const ExperimentConfig& raw) {
    ExperimentConfig cfg = raw;
    if (!cfg.train_seed_explicit) cfg.train.seed = mix_seed(cfg.master_seed, 11);
    cfg.train.deterministic = cfg.deterministic;
    if (cfg.n_heads_auto) {
        cfg.model.n_heads =
            resolve_n_heads(cfg.dataset.dynamics, cfg.dataset.topology, cfg.dataset.mixed);
    }
    if (cfg.dataset.t_final <= 0.0) cfg.dataset.t_final = default_t_final(cfg.dataset.dynamics);
    return cfg;
}

void check_protocol(const ExperimentConfig& cfg, std::initializer_list<const char*> allowed) {
    if (cfg.protocol.empty()) return;
    for (const char* a : allowed) {
        if (cfg.protocol == a) return;
    }
    throw ConfigError("protocol '" + cfg.protocol + "' does not match this command");
}

std::filesystem::path require_out(const ExperimentConfig& cfg) {
    if (cfg.output_dir.empty()) throw ConfigError("output_dir is required");
    return cfg.output_dir;
}

LoadedDataset require_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_dir.empty()) throw ConfigError("dataset_dir is required for this command");
    if (!std::filesystem::exists(cfg.dataset_dir / "manifest.json")) {
        throw ConfigError("dataset not found at " + cfg.dataset_dir.string());
    }
    return load_dataset(cfg.dataset_dir);
}

ModelParams require_checkpoint(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("checkpoint is required for this command");
    return load_checkpoint(cfg.checkpoint);
}

json aggregate_json(const EvalReport& rep) {
    json a;
    a["mape_mean"] = rep.mape_mean;
    a["mape_std"] = rep.mape_std;
    a["mae_mean"] = rep.mae_mean;
    a["mae_std"] = rep.mae_std;
    a["rmse_mean"] = rep.rmse_mean;
    a["rmse_std"] = rep.rmse_std;
    a["n_trajectories"] = rep.per_trajectory.size();
    return a;
}

json report_json(const EvalReport& rep, const std::vector<double>& pred_times) {
    json j;
    j["per_trajectory"] = json::array();
    for (const TrajectoryEval& te : rep.per_trajectory) {
        json row;
        row["id"] = te.id;
        row["mape"] = te.metrics.mape;
        row["mae"] = te.metrics.mae;
        row["rmse"] = te.metrics.rmse;
        j["per_trajectory"].push_back(row);
    }
    j["aggregate"] = aggregate_json(rep);
    j["per_timestamp"] = json::array();
    for (int t = 0; t < rep.t_pred; ++t) {
        json row;
        row["t"] = t < static_cast<int>(pred_times.size()) ? pred_times[t] : t;
        row["mape"] = rep.mape_t[t];
        row["mae"] = rep.mae_t[t];
        row["rmse"] = rep.rmse_t[t];
        j["per_timestamp"].push_back(row);
    }
    return j;
}

std::vector<double> prediction_times(const TrajectorySet& traj, int t_obs) {
    return std::vector<double>(traj.times.begin() + t_obs, traj.times.end());
}

void write_curves_csv(const std::filesystem::path& path, const EvalReport& rep,
                      const std::vector<double>& pred_times) {
    std::ostringstream out;
    out << "timestamp,mape,mae,rmse\n";
    for (int t = 0; t < rep.t_pred; ++t) {
        const double ts = t < static_cast<int>(pred_times.size()) ? pred_times[t] : t;
        out << format_double(ts) << "," << format_double(rep.mape_t[t]) << ","
            << format_double(rep.mae_t[t]) << "," << format_double(rep.rmse_t[t]) << "\n";
    }
    write_text_file(path, out.str());
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,lr,train_loss,val_loss\n";
    for (const EpochStats& s : history) {
        out << s.epoch << "," << format_double(s.lr) << "," << format_double(s.train_loss) << ","
            << format_double(s.val_loss) << "\n";
    }
    write_text_file(path, out.str());
}

// Fresh evaluation instances generated in memory (OOD sets, scalability).
std::vector<TrajectorySet> gen_eval_set(const DatasetSpec& spec, std::uint64_t master_seed,
                                        int count) {
    std::vector<TrajectorySet> out(count);
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t k) {
        Topology family = spec.topology;
        if (spec.mixed) {
            const Topology block[3] = {Topology::ER, Topology::SF, Topology::Community};
            family = block[k % 3];
        }
        out[k] = make_instance(spec, family, master_seed, static_cast<int>(k)).traj;
    });
    return out;
}

void maybe_export_grids(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        const EvalReport& rep, const std::vector<TrajectorySet>& test_set) {
    if (!cfg.export_grids || rep.per_trajectory.empty() || test_set.empty()) return;
    const TrajectorySet& traj = test_set[0];
    const int t_obs = traj.n_steps - rep.t_pred;
    std::vector<double> truth(static_cast<std::size_t>(rep.t_pred) * traj.n_nodes *
                              traj.n_features);
    std::size_t k = 0;
    for (int t = 0; t < rep.t_pred; ++t) {
        for (int i = 0; i < traj.n_nodes; ++i) {
            for (int f = 0; f < traj.n_features; ++f) truth[k++] = traj.state(i, t_obs + t, f);
        }
    }
    grid_export(out_dir / "grids", rep.per_trajectory[0].pred, truth, rep.t_pred, traj.n_nodes,
                traj.n_features, prediction_times(traj, t_obs), cfg.grid_fractions);
}

} // namespace

void cmd_gen_data(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"inductive", "mixed"});
    if (cfg.protocol == "mixed") cfg.dataset.mixed = true;
    const std::filesystem::path dir =
        cfg.dataset_dir.empty() ? require_out(cfg) : cfg.dataset_dir;
    DirLock lock(dir);
    generate_dataset(cfg.dataset, cfg.master_seed, dir);
}

void cmd_train(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"inductive", "mixed"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    LoadedDataset ds = require_dataset(cfg);
    cfg.model.feature_dim = ds.manifest.feature_dim;

    TrainResult tr = train(ds.train, ds.val, cfg.model, cfg.train);
    write_history_csv(out / "history.csv", tr.history);
    save_checkpoint(out / "checkpoint", tr.params);

    EvalReport rep = evaluate(tr.params, ds.test);
    EvalReport persistence = evaluate_persistence(ds.test, cfg.model.t_obs);
    json j;
    j["config"] = json::parse(experiment_config_json(cfg));
    const std::vector<double> times =
        ds.test.empty() ? std::vector<double>{} : prediction_times(ds.test[0], cfg.model.t_obs);
    j.update(report_json(rep, times));
    j["persistence"] = aggregate_json(persistence);
    write_text_file(out / "report.json", j.dump(2) + "\n");
    if (rep.t_pred > 0) write_curves_csv(out / "curves.csv", rep, times);
    maybe_export_grids(cfg, out, rep, ds.test);
}

void cmd_eval(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"inductive", "mixed"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    LoadedDataset ds = require_dataset(cfg);
    ModelParams params = require_checkpoint(cfg);
    if (params.cfg.feature_dim != ds.manifest.feature_dim) {
        throw ConfigError("checkpoint feature_dim does not match dataset");
    }
    EvalReport rep = evaluate(params, ds.test);
    json j;
    j["config"] = json::parse(experiment_config_json(cfg));
    const std::vector<double> times =
        ds.test.empty() ? std::vector<double>{} : prediction_times(ds.test[0], params.cfg.t_obs);
    j.update(report_json(rep, times));
    write_text_file(out / "report.json", j.dump(2) + "\n");
    if (rep.t_pred > 0) write_curves_csv(out / "curves.csv", rep, times);
    maybe_export_grids(cfg, out, rep, ds.test);
}

void cmd_ood(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"ood_topo", "ood_weights", "ood_ic"});
    if (cfg.protocol == "ood_topo") cfg.ood.scenarios = {"topo"};
    if (cfg.protocol == "ood_weights") cfg.ood.scenarios = {"weights"};
    if (cfg.protocol == "ood_ic") cfg.ood.scenarios = {"ic"};
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    ModelParams params = require_checkpoint(cfg);
    LoadedDataset ds = require_dataset(cfg);

    json j;
    j["config"] = json::parse(experiment_config_json(cfg));
    j["id"] = aggregate_json(evaluate(params, ds.test));

    json scenarios;
    int scenario_idx = 0;
    for (const std::string& name : cfg.ood.scenarios) {
        DatasetSpec spec = cfg.dataset;
        if (name == "topo") {
            spec.er_p = cfg.ood.er_p;
            spec.sf_m = cfg.ood.sf_m;
            spec.cn_p_out = cfg.ood.cn_p_out;
        } else if (name == "weights") {
            spec.weight_lo = cfg.ood.weight_lo;
            spec.weight_hi = cfg.ood.weight_hi;
        } else if (name == "ic") {
            spec.ic_mode = IcMode::OOD;
        } else {
            throw ConfigError("unknown OOD scenario: " + name);
        }
        const std::uint64_t seed = mix_seed(cfg.master_seed, 2000 + 100 * scenario_idx++);
        std::vector<TrajectorySet> test = gen_eval_set(spec, seed, cfg.ood.n_per_scenario);
        scenarios[name] = aggregate_json(evaluate(params, test));
    }
    j["scenarios"] = scenarios;

    json density = json::array();
    for (std::size_t k = 0; k < cfg.ood.density_grid.size(); ++k) {
        const double target = cfg.ood.density_grid[k];
        DatasetSpec spec = cfg.dataset;
        spec.mixed = false;
        if (spec.topology == Topology::SF) {
            spec.sf_m = std::max(1, std::min(spec.n_nodes - 1,
                                             static_cast<int>(std::lround(target * spec.n_nodes / 2))));
        } else {
            // Mean degree <k> = (N-1) p, so p = target * N / (N-1).
            spec.topology = Topology::ER;
            spec.er_p = std::min(1.0, target * spec.n_nodes / (spec.n_nodes - 1));
        }
        const std::uint64_t seed = mix_seed(cfg.master_seed, 5000 + k);
        std::vector<TrajectorySet> test = gen_eval_set(spec, seed, cfg.ood.n_per_scenario);
        json row = aggregate_json(evaluate(params, test));
        row["k_over_n"] = target;
        density.push_back(row);
    }
    j["density"] = density;
    write_text_file(out / "ood_report.json", j.dump(2) + "\n");
}

void cmd_scalability(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"scalability"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    ModelParams params = require_checkpoint(cfg);
    if (cfg.scalability.n_nodes > cfg.scalability.max_nodes) {
        throw ConfigError("scalability: n_nodes " + std::to_string(cfg.scalability.n_nodes) +
                          " exceeds the memory-guard cap " +
                          std::to_string(cfg.scalability.max_nodes) +
                          " (raise scalability.max_nodes to allow this)");
    }
    DatasetSpec spec = cfg.dataset;
    const int small_n = spec.n_nodes;
    spec.n_nodes = cfg.scalability.n_nodes;
    // Keep the mean degree of the training distribution for ER graphs.
    if (!spec.mixed && spec.topology == Topology::ER && spec.n_nodes > 1) {
        spec.er_p = std::min(1.0, spec.er_p * (small_n - 1) / (spec.n_nodes - 1));
    }
    std::vector<TrajectorySet> test =
        gen_eval_set(spec, mix_seed(cfg.master_seed, 4000), cfg.scalability.n_graphs);
    EvalReport full = evaluate(params, test);

    json j;
    j["config"] = json::parse(experiment_config_json(cfg));
    j["parameter_count"] = params.parameter_count();
    j["n_nodes"] = spec.n_nodes;
    json rows = json::array();
    for (int len : cfg.scalability.pred_lengths) {
        if (len < 1 || len > full.t_pred) {
            throw ConfigError("scalability: pred length " + std::to_string(len) +
                              " outside the prediction window");
        }
        EvalReport sliced;
        for (const TrajectoryEval& te : full.per_trajectory) {
            const TrajectorySet& traj = test[&te - full.per_trajectory.data()];
            const std::size_t per_t = static_cast<std::size_t>(traj.n_nodes) * traj.n_features;
            std::vector<double> pred(te.pred.begin(), te.pred.begin() + len * per_t);
            std::vector<double> truth(static_cast<std::size_t>(len) * per_t);
            std::size_t k = 0;
            const int t_obs = traj.n_steps - full.t_pred;
            for (int t = 0; t < len; ++t) {
                for (int i = 0; i < traj.n_nodes; ++i) {
                    for (int f = 0; f < traj.n_features; ++f) truth[k++] = traj.state(i, t_obs + t, f);
                }
            }
            TrajectoryEval se;
            se.id = te.id;
            se.metrics = compute_metrics(pred, truth, len, traj.n_nodes, traj.n_features);
            sliced.per_trajectory.push_back(std::move(se));
        }
        double mape_m = 0, mae_m = 0, rmse_m = 0;
        int n_def = 0;
        for (const TrajectoryEval& te : sliced.per_trajectory) {
            mae_m += te.metrics.mae;
            rmse_m += te.metrics.rmse;
            if (std::isfinite(te.metrics.mape)) {
                mape_m += te.metrics.mape;
                ++n_def;
            }
        }
        const double cnt = static_cast<double>(sliced.per_trajectory.size());
        json row;
        row["pred_length"] = len;
        row["mape_mean"] = n_def > 0 ? mape_m / n_def : std::numeric_limits<double>::quiet_NaN();
        row["mae_mean"] = mae_m / cnt;
        row["rmse_mean"] = rmse_m / cnt;
        rows.push_back(row);
    }
    j["rows"] = rows;
    j["full"] = aggregate_json(full);
    write_text_file(out / "report.json", j.dump(2) + "\n");
}

void cmd_sweep(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"sweep"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    LoadedDataset ds = require_dataset(cfg);
    cfg.model.feature_dim = ds.manifest.feature_dim;
    TrainConfig tcfg = cfg.train;
    if (cfg.sweep.epochs > 0) tcfg.epochs = cfg.sweep.epochs;

    // Condition lengths are capped below 0.2 of the grid.
    const int t_obs_cap = static_cast<int>(0.2 * ds.manifest.n_timestamps);
    std::set<int> dims(cfg.sweep.latent_dims.begin(), cfg.sweep.latent_dims.end());
    std::set<int> obs(cfg.sweep.t_obs_values.begin(), cfg.sweep.t_obs_values.end());
    for (int v : obs) {
        if (v < 1 || v >= t_obs_cap) {
            throw ConfigError("sweep: condition length " + std::to_string(v) +
                              " violates the cap [1, " + std::to_string(t_obs_cap) + ")");
        }
    }
    if (dims.empty() && obs.empty()) throw ConfigError("sweep: empty grid");

    std::ostringstream csv;
    csv << "param,value,mape_mean,mape_std,mae_mean,mae_std,rmse_mean,rmse_std\n";
    auto run_point = [&](const char* name, int value, const ModelConfig& mc) {
        TrainResult tr = train(ds.train, ds.val, mc, tcfg);
        EvalReport rep = evaluate(tr.params, ds.test);
        csv << name << "," << value << "," << format_double(rep.mape_mean) << ","
            << format_double(rep.mape_std) << "," << format_double(rep.mae_mean) << ","
            << format_double(rep.mae_std) << "," << format_double(rep.rmse_mean) << ","
            << format_double(rep.rmse_std) << "\n";
    };
    for (int d : dims) {
        if (d < 1) throw ConfigError("sweep: latent_dim must be positive");
        ModelConfig mc = cfg.model;
        mc.latent_dim = d;
        run_point("latent_dim", d, mc);
    }
    for (int v : obs) {
        ModelConfig mc = cfg.model;
        mc.t_obs = v;
        run_point("t_obs", v, mc);
    }
    write_text_file(out / "sweep.csv", csv.str());
    write_text_file(out / "config.json", experiment_config_json(cfg));
}

void cmd_noise(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"noise"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    ModelParams params = require_checkpoint(cfg);
    LoadedDataset ds = require_dataset(cfg);
    std::ostringstream csv;
    csv << "sigma,mape_mean,mape_std,mae_mean,mae_std,rmse_mean,rmse_std\n";
    for (std::size_t k = 0; k < cfg.noise_sigmas.size(); ++k) {
        const double sigma = cfg.noise_sigmas[k];
        std::vector<TrajectorySet> noised(ds.test.size());
        for (std::size_t i = 0; i < ds.test.size(); ++i) {
            noised[i] = add_observation_noise(ds.test[i], params.cfg.t_obs, sigma,
                                              mix_seed(cfg.master_seed, 3000 + 100 * k + i));
        }
        EvalReport rep = evaluate(params, noised);
        csv << format_double(sigma) << "," << format_double(rep.mape_mean) << ","
            << format_double(rep.mape_std) << "," << format_double(rep.mae_mean) << ","
            << format_double(rep.mae_std) << "," << format_double(rep.rmse_mean) << ","
            << format_double(rep.rmse_std) << "\n";
    }
    write_text_file(out / "noise.csv", csv.str());
    write_text_file(out / "config.json", experiment_config_json(cfg));
}

void cmd_transductive(const ExperimentConfig& raw) {
    ExperimentConfig cfg = resolve(raw);
    check_protocol(cfg, {"transductive"});
    const std::filesystem::path out = require_out(cfg);
    DirLock lock(out);
    if (cfg.transductive.csv.empty()) throw ConfigError("transductive: csv path is required");
    TrajectorySet panel = load_panel_csv(cfg.transductive.csv);

    json j;
    j["config"] = json::parse(experiment_config_json(cfg));
    json horizons = json::array();
    for (int h : cfg.transductive.horizons) {
        ModelConfig mc = cfg.model;
        mc.t_obs = cfg.transductive.t_obs;
        mc.feature_dim = panel.n_features;
        TransductiveResult res =
            train_transductive(panel, mc, cfg.train, cfg.transductive.split_index, h);
        json block;
        block["t_pred"] = h;
        block["n_train_windows"] = res.n_train_windows;
        block["n_test_windows"] = res.n_test_windows;
        block["aggregate"] = aggregate_json(res.report);
        horizons.push_back(block);
        save_checkpoint(out / ("checkpoint_h" + std::to_string(h)), res.params);
        write_history_csv(out / ("history_h" + std::to_string(h) + ".csv"), res.history);
    }
    j["horizons"] = horizons;
    write_text_file(out / "transductive_report.json", j.dump(2) + "\n");
}

TrajectorySet load_panel_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty panel file: " + path.string());
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 3 || header[0] != "node_id" || header[1] != "timestamp") {
        throw IoError("panel header must be node_id,timestamp,f_0,...: " + path.string());
    }
    const int n_features = static_cast<int>(header.size() - 2);

    struct Row {
        long node;
        double time;
        std::vector<double> feats;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        Row r;
        int col = 0;
        while (std::getline(ls, cell, ',')) {
            if (col == 0) {
                r.node = std::strtol(cell.c_str(), nullptr, 10);
            } else if (col == 1) {
                r.time = std::strtod(cell.c_str(), nullptr);
            } else {
                r.feats.push_back(std::strtod(cell.c_str(), nullptr));
            }
            ++col;
        }
        if (col != static_cast<int>(header.size())) {
            throw IoError("ragged row in panel file " + path.string());
        }
        rows.push_back(std::move(r));
    }
    std::vector<long> nodes;
    std::vector<double> times;
    for (const Row& r : rows) {
        nodes.push_back(r.node);
        times.push_back(r.time);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    const int n = static_cast<int>(nodes.size());
    const int T = static_cast<int>(times.size());
    TrajectorySet traj;
    traj.n_nodes = n;
    traj.n_steps = T;
    traj.n_features = n_features;
    traj.times = times;
    traj.states.assign(static_cast<std::size_t>(n) * T * n_features,
                       std::numeric_limits<double>::quiet_NaN());
    auto node_index = [&](long id) {
        return static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), id) - nodes.begin());
    };
    auto time_index = [&](double t) {
        return static_cast<int>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    };
    for (const Row& r : rows) {
        const int i = node_index(r.node);
        const int t = time_index(r.time);
        for (int f = 0; f < n_features; ++f) traj.state(i, t, f) = r.feats[f];
    }
    // Dense panel required: report the first gaps.
    std::vector<std::string> gaps;
    for (int i = 0; i < n && gaps.size() < 10; ++i) {
        for (int t = 0; t < T && gaps.size() < 10; ++t) {
            if (std::isnan(traj.state(i, t, 0))) {
                gaps.push_back("(node " + std::to_string(nodes[i]) + ", t " +
                               format_double(times[t]) + ")");
            }
        }
    }
    if (!gaps.empty()) {
        std::string msg = "panel has missing cells:";
        for (const std::string& g : gaps) msg += " " + g;
        throw IoError(msg);
    }
    return traj;
}

void save_panel_csv(const std::filesystem::path& path, const TrajectorySet& traj) {
    std::ostringstream out;
    out << "node_id,timestamp";
    for (int f = 0; f < traj.n_features; ++f) out << ",f_" << f;
    out << "\n";
    for (int i = 0; i < traj.n_nodes; ++i) {
        for (int t = 0; t < traj.n_steps; ++t) {
            out << i << "," << format_double(traj.times[t]);
            for (int f = 0; f < traj.n_features; ++f) out << "," << format_double(traj.state(i, t, f));
            out << "\n";
        }
    }
    write_text_file(path, out.str());
}

} // namespace netdyn
