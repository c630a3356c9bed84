#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "netdyn/dataset.hpp"
#include "netdyn/experiment.hpp"
#include "netdyn/io_util.hpp"
#include "netdyn/model.hpp"

using namespace netdyn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string netdyn_bin() {
    const char* bin = std::getenv("NETDYN_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "NETDYN_BIN must point at the CLI binary");
    return bin;
}

int run_cli(const std::string& args) {
    const std::string cmd = netdyn_bin() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "netdyn_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// Tiny desk config: fast enough for the unit suite.
json tiny_config(const fs::path& root) {
    json cfg;
    cfg["output_dir"] = (root / "out").string();
    cfg["master_seed"] = 7;
    cfg["dataset_dir"] = (root / "data").string();
    cfg["dataset"] = {{"dynamics", "Regulatory"}, {"topology", "ER"},    {"n_nodes", 8},
                      {"n_train", 2},             {"n_val", 1},          {"n_test", 2},
                      {"er_p", 0.4},              {"n_timestamps", 40},  {"ic_mode", "ID"},
                      {"weight_range", {0.5, 1.5}}};
    cfg["model"] = {{"latent_dim", 4}, {"encoder", "FFW"}, {"ode_type", "StaticEdge"},
                    {"t_obs", 6},      {"n_heads", 1},     {"activation", "gelu"}};
    cfg["train"] = {{"epochs", 2}, {"lr0", 0.01}, {"seed", 5}};
    return cfg;
}

// Stable content hash over every regular file in a tree.
std::map<std::string, std::string> tree_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        out[fs::relative(entry.path(), dir).string()] = read_text_file(entry.path());
    }
    return out;
}

} // namespace

TEST_CASE("gen-data: manifest, splits, determinism") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);

    LoadedDataset ds = load_dataset(root / "data");
    CHECK(ds.manifest.count == 5);
    CHECK(ds.manifest.train_ids.size() == 2);
    CHECK(ds.manifest.val_ids.size() == 1);
    CHECK(ds.manifest.test_ids.size() == 2);
    CHECK(ds.train.size() == 2);
    CHECK(ds.train[0].n_steps == 40);
    for (int id = 0; id < 5; ++id) {
        CHECK(fs::exists(root / "data" / ("graph_" + instance_name(id) + ".json")));
        CHECK(fs::exists(root / "data" / ("trajectory_" + instance_name(id) + ".csv")));
    }

    // Bit-identical regeneration with the same master seed.
    const auto first = tree_contents(root / "data");
    fs::remove_all(root / "data");
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    CHECK(tree_contents(root / "data") == first);
    fs::remove_all(root);
}

TEST_CASE("gen-data: mixed topology concatenates per-family blocks") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    cfg["dataset"]["topology"] = "Mixed";
    cfg["dataset"]["sf_m"] = 2;
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    DatasetManifest m = load_manifest(root / "data");
    CHECK(m.topology == "Mixed");
    CHECK(m.count == 15);
    CHECK(m.train_ids.size() == 6); // per-topology sums
    CHECK(m.val_ids.size() == 3);
    CHECK(m.test_ids.size() == 6);
    // Per-id graph files carry their own family.
    TopologySpec s0, s5, s10;
    load_dataset_graph(root / "data", 0, &s0);
    load_dataset_graph(root / "data", 5, &s5);
    load_dataset_graph(root / "data", 10, &s10);
    CHECK(s0.family == Topology::ER);
    CHECK(s5.family == Topology::SF);
    CHECK(s10.family == Topology::Community);
    fs::remove_all(root);
}

TEST_CASE("train then eval, rerun is bit-identical") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    REQUIRE(run_cli("train --config " + (root / "cfg.json").string()) == 0);

    CHECK(fs::exists(root / "out" / "history.csv"));
    CHECK(fs::exists(root / "out" / "checkpoint" / "params.bin"));
    CHECK(fs::exists(root / "out" / "curves.csv"));
    {
        const std::string curves = read_text_file(root / "out" / "curves.csv");
        // header + one row per prediction timestamp (40 - 6 observed)
        CHECK(std::count(curves.begin(), curves.end(), '\n') == 35);
        CHECK(curves.rfind("timestamp,mape,mae,rmse\n", 0) == 0);
    }
    const json report = json::parse(read_text_file(root / "out" / "report.json"));
    CHECK(report.at("per_trajectory").size() == 2);
    CHECK(report.contains("aggregate"));
    CHECK(report.contains("per_timestamp"));
    CHECK(report.contains("persistence"));
    CHECK(report.at("config").at("train").at("epochs") == 2);
    // history.csv has one row per epoch plus the header.
    const std::string history = read_text_file(root / "out" / "history.csv");
    CHECK(std::count(history.begin(), history.end(), '\n') == 3);

    const auto first = tree_contents(root / "out");
    fs::remove_all(root / "out");
    REQUIRE(run_cli("train --config " + (root / "cfg.json").string()) == 0);
    CHECK(tree_contents(root / "out") == first);

    // Eval against the produced checkpoint.
    json ecfg = cfg;
    ecfg["checkpoint"] = (root / "out" / "checkpoint").string();
    ecfg["output_dir"] = (root / "eval_out").string();
    write_json(root / "ecfg.json", ecfg);
    REQUIRE(run_cli("eval --config " + (root / "ecfg.json").string()) == 0);
    const json erep = json::parse(read_text_file(root / "eval_out" / "report.json"));
    CHECK(erep.at("per_trajectory").size() == 2);
    fs::remove_all(root);
}

TEST_CASE("ood command emits ID and scenario blocks even for an untrained model") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);

    // Untrained (freshly initialized) checkpoint.
    ModelConfig mc;
    mc.latent_dim = 4;
    mc.n_heads = 1;
    mc.t_obs = 6;
    mc.ode_type = OdeType::StaticEdge;
    save_checkpoint(root / "ckpt", init_params(mc, 3));

    json ocfg = cfg;
    ocfg["checkpoint"] = (root / "ckpt").string();
    ocfg["output_dir"] = (root / "ood_out").string();
    ocfg["ood"] = {{"n_per_scenario", 2}, {"density_grid", {0.3, 0.6}}};
    write_json(root / "ocfg.json", ocfg);
    REQUIRE(run_cli("ood --config " + (root / "ocfg.json").string()) == 0);
    const json rep = json::parse(read_text_file(root / "ood_out" / "ood_report.json"));
    CHECK(rep.contains("id"));
    CHECK(rep.at("scenarios").contains("topo"));
    CHECK(rep.at("scenarios").contains("weights"));
    CHECK(rep.at("scenarios").contains("ic"));
    CHECK(rep.at("density").size() == 2);
    fs::remove_all(root);
}

TEST_CASE("noise command: sigma=0 row reproduces the clean evaluation") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    REQUIRE(run_cli("train --config " + (root / "cfg.json").string()) == 0);

    json ncfg = cfg;
    ncfg["checkpoint"] = (root / "out" / "checkpoint").string();
    ncfg["output_dir"] = (root / "noise_out").string();
    ncfg["noise"] = {{"sigmas", {0.0, 0.05}}};
    write_json(root / "ncfg.json", ncfg);
    REQUIRE(run_cli("noise --config " + (root / "ncfg.json").string()) == 0);

    const std::string noise_csv = read_text_file(root / "noise_out" / "noise.csv");
    std::istringstream in(noise_csv);
    std::string header, row0;
    std::getline(in, header);
    std::getline(in, row0);
    CHECK(header == "sigma,mape_mean,mape_std,mae_mean,mae_std,rmse_mean,rmse_std");

    const json report = json::parse(read_text_file(root / "out" / "report.json"));
    std::istringstream cells(row0);
    std::string cell;
    std::getline(cells, cell, ',');
    CHECK(cell == "0");
    std::getline(cells, cell, ',');
    CHECK(std::strtod(cell.c_str(), nullptr) ==
          report.at("aggregate").at("mape_mean").get<double>());
    std::getline(cells, cell, ',');
    std::getline(cells, cell, ',');
    CHECK(std::strtod(cell.c_str(), nullptr) ==
          report.at("aggregate").at("mae_mean").get<double>());
    fs::remove_all(root);
}

TEST_CASE("sweep command: grid rows, dedup, cap validation") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);

    json scfg = cfg;
    scfg["output_dir"] = (root / "sweep_out").string();
    scfg["sweep"] = {{"latent_dims", {2, 4, 2}}, {"epochs", 1}};
    write_json(root / "scfg.json", scfg);
    REQUIRE(run_cli("sweep --config " + (root / "scfg.json").string()) == 0);
    const std::string csv = read_text_file(root / "sweep_out" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3); // header + deduped {2,4}

    // Condition length cap: 0.2 * 40 = 8 grid points.
    json bad = cfg;
    bad["output_dir"] = (root / "sweep_bad").string();
    bad["sweep"] = {{"t_obs_values", {12}}, {"epochs", 1}};
    write_json(root / "bcfg.json", bad);
    CHECK(run_cli("sweep --config " + (root / "bcfg.json").string()) == 2);
    fs::remove_all(root);
}

TEST_CASE("scalability command: pred-length rows and the memory guard") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    REQUIRE(run_cli("train --config " + (root / "cfg.json").string()) == 0);

    json scfg = cfg;
    scfg["checkpoint"] = (root / "out" / "checkpoint").string();
    scfg["output_dir"] = (root / "scal_out").string();
    scfg["scalability"] = {{"n_nodes", 20}, {"n_graphs", 2}, {"pred_lengths", {5, 10, 20, 34}}};
    write_json(root / "scfg.json", scfg);
    REQUIRE(run_cli("scalability --config " + (root / "scfg.json").string()) == 0);
    const json rep = json::parse(read_text_file(root / "scal_out" / "report.json"));
    CHECK(rep.at("rows").size() == 4);
    CHECK(rep.at("n_nodes") == 20);

    // Model size is independent of N: the trained checkpoint evaluated at a
    // larger N reports the same parameter count.
    ModelParams params = load_checkpoint(root / "out" / "checkpoint");
    CHECK(rep.at("parameter_count").get<std::size_t>() == params.parameter_count());

    json gcfg = scfg;
    gcfg["output_dir"] = (root / "scal_guard").string();
    gcfg["scalability"]["n_nodes"] = 50;
    gcfg["scalability"]["max_nodes"] = 30;
    write_json(root / "gcfg.json", gcfg);
    CHECK(run_cli("scalability --config " + (root / "gcfg.json").string()) == 2);
    fs::remove_all(root);
}

TEST_CASE("transductive command over a synthetic panel") {
    const fs::path root = scratch_dir();

    DatasetSpec spec;
    spec.dynamics = Dynamics::Regulatory;
    spec.topology = Topology::ER;
    spec.n_nodes = 5;
    spec.er_p = 0.5;
    spec.n_timestamps = 100;
    TrajectorySet series = make_instance(spec, Topology::ER, 3, 0).traj;
    save_panel_csv(root / "panel.csv", series);

    // Round-trip losslessly.
    TrajectorySet loaded = load_panel_csv(root / "panel.csv");
    CHECK(loaded.n_nodes == 5);
    CHECK(loaded.states == series.states);
    CHECK(loaded.times == series.times);

    json cfg;
    cfg["output_dir"] = (root / "trans_out").string();
    cfg["master_seed"] = 5;
    cfg["model"] = {{"latent_dim", 4}, {"encoder", "FFW"}, {"ode_type", "StaticEdge"},
                    {"n_heads", 1}};
    cfg["train"] = {{"epochs", 1}, {"seed", 2}};
    cfg["transductive"] = {{"csv", (root / "panel.csv").string()},
                           {"split_index", 55},
                           {"t_obs", 21},
                           {"horizons", {7, 14, 21}}};
    write_json(root / "tcfg.json", cfg);
    REQUIRE(run_cli("transductive --config " + (root / "tcfg.json").string()) == 0);
    const json rep = json::parse(read_text_file(root / "trans_out" / "transductive_report.json"));
    REQUIRE(rep.at("horizons").size() == 3);
    CHECK(rep.at("horizons")[0].at("t_pred") == 7);
    CHECK(rep.at("horizons")[0].at("n_train_windows") == 55 - (21 + 7) + 1);
    CHECK(rep.at("horizons")[2].at("t_pred") == 21);
    fs::remove_all(root);
}

TEST_CASE("panel ingestion reports missing cells") {
    const fs::path root = scratch_dir();
    std::string csv = "node_id,timestamp,f_0\n0,0,1.5\n0,1,1.6\n1,0,2.5\n"; // (1,1) missing
    write_text_file(root / "gappy.csv", csv);
    CHECK_THROWS_AS(load_panel_csv(root / "gappy.csv"), IoError);
    try {
        load_panel_csv(root / "gappy.csv");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("node 1") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("config errors exit with code 2") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    cfg["dataset"]["er_p"] = 1.5;
    write_json(root / "cfg.json", cfg);
    CHECK(run_cli("gen-data --config " + (root / "cfg.json").string()) == 2);

    // Missing dataset for train.
    json tcfg = tiny_config(root);
    tcfg["dataset_dir"] = (root / "nope").string();
    write_json(root / "tcfg.json", tcfg);
    CHECK(run_cli("train --config " + (root / "tcfg.json").string()) == 2);
    fs::remove_all(root);
}

TEST_CASE("output directory lock is exclusive") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    write_json(root / "cfg.json", cfg);
    fs::create_directories(root / "data");
    write_text_file(root / "data" / ".netdyn.lock", "");
    CHECK(run_cli("gen-data --config " + (root / "cfg.json").string()) == 4);
    fs::remove_all(root);
}

TEST_CASE("--n-seeds repeats a command over derived seeds and aggregates") {
    const fs::path root = scratch_dir();
    json cfg = tiny_config(root);
    cfg["train"]["epochs"] = 1;
    cfg["train"].erase("seed"); // let each run derive its seed from the master
    write_json(root / "cfg.json", cfg);
    REQUIRE(run_cli("gen-data --config " + (root / "cfg.json").string()) == 0);
    REQUIRE(run_cli("train --config " + (root / "cfg.json").string() + " --n-seeds 2") == 0);
    CHECK(fs::exists(root / "out" / "seed_0" / "report.json"));
    CHECK(fs::exists(root / "out" / "seed_1" / "report.json"));
    const json summary = json::parse(read_text_file(root / "out" / "seeds_summary.json"));
    CHECK(summary.at("n_seeds") == 2);
    CHECK(summary.at("aggregate").contains("mape_mean_over_seeds"));
    // Different derived seeds give different model initializations.
    const json r0 = json::parse(read_text_file(root / "out" / "seed_0" / "report.json"));
    const json r1 = json::parse(read_text_file(root / "out" / "seed_1" / "report.json"));
    CHECK(r0.at("aggregate").at("mape_mean") != r1.at("aggregate").at("mape_mean"));
    fs::remove_all(root);
}

TEST_CASE("n_heads resolution follows the dynamics/topology rule") {
    CHECK(resolve_n_heads(Dynamics::SIS, Topology::ER, false) == 1);
    CHECK(resolve_n_heads(Dynamics::SIS, Topology::SF, false) == 1);
    CHECK(resolve_n_heads(Dynamics::SIS, Topology::Community, false) == 3);
    CHECK(resolve_n_heads(Dynamics::SIS, Topology::ER, true) == 3);
    CHECK(resolve_n_heads(Dynamics::Regulatory, Topology::ER, false) == 3);
}
