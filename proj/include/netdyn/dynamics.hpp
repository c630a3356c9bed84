#pragma once

// Ground-truth networked dynamics: parameter and initial-condition sampling
// for the six ODE families, adaptive Dormand-Prince integration onto a
// uniform timestamp grid, and observation noise.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "netdyn/graph.hpp"

namespace netdyn {

enum class Dynamics { SIS, Population, Regulatory, Mutualistic, Neural, LotkaVolterra };

std::string to_string(Dynamics family);
Dynamics dynamics_from_string(const std::string& name);
double default_t_final(Dynamics family);

enum class IcMode { ID, OOD };

struct DynamicsSpec {
    Dynamics family = Dynamics::SIS;
    std::vector<double> delta;    // SIS per-node recovery rates
    std::vector<double> lv_alpha; // Lotka-Volterra growth rates
    std::vector<double> lv_theta; // Lotka-Volterra self-competition
    double neural_tau = 1.0;      // activation slope
    double neural_mu = 3.0;       // activation threshold
    double t_final = 5.0;
    int n_timestamps = 200;
    std::uint64_t seed = 0;
};

struct TrajectorySet {
    int n_nodes = 0;
    int n_steps = 0;    // T
    int n_features = 1; // D
    std::vector<double> states; // [node][time][feature] row-major
    std::vector<double> times;  // uniform grid over [0, t_final]
    std::string graph_id;

    double state(int i, int t, int f = 0) const {
        return states[(static_cast<std::size_t>(i) * n_steps + t) * n_features + f];
    }
    double& state(int i, int t, int f = 0) {
        return states[(static_cast<std::size_t>(i) * n_steps + t) * n_features + f];
    }
};

// CSR neighbor view of an undirected weighted graph.
struct AdjacencyList {
    std::vector<int> offsets; // n+1
    std::vector<int> neighbors;
    std::vector<double> weights;
    static AdjacencyList build(const WeightedGraph& g);
};

// dx/dt = f(x_i) + sum_j A_ij g(x_i, x_j), componentwise.
void rhs(const DynamicsSpec& spec, const AdjacencyList& adj, const std::vector<double>& x,
         std::vector<double>& dxdt);

// delta = rho(diag(1/sqrt(delta0)) A diag(1/sqrt(delta0))) * delta0 / 1.5 with
// delta0 ~ U[0.5,1.5]^N, which pins the basic reproduction number
// rho(diag(delta)^-1 A) at exactly 1.5. Falls back to delta0 (with a warning)
// when the graph has no edges.
std::vector<double> sample_sis_delta(const WeightedGraph& g, std::uint64_t seed);

DynamicsSpec sample_dynamics_params(Dynamics family, const WeightedGraph& g, std::uint64_t seed,
                                    double t_final_override = 0.0, int n_timestamps = 200);

std::vector<double> sample_initial_condition(Dynamics family, int n, IcMode mode, std::uint64_t seed);

struct IntegrateOptions {
    double rtol = 1e-6;
    double atol = 1e-8;
    // Step-size cap as a multiple of the output grid spacing; keeps the cubic
    // Hermite dense output well inside the local error tolerance.
    double max_step_factor = 1.0;
};

TrajectorySet integrate(const DynamicsSpec& spec, const WeightedGraph& g,
                        const std::vector<double>& x0, const IntegrateOptions& opts = {});

// Replaces every entry x in the condition window [0, t_obs) with a draw from
// Normal(x, sigma*|x|). The prediction window is untouched.
TrajectorySet add_observation_noise(const TrajectorySet& traj, int t_obs, double sigma,
                                    std::uint64_t seed);

void save_trajectory_csv(const std::filesystem::path& path, const TrajectorySet& traj);
TrajectorySet load_trajectory_csv(const std::filesystem::path& path);

} // namespace netdyn
