#include "netdyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "netdyn/io_util.hpp"
#include "netdyn/rng.hpp"

namespace netdyn {

std::string to_string(Dynamics family) {
    switch (family) {
    case Dynamics::SIS: return "SIS";
    case Dynamics::Population: return "Population";
    case Dynamics::Regulatory: return "Regulatory";
    case Dynamics::Mutualistic: return "Mutualistic";
    case Dynamics::Neural: return "Neural";
    case Dynamics::LotkaVolterra: return "LotkaVolterra";
    }
    throw ConfigError("unknown dynamics enum value");
}

Dynamics dynamics_from_string(const std::string& name) {
    if (name == "SIS") return Dynamics::SIS;
    if (name == "Population") return Dynamics::Population;
    if (name == "Regulatory") return Dynamics::Regulatory;
    if (name == "Mutualistic") return Dynamics::Mutualistic;
    if (name == "Neural") return Dynamics::Neural;
    if (name == "LotkaVolterra" || name == "LV") return Dynamics::LotkaVolterra;
    throw ConfigError("unknown dynamics family: " + name);
}

double default_t_final(Dynamics family) {
    return family == Dynamics::Mutualistic ? 2.0 : 5.0;
}

AdjacencyList AdjacencyList::build(const WeightedGraph& g) {
    AdjacencyList adj;
    const int n = g.n_nodes;
    std::vector<int> deg(n, 0);
    for (const Edge& e : g.edges) {
        ++deg[e.i];
        ++deg[e.j];
    }
    adj.offsets.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) adj.offsets[i + 1] = adj.offsets[i] + deg[i];
    adj.neighbors.resize(adj.offsets[n]);
    adj.weights.resize(adj.offsets[n]);
    std::vector<int> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
    for (const Edge& e : g.edges) {
        adj.neighbors[cursor[e.i]] = e.j;
        adj.weights[cursor[e.i]++] = e.w;
        adj.neighbors[cursor[e.j]] = e.i;
        adj.weights[cursor[e.j]++] = e.w;
    }
    return adj;
}

namespace {

// Adaptive steps may transiently overshoot below zero; fractional and
// rational powers are evaluated on max(x, 0) to keep the RHS real-valued.
inline double pos(double x) { return x > 0.0 ? x : 0.0; }

inline double logistic(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

} // namespace

void rhs(const DynamicsSpec& spec, const AdjacencyList& adj, const std::vector<double>& x,
         std::vector<double>& dxdt) {
    const int n = static_cast<int>(x.size());
    dxdt.resize(n);
    switch (spec.family) {
    case Dynamics::SIS:
        for (int i = 0; i < n; ++i) {
            double inflow = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                inflow += adj.weights[k] * x[adj.neighbors[k]];
            }
            dxdt[i] = -spec.delta[i] * x[i] + (1.0 - x[i]) * inflow;
        }
        break;
    case Dynamics::Population:
        // B = 1, b = 0.5, a = 0.2
        for (int i = 0; i < n; ++i) {
            double inflow = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                inflow += adj.weights[k] * std::pow(pos(x[adj.neighbors[k]]), 0.2);
            }
            dxdt[i] = -std::sqrt(pos(x[i])) + inflow;
        }
        break;
    case Dynamics::Regulatory:
        // B_i = 1, f = 1, h = 2
        for (int i = 0; i < n; ++i) {
            double inflow = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                const double xj = pos(x[adj.neighbors[k]]);
                inflow += adj.weights[k] * (xj * xj) / (1.0 + xj * xj);
            }
            dxdt[i] = -x[i] + inflow;
        }
        break;
    case Dynamics::Mutualistic:
        // alpha = B_i = C_i = 1, a = 2, h = 1
        for (int i = 0; i < n; ++i) {
            double saturation = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                const double xj = pos(x[adj.neighbors[k]]);
                saturation += adj.weights[k] * xj / (1.0 + xj);
            }
            dxdt[i] = x[i] * (1.0 - x[i] * x[i]) + x[i] * saturation;
        }
        break;
    case Dynamics::Neural:
        for (int i = 0; i < n; ++i) {
            double inflow = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                inflow += adj.weights[k] *
                          logistic(spec.neural_tau * (x[adj.neighbors[k]] - spec.neural_mu));
            }
            dxdt[i] = -x[i] + inflow;
        }
        break;
    case Dynamics::LotkaVolterra:
        // Competitive interaction: the minus sign lives inside g.
        for (int i = 0; i < n; ++i) {
            double inflow = 0.0;
            for (int k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) {
                inflow += adj.weights[k] * x[adj.neighbors[k]];
            }
            dxdt[i] = x[i] * (spec.lv_alpha[i] - spec.lv_theta[i] * x[i]) - x[i] * inflow;
        }
        break;
    default:
        throw ConfigError("unknown dynamics enum value");
    }
}

std::vector<double> sample_sis_delta(const WeightedGraph& g, std::uint64_t seed) {
    if (g.n_nodes <= 0) throw ConfigError("sample_sis_delta: empty graph");
    const std::size_t n = static_cast<std::size_t>(g.n_nodes);
    Rng rng(seed);
    std::vector<double> delta0(n);
    for (double& d : delta0) d = rng.uniform(0.5, 1.5);
    if (g.edges.empty()) {
        std::cerr << "warning: sample_sis_delta on edgeless graph, using unscaled delta0\n";
        return delta0;
    }
    std::vector<double> m = g.dense_adjacency();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m[i * n + j] /= std::sqrt(delta0[i] * delta0[j]);
        }
    }
    const double rho = spectral_radius(m, n, n);
    if (rho <= 0.0) {
        std::cerr << "warning: sample_sis_delta got zero spectral radius, using unscaled delta0\n";
        return delta0;
    }
    std::vector<double> delta(n);
    for (std::size_t i = 0; i < n; ++i) delta[i] = rho * delta0[i] / 1.5;
    return delta;
}

DynamicsSpec sample_dynamics_params(Dynamics family, const WeightedGraph& g, std::uint64_t seed,
                                    double t_final_override, int n_timestamps) {
    DynamicsSpec spec;
    spec.family = family;
    spec.seed = seed;
    spec.t_final = t_final_override > 0.0 ? t_final_override : default_t_final(family);
    spec.n_timestamps = n_timestamps;
    switch (family) {
    case Dynamics::SIS:
        spec.delta = sample_sis_delta(g, mix_seed(seed, 1));
        break;
    case Dynamics::LotkaVolterra: {
        Rng rng(mix_seed(seed, 1));
        spec.lv_alpha.resize(g.n_nodes);
        spec.lv_theta.resize(g.n_nodes);
        for (double& a : spec.lv_alpha) a = rng.uniform(0.5, 1.5);
        for (double& t : spec.lv_theta) t = rng.uniform(0.5, 1.5);
        break;
    }
    default:
        break; // remaining families use the cited fixed constants
    }
    return spec;
}

std::vector<double> sample_initial_condition(Dynamics family, int n, IcMode mode,
                                             std::uint64_t seed) {
    if (n <= 0) throw ConfigError("sample_initial_condition: n must be positive");
    Rng rng(seed);
    std::vector<double> x0(n);
    if (mode == IcMode::ID) {
        switch (family) {
        case Dynamics::SIS: {
            // Half the nodes infected (0.8), half uninfected (0.1).
            std::vector<int> order(n);
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
            const int n_infected = (n + 1) / 2;
            for (int k = 0; k < n; ++k) x0[order[k]] = k < n_infected ? 0.8 : 0.1;
            break;
        }
        case Dynamics::Population:
        case Dynamics::Regulatory:
            for (double& v : x0) v = rng.uniform(0.0, 2.0);
            break;
        case Dynamics::Mutualistic:
            for (double& v : x0) v = rng.uniform(0.0, 5.0);
            break;
        case Dynamics::Neural:
            for (double& v : x0) v = rng.uniform(0.0, 10.0);
            break;
        case Dynamics::LotkaVolterra:
            for (double& v : x0) v = rng.uniform(0.0, 20.0);
            break;
        }
        return x0;
    }
    const double mean = family == Dynamics::SIS ? 0.5 : 6.0;
    const double stddev = (family == Dynamics::SIS || family == Dynamics::Regulatory) ? 0.1 : 1.0;
    for (double& v : x0) v = rng.truncated_normal(mean, stddev);
    return x0;
}

namespace {

// Dormand-Prince 5(4) coefficients; the last stage row doubles as the
// 5th-order solution weights (FSAL).
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
// b5 - b4: coefficients of the embedded error estimate.
constexpr double kE[7] = {71.0 / 57600, 0.0,           -71.0 / 16695, 71.0 / 1920,
                          -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// 4th-order dense-output polynomial for the accepted step [t0, t0+h]:
// y(t0 + theta*h) = y0 + h * sum_j (K^T P)_j theta^{j+1}. Plain cubic Hermite
// loses an order on fast transients where the controller sizes steps for the
// 5th-order truncation error only.
constexpr double kP[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0}};

void dense_output(const std::vector<double>& y0, const std::vector<double>* k, double h,
                  double theta, std::vector<double>& out) {
    double tp[4]; // theta, theta^2, ...
    tp[0] = theta;
    for (int j = 1; j < 4; ++j) tp[j] = tp[j - 1] * theta;
    out.resize(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i) {
        double acc = 0.0;
        for (int s = 0; s < 7; ++s) {
            double poly = 0.0;
            for (int j = 0; j < 4; ++j) poly += kP[s][j] * tp[j];
            acc += k[s][i] * poly;
        }
        out[i] = y0[i] + h * acc;
    }
}

} // namespace

TrajectorySet integrate(const DynamicsSpec& spec, const WeightedGraph& g,
                        const std::vector<double>& x0, const IntegrateOptions& opts) {
    const int n = g.n_nodes;
    if (static_cast<int>(x0.size()) != n) throw ShapeError("integrate: x0 size does not match graph");
    if (!all_finite(x0)) throw NumericError("integrate: non-finite initial condition");
    if (spec.n_timestamps < 2) throw ConfigError("integrate: need at least 2 timestamps");
    if (!(spec.t_final > 0.0)) throw ConfigError("integrate: t_final must be positive");

    const AdjacencyList adj = AdjacencyList::build(g);
    const int T = spec.n_timestamps;
    TrajectorySet traj;
    traj.n_nodes = n;
    traj.n_steps = T;
    traj.n_features = 1;
    traj.states.resize(static_cast<std::size_t>(n) * T);
    traj.times.resize(T);
    for (int t = 0; t < T; ++t) traj.times[t] = spec.t_final * t / (T - 1);
    traj.times[T - 1] = spec.t_final;

    const double grid_dt = spec.t_final / (T - 1);
    const double h_max = opts.max_step_factor * grid_dt;
    const double h_min = 1e-12 * spec.t_final;

    std::vector<double> y = x0;
    std::vector<double> k[7];
    std::vector<double> y_stage(n), y_new(n), interp(n);
    for (auto& ki : k) ki.resize(n);

    for (int i = 0; i < n; ++i) traj.state(i, 0) = x0[i];
    rhs(spec, adj, y, k[0]);

    double t = 0.0;
    double h = 0.1 * h_max;
    int next_grid = 1;
    while (next_grid < T) {
        h = std::min(h, spec.t_final - t);
        for (int s = 1; s < 7; ++s) {
            for (int i = 0; i < n; ++i) {
                double acc = y[i];
                for (int q = 0; q < s; ++q) acc += h * kA[s][q] * k[q][i];
                y_stage[i] = acc;
            }
            rhs(spec, adj, y_stage, k[s]);
        }
        // Stage 7 input is the 5th-order solution itself (FSAL).
        y_new = y_stage;

        double err = 0.0;
        bool finite = all_finite(y_new) && all_finite(k[6]);
        if (finite) {
            for (int i = 0; i < n; ++i) {
                double e = 0.0;
                for (int s = 0; s < 7; ++s) e += kE[s] * k[s][i];
                e *= h;
                const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
                err += (e / sc) * (e / sc);
            }
            err = std::sqrt(err / n);
            finite = std::isfinite(err);
        }

        if (finite && err <= 1.0) {
            double t_new = t + h;
            if (spec.t_final - t_new < h_min) t_new = spec.t_final;
            while (next_grid < T && traj.times[next_grid] <= t_new) {
                const double theta = std::clamp((traj.times[next_grid] - t) / h, 0.0, 1.0);
                dense_output(y, k, h, theta, interp);
                for (int i = 0; i < n; ++i) traj.state(i, next_grid) = interp[i];
                ++next_grid;
            }
            t = t_new;
            y.swap(y_new);
            k[0].swap(k[6]); // FSAL
            const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            h = std::min(h * factor, h_max);
        } else {
            const double factor = finite ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9) : 0.2;
            h *= factor;
        }
        if (h < h_min) {
            std::ostringstream msg;
            msg << "integrate: step size underflow at t=" << t;
            throw NumericError(msg.str());
        }
    }
    if (!all_finite(traj.states)) throw NumericError("integrate: non-finite state in output");
    return traj;
}

TrajectorySet add_observation_noise(const TrajectorySet& traj, int t_obs, double sigma,
                                    std::uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("add_observation_noise: sigma must be nonnegative");
    if (t_obs < 0 || t_obs > traj.n_steps) throw ConfigError("add_observation_noise: bad window");
    TrajectorySet out = traj;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (int i = 0; i < traj.n_nodes; ++i) {
        for (int t = 0; t < t_obs; ++t) {
            for (int f = 0; f < traj.n_features; ++f) {
                const double v = out.state(i, t, f);
                out.state(i, t, f) = rng.normal(v, sigma * std::abs(v));
            }
        }
    }
    return out;
}

void save_trajectory_csv(const std::filesystem::path& path, const TrajectorySet& traj) {
    std::ostringstream out;
    out << "t";
    for (int i = 0; i < traj.n_nodes; ++i) {
        if (traj.n_features == 1) {
            out << ",x_" << i;
        } else {
            for (int f = 0; f < traj.n_features; ++f) out << ",x_" << i << "_" << f;
        }
    }
    out << "\n";
    for (int t = 0; t < traj.n_steps; ++t) {
        out << format_double(traj.times[t]);
        for (int i = 0; i < traj.n_nodes; ++i) {
            for (int f = 0; f < traj.n_features; ++f) {
                out << "," << format_double(traj.state(i, t, f));
            }
        }
        out << "\n";
    }
    write_text_file(path, out.str());
}

TrajectorySet load_trajectory_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty trajectory file: " + path.string());

    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "t") {
        throw IoError("bad trajectory header in " + path.string());
    }
    int n_features = 1;
    // Columns are x_<node> (D=1) or x_<node>_<feature>.
    if (std::count(header[1].begin(), header[1].end(), '_') == 2) {
        n_features = 0;
        const std::string prefix = "x_0_";
        for (std::size_t c = 1; c < header.size(); ++c) {
            if (header[c].rfind(prefix, 0) == 0) ++n_features;
        }
        if (n_features == 0) throw IoError("bad trajectory header in " + path.string());
    }
    const int n_nodes = static_cast<int>((header.size() - 1) / n_features);
    if (static_cast<std::size_t>(n_nodes) * n_features + 1 != header.size()) {
        throw IoError("bad trajectory header in " + path.string());
    }

    std::vector<double> times;
    std::vector<double> rows; // [time][node][feature]
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        int col = 0;
        while (std::getline(ls, cell, ',')) {
            const double v = std::strtod(cell.c_str(), nullptr);
            if (col == 0) {
                times.push_back(v);
            } else {
                rows.push_back(v);
            }
            ++col;
        }
        if (col != static_cast<int>(header.size())) {
            throw IoError("ragged row in trajectory file " + path.string());
        }
    }
    TrajectorySet traj;
    traj.n_nodes = n_nodes;
    traj.n_steps = static_cast<int>(times.size());
    traj.n_features = n_features;
    traj.times = std::move(times);
    traj.states.resize(rows.size());
    for (int t = 0; t < traj.n_steps; ++t) {
        for (int i = 0; i < n_nodes; ++i) {
            for (int f = 0; f < n_features; ++f) {
                traj.state(i, t, f) = rows[(static_cast<std::size_t>(t) * n_nodes + i) * n_features + f];
            }
        }
    }
    return traj;
}

} // namespace netdyn
