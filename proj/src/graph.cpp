#include "netdyn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "netdyn/io_util.hpp"
#include "netdyn/rng.hpp"

namespace netdyn {

std::string to_string(Topology family) {
    switch (family) {
    case Topology::ER: return "ER";
    case Topology::SF: return "SF";
    case Topology::Community: return "Community";
    }
    throw ConfigError("unknown topology enum value");
}

Topology topology_from_string(const std::string& name) {
    if (name == "ER") return Topology::ER;
    if (name == "SF") return Topology::SF;
    if (name == "Community") return Topology::Community;
    throw ConfigError("unknown topology family: " + name);
}

std::vector<double> WeightedGraph::dense_adjacency() const {
    const std::size_t n = static_cast<std::size_t>(n_nodes);
    std::vector<double> a(n * n, 0.0);
    for (const Edge& e : edges) {
        a[static_cast<std::size_t>(e.i) * n + e.j] = e.w;
        a[static_cast<std::size_t>(e.j) * n + e.i] = e.w;
    }
    return a;
}

std::vector<int> WeightedGraph::degrees() const {
    std::vector<int> deg(n_nodes, 0);
    for (const Edge& e : edges) {
        ++deg[e.i];
        ++deg[e.j];
    }
    return deg;
}

double WeightedGraph::mean_degree() const {
    if (n_nodes == 0) return 0.0;
    return 2.0 * static_cast<double>(edges.size()) / n_nodes;
}

namespace {

void require_nodes(const TopologySpec& spec) {
    if (spec.n_nodes <= 0) throw ConfigError("n_nodes must be positive");
}

void require_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        std::ostringstream msg;
        msg << name << " must lie in [0,1], got " << p;
        throw ConfigError(msg.str());
    }
}

} // namespace

WeightedGraph gen_er(const TopologySpec& spec) {
    require_nodes(spec);
    require_probability(spec.p, "p");
    Rng rng(spec.seed);
    WeightedGraph g;
    g.n_nodes = spec.n_nodes;
    for (int i = 0; i < spec.n_nodes; ++i) {
        for (int j = i + 1; j < spec.n_nodes; ++j) {
            if (rng.bernoulli(spec.p)) g.edges.push_back({i, j, 1.0});
        }
    }
    return g;
}

WeightedGraph gen_sf(const TopologySpec& spec) {
    require_nodes(spec);
    if (spec.m < 1 || spec.m >= spec.n_nodes) {
        std::ostringstream msg;
        msg << "SF requires 1 <= m < N, got m=" << spec.m << " N=" << spec.n_nodes;
        throw ConfigError(msg.str());
    }
    Rng rng(spec.seed);
    WeightedGraph g;
    g.n_nodes = spec.n_nodes;
    // Seed graph: m isolated nodes. Each edge endpoint appears once in
    // `endpoints`, so sampling it uniformly is degree-proportional sampling.
    std::vector<int> endpoints;
    endpoints.reserve(2 * static_cast<std::size_t>(spec.n_nodes - spec.m) * spec.m);
    std::vector<int> targets;
    for (int v = spec.m; v < spec.n_nodes; ++v) {
        targets.clear();
        while (static_cast<int>(targets.size()) < spec.m) {
            int candidate;
            if (endpoints.empty()) {
                // No edges yet: attach uniformly among existing nodes.
                candidate = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
            } else {
                candidate = endpoints[rng.below(endpoints.size())];
            }
            if (std::find(targets.begin(), targets.end(), candidate) == targets.end()) {
                targets.push_back(candidate);
            }
        }
        std::sort(targets.begin(), targets.end());
        for (int t : targets) {
            g.edges.push_back({t, v, 1.0});
            endpoints.push_back(t);
            endpoints.push_back(v);
        }
    }
    return g;
}

WeightedGraph gen_community(const TopologySpec& spec) {
    require_nodes(spec);
    require_probability(spec.p_in, "p_in");
    require_probability(spec.p_out, "p_out");
    if (spec.n_communities < 1) throw ConfigError("n_communities must be positive");
    // Near-equal contiguous blocks; the first (N mod k) blocks get one extra node.
    const int k = std::min(spec.n_communities, spec.n_nodes);
    const int base = spec.n_nodes / k;
    const int rem = spec.n_nodes % k;
    std::vector<int> block(spec.n_nodes);
    int node = 0;
    for (int b = 0; b < k; ++b) {
        const int size = base + (b < rem ? 1 : 0);
        for (int s = 0; s < size; ++s) block[node++] = b;
    }
    Rng rng(spec.seed);
    WeightedGraph g;
    g.n_nodes = spec.n_nodes;
    for (int i = 0; i < spec.n_nodes; ++i) {
        for (int j = i + 1; j < spec.n_nodes; ++j) {
            const double p = block[i] == block[j] ? spec.p_in : spec.p_out;
            if (rng.bernoulli(p)) g.edges.push_back({i, j, 1.0});
        }
    }
    return g;
}

WeightedGraph generate_topology(const TopologySpec& spec) {
    switch (spec.family) {
    case Topology::ER: return gen_er(spec);
    case Topology::SF: return gen_sf(spec);
    case Topology::Community: return gen_community(spec);
    }
    throw ConfigError("unknown topology enum value");
}

WeightedGraph assign_weights(const WeightedGraph& g, double lo, double hi, std::uint64_t seed) {
    if (!(lo > 0.0) || lo > hi) {
        std::ostringstream msg;
        msg << "weight range requires 0 < lo <= hi, got [" << lo << ", " << hi << "]";
        throw ConfigError(msg.str());
    }
    Rng rng(seed);
    WeightedGraph out = g;
    for (Edge& e : out.edges) e.w = rng.uniform(lo, hi);
    return out;
}

WeightedGraph generate_graph(const TopologySpec& spec) {
    TopologySpec topo = spec;
    topo.seed = mix_seed(spec.seed, 1);
    WeightedGraph g = generate_topology(topo);
    return assign_weights(g, spec.weight_lo, spec.weight_hi, mix_seed(spec.seed, 2));
}

double spectral_radius(const std::vector<double>& matrix, std::size_t rows, std::size_t cols,
                       double tol, int max_iter) {
    if (rows != cols) {
        std::ostringstream msg;
        msg << "spectral_radius requires a square matrix, got " << rows << "x" << cols;
        throw ShapeError(msg.str());
    }
    if (matrix.size() != rows * cols) throw ShapeError("matrix data does not match dimensions");
    const std::size_t n = rows;
    if (n == 0) return 0.0;

    double max_row_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::abs(matrix[i * n + j]);
        max_row_sum = std::max(max_row_sum, s);
    }
    if (max_row_sum == 0.0) return 0.0;

    // Shift by c so the dominant eigenvalue of A + cI strictly outweighs the
    // most negative one (bipartite graphs have the eigenvalue pair +-rho).
    const double c = 0.5 * max_row_sum;
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> y(n);
    for (int it = 0; it < max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = c * x[i];
            const double* row = matrix.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
            y[i] = s;
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += y[i] * y[i];
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        double mu = 0.0; // Rayleigh quotient of A + cI at the normalized iterate
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = y[i] / norm;
        }
        double residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = c * x[i];
            const double* row = matrix.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
            y[i] = s;
            mu += x[i] * s;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - mu * x[i];
            residual += r * r;
        }
        residual = std::sqrt(residual);
        // For symmetric matrices |lambda_max - mu| <= residual.
        if (residual <= tol * std::max(std::abs(mu), 1e-300)) {
            return mu - c;
        }
    }
    throw NumericError("spectral_radius: power iteration did not converge");
}

void save_graph(const std::filesystem::path& path, const WeightedGraph& g, const TopologySpec& spec) {
    // Hand-rolled writer so that floats carry 17 significant digits.
    std::ostringstream out;
    out << "{\n";
    out << "  \"n_nodes\": " << g.n_nodes << ",\n";
    out << "  \"edges\": [";
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const Edge& e = g.edges[k];
        if (e.i >= e.j) throw IoError("graph edges must satisfy i < j");
        if (k) out << ", ";
        out << "[" << e.i << ", " << e.j << ", " << format_double(e.w) << "]";
    }
    out << "],\n";
    out << "  \"family\": \"" << to_string(spec.family) << "\",\n";
    out << "  \"spec\": {\"p\": " << format_double(spec.p) << ", \"m\": " << spec.m
        << ", \"p_in\": " << format_double(spec.p_in) << ", \"p_out\": " << format_double(spec.p_out)
        << ", \"n_communities\": " << spec.n_communities << ", \"weight_range\": ["
        << format_double(spec.weight_lo) << ", " << format_double(spec.weight_hi) << "]},\n";
    out << "  \"seed\": " << spec.seed << "\n";
    out << "}\n";
    write_text_file(path, out.str());
}

WeightedGraph load_graph(const std::filesystem::path& path, TopologySpec* spec_out) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed graph file " + path.string() + ": " + e.what());
    }
    WeightedGraph g;
    try {
        g.n_nodes = j.at("n_nodes").get<int>();
        for (const auto& edge : j.at("edges")) {
            Edge e{edge.at(0).get<int>(), edge.at(1).get<int>(), edge.at(2).get<double>()};
            if (e.i < 0 || e.j >= g.n_nodes || e.i >= e.j || e.w < 0.0) {
                throw IoError("invalid edge in " + path.string());
            }
            g.edges.push_back(e);
        }
        if (spec_out != nullptr) {
            TopologySpec spec;
            spec.family = topology_from_string(j.at("family").get<std::string>());
            spec.n_nodes = g.n_nodes;
            const auto& s = j.at("spec");
            spec.p = s.at("p").get<double>();
            spec.m = s.at("m").get<int>();
            spec.p_in = s.at("p_in").get<double>();
            spec.p_out = s.at("p_out").get<double>();
            spec.n_communities = s.at("n_communities").get<int>();
            spec.weight_lo = s.at("weight_range").at(0).get<double>();
            spec.weight_hi = s.at("weight_range").at(1).get<double>();
            spec.seed = j.at("seed").get<std::uint64_t>();
            *spec_out = spec;
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed graph file " + path.string() + ": " + e.what());
    }
    return g;
}

} // namespace netdyn
