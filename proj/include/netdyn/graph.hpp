#pragma once

// Synthetic topologies: Erdos-Renyi, preferential attachment (scale-free) and
// random partition (community) graphs, uniform link weights, and the spectral
// radius needed by dynamics parameter sampling. Graphs are undirected: each
// stored edge (i < j, w) stands for A_ij = A_ji = w, the coupling strength
// from sender j to receiver i.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "netdyn/errors.hpp"

namespace netdyn {

enum class Topology { ER, SF, Community };

std::string to_string(Topology family);
Topology topology_from_string(const std::string& name);

struct TopologySpec {
    Topology family = Topology::ER;
    int n_nodes = 0;
    double p = 0.1;        // ER edge probability
    int m = 4;             // SF attachment count
    double p_in = 0.25;    // Community intra-cluster probability
    double p_out = 0.1;    // Community inter-cluster probability
    int n_communities = 4;
    double weight_lo = 1.0;
    double weight_hi = 1.0;
    std::uint64_t seed = 0;
};

struct Edge {
    int i = 0; // smaller endpoint
    int j = 0;
    double w = 1.0;
};

struct WeightedGraph {
    int n_nodes = 0;
    std::vector<Edge> edges; // i < j for every edge, no self-loops

    std::vector<double> dense_adjacency() const; // n*n row-major, symmetric
    std::vector<int> degrees() const;
    double mean_degree() const;
};

// Unweighted generators (all weights 1). The spec seed fully determines the
// edge list, including its ordering.
WeightedGraph gen_er(const TopologySpec& spec);
WeightedGraph gen_sf(const TopologySpec& spec);
WeightedGraph gen_community(const TopologySpec& spec);

// Dispatch on spec.family.
WeightedGraph generate_topology(const TopologySpec& spec);

// One Uniform[lo,hi] draw per undirected edge, applied to both directions.
WeightedGraph assign_weights(const WeightedGraph& g, double lo, double hi, std::uint64_t seed);

// Topology + weights, with per-purpose streams derived from spec.seed.
WeightedGraph generate_graph(const TopologySpec& spec);

// Largest-magnitude eigenvalue of a symmetric nonnegative matrix via shifted
// power iteration (all-ones start vector). Relative tolerance `tol`.
double spectral_radius(const std::vector<double>& matrix, std::size_t rows, std::size_t cols,
                       double tol = 1e-10, int max_iter = 10000);

void save_graph(const std::filesystem::path& path, const WeightedGraph& g, const TopologySpec& spec);
WeightedGraph load_graph(const std::filesystem::path& path, TopologySpec* spec_out = nullptr);

} // namespace netdyn
