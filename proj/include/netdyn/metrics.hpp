#pragma once

// Error metrics over prediction windows plus the diagnostic exports
// (error-vs-time curves, sorted state grids).

#include <filesystem>
#include <vector>

#include "netdyn/errors.hpp"

namespace netdyn {

// Entries with |truth| below this are excluded from MAPE averages.
inline constexpr double kMapeDivGuard = 1e-8;

// Scalar metrics over matching flat arrays. mape throws NumericError when
// every entry is excluded by the division guard.
double mape(const std::vector<double>& pred, const std::vector<double>& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);
double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

struct MetricReport {
    double mape = 0.0; // NaN when every entry was excluded
    double mae = 0.0;
    double rmse = 0.0;
    std::vector<double> mape_t, mae_t, rmse_t; // per prediction timestamp
    int t_pred = 0, n_nodes = 0, n_features = 0;
    std::size_t mape_excluded = 0;
};

// pred/truth laid out [t][node][feature].
MetricReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                             int t_pred, int n_nodes, int n_features);

// Node order by ascending final true state (feature 0).
std::vector<std::size_t> final_state_order(const std::vector<double>& final_truth);

// Writes values (already in display order) as a ceil(sqrt(N)) x ceil(sqrt(N))
// row-major grid; padding cells are empty.
void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& values);

// Truth/prediction grids at the given fractions of the trajectory, nodes
// sorted by ascending final true state. pred/truth are [t][node][feature];
// feature 0 is displayed.
void grid_export(const std::filesystem::path& dir, const std::vector<double>& pred,
                 const std::vector<double>& truth, int t_pred, int n_nodes, int n_features,
                 const std::vector<double>& times,
                 const std::vector<double>& fractions = {0.125, 0.375, 0.925});

} // namespace netdyn
