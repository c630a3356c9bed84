#include "netdyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "netdyn/io_util.hpp"

namespace netdyn {

namespace {

void check_sizes(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw ShapeError("metrics: size mismatch (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()) + ")");
    }
}

} // namespace

double mape(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_sizes(pred, truth);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (std::abs(truth[k]) < kMapeDivGuard) continue;
        sum += std::abs((pred[k] - truth[k]) / truth[k]);
        ++count;
    }
    if (count == 0) throw NumericError("mape undefined: all entries below division guard");
    return sum / static_cast<double>(count);
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_sizes(pred, truth);
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) sum += std::abs(pred[k] - truth[k]);
    return sum / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_sizes(pred, truth);
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double e = pred[k] - truth[k];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

MetricReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                             int t_pred, int n_nodes, int n_features) {
    check_sizes(pred, truth);
    const std::size_t per_t = static_cast<std::size_t>(n_nodes) * n_features;
    if (pred.size() != static_cast<std::size_t>(t_pred) * per_t) {
        throw ShapeError("metrics: data does not match dimensions");
    }
    MetricReport rep;
    rep.t_pred = t_pred;
    rep.n_nodes = n_nodes;
    rep.n_features = n_features;
    rep.mape_t.resize(t_pred);
    rep.mae_t.resize(t_pred);
    rep.rmse_t.resize(t_pred);

    double ape_sum = 0.0, ae_sum = 0.0, se_sum = 0.0;
    std::size_t ape_count = 0;
    for (int t = 0; t < t_pred; ++t) {
        double ape_t = 0.0, ae_t = 0.0, se_t = 0.0;
        std::size_t ape_n = 0;
        for (std::size_t k = t * per_t; k < (t + 1) * per_t; ++k) {
            const double e = pred[k] - truth[k];
            ae_t += std::abs(e);
            se_t += e * e;
            if (std::abs(truth[k]) >= kMapeDivGuard) {
                ape_t += std::abs(e / truth[k]);
                ++ape_n;
            }
        }
        rep.mae_t[t] = ae_t / static_cast<double>(per_t);
        rep.rmse_t[t] = std::sqrt(se_t / static_cast<double>(per_t));
        rep.mape_t[t] =
            ape_n == 0 ? std::numeric_limits<double>::quiet_NaN() : ape_t / static_cast<double>(ape_n);
        ape_sum += ape_t;
        ae_sum += ae_t;
        se_sum += se_t;
        ape_count += ape_n;
    }
    rep.mae = ae_sum / static_cast<double>(pred.size());
    rep.rmse = std::sqrt(se_sum / static_cast<double>(pred.size()));
    rep.mape_excluded = pred.size() - ape_count;
    rep.mape = ape_count == 0 ? std::numeric_limits<double>::quiet_NaN()
                              : ape_sum / static_cast<double>(ape_count);
    return rep;
}

std::vector<std::size_t> final_state_order(const std::vector<double>& final_truth) {
    std::vector<std::size_t> order(final_truth.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return final_truth[a] < final_truth[b]; });
    return order;
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::size_t side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    if (side == 0) side = 1;
    std::ostringstream out;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            if (c) out << ",";
            const std::size_t k = r * side + c;
            if (k < n) out << format_double(values[k]);
        }
        out << "\n";
    }
    write_text_file(path, out.str());
}

void grid_export(const std::filesystem::path& dir, const std::vector<double>& pred,
                 const std::vector<double>& truth, int t_pred, int n_nodes, int n_features,
                 const std::vector<double>& times, const std::vector<double>& fractions) {
    check_sizes(pred, truth);
    if (times.size() != static_cast<std::size_t>(t_pred)) {
        throw ShapeError("grid_export: times do not match t_pred");
    }
    const std::size_t per_t = static_cast<std::size_t>(n_nodes) * n_features;
    std::vector<double> final_truth(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        final_truth[i] = truth[(static_cast<std::size_t>(t_pred) - 1) * per_t + i * n_features];
    }
    const std::vector<std::size_t> order = final_state_order(final_truth);
    const double t_final = times.back();
    std::filesystem::create_directories(dir);
    for (double frac : fractions) {
        const double target = frac * t_final;
        int best = 0;
        for (int t = 1; t < t_pred; ++t) {
            if (std::abs(times[t] - target) < std::abs(times[best] - target)) best = t;
        }
        std::vector<double> tg(n_nodes), pg(n_nodes);
        for (int i = 0; i < n_nodes; ++i) {
            tg[i] = truth[static_cast<std::size_t>(best) * per_t + order[i] * n_features];
            pg[i] = pred[static_cast<std::size_t>(best) * per_t + order[i] * n_features];
        }
        std::ostringstream label;
        label << times[best];
        write_grid_csv(dir / ("grid_true_" + label.str() + ".csv"), tg);
        write_grid_csv(dir / ("grid_pred_" + label.str() + ".csv"), pg);
    }
}

} // namespace netdyn
