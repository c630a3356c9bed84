#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "netdyn/io_util.hpp"
#include "netdyn/metrics.hpp"
#include "netdyn/rng.hpp"

using namespace netdyn;

TEST_CASE("unit examples") {
    CHECK(mape({2.0}, {1.0}) == 1.0);
    CHECK(mae({2.0}, {1.0}) == 1.0);
    CHECK(rmse({2.0}, {1.0}) == 1.0);

    CHECK(mae({1.0, 3.0}, {0.0, 0.0}) == 2.0);
    CHECK(rmse({1.0, 3.0}, {0.0, 0.0}) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK_THROWS_AS(mape({1.0, 3.0}, {0.0, 0.0}), NumericError);

    CHECK(mape({1.5, 2.5}, {1.5, 2.5}) == 0.0);
    CHECK(mae({1.5, 2.5}, {1.5, 2.5}) == 0.0);
    CHECK(rmse({1.5, 2.5}, {1.5, 2.5}) == 0.0);

    CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("rmse dominates mae on random tensors") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<double> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform(-10.0, 10.0);
            truth[i] = rng.uniform(-10.0, 10.0);
        }
        CHECK(rmse(pred, truth) >= mae(pred, truth) - 1e-15);
    }
}

TEST_CASE("metrics are permutation-invariant and scale-covariant") {
    Rng rng(11);
    std::vector<double> pred(30), truth(30);
    for (std::size_t i = 0; i < 30; ++i) {
        pred[i] = rng.uniform(0.5, 3.0);
        truth[i] = rng.uniform(0.5, 3.0);
    }
    std::vector<double> pred_p = pred, truth_p = truth;
    Rng perm_rng(3);
    std::vector<std::size_t> order(30);
    for (std::size_t i = 0; i < 30; ++i) order[i] = i;
    perm_rng.shuffle(order);
    for (std::size_t i = 0; i < 30; ++i) {
        pred_p[i] = pred[order[i]];
        truth_p[i] = truth[order[i]];
    }
    CHECK(mape(pred_p, truth_p) == doctest::Approx(mape(pred, truth)).epsilon(1e-13));
    CHECK(mae(pred_p, truth_p) == doctest::Approx(mae(pred, truth)).epsilon(1e-13));
    CHECK(rmse(pred_p, truth_p) == doctest::Approx(rmse(pred, truth)).epsilon(1e-13));

    const double c = -2.5;
    std::vector<double> pred_c = pred, truth_c = truth;
    for (std::size_t i = 0; i < 30; ++i) {
        pred_c[i] *= c;
        truth_c[i] *= c;
    }
    CHECK(mae(pred_c, truth_c) == doctest::Approx(std::abs(c) * mae(pred, truth)).epsilon(1e-13));
    CHECK(mape(pred_c, truth_c) == doctest::Approx(mape(pred, truth)).epsilon(1e-13));
}

TEST_CASE("per-timestamp curves") {
    // Constant error c gives a flat MAE curve at c.
    const int t_pred = 6, n = 4;
    std::vector<double> truth(t_pred * n, 1.0);
    std::vector<double> pred(t_pred * n, 1.25);
    MetricReport rep = compute_metrics(pred, truth, t_pred, n, 1);
    for (double v : rep.mae_t) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

    // The time-mean of the curve equals the scalar MAE.
    Rng rng(7);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(0.0, 2.0);
        truth[i] = rng.uniform(0.5, 2.0);
    }
    rep = compute_metrics(pred, truth, t_pred, n, 1);
    double curve_mean = 0.0;
    for (double v : rep.mae_t) curve_mean += v;
    curve_mean /= t_pred;
    CHECK(curve_mean == doctest::Approx(rep.mae).epsilon(1e-12));

    // Averaging two trajectories' curves equals the curve of their node
    // concatenation when N is equal.
    std::vector<double> pred2(pred.size()), truth2(truth.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred2[i] = rng.uniform(0.0, 2.0);
        truth2[i] = rng.uniform(0.5, 2.0);
    }
    MetricReport a = compute_metrics(pred, truth, t_pred, n, 1);
    MetricReport b = compute_metrics(pred2, truth2, t_pred, n, 1);
    std::vector<double> cat_pred, cat_truth;
    for (int t = 0; t < t_pred; ++t) {
        for (int i = 0; i < n; ++i) {
            cat_pred.push_back(pred[t * n + i]);
            cat_truth.push_back(truth[t * n + i]);
        }
        for (int i = 0; i < n; ++i) {
            cat_pred.push_back(pred2[t * n + i]);
            cat_truth.push_back(truth2[t * n + i]);
        }
    }
    MetricReport cat = compute_metrics(cat_pred, cat_truth, t_pred, 2 * n, 1);
    for (int t = 0; t < t_pred; ++t) {
        CHECK(cat.mae_t[t] == doctest::Approx(0.5 * (a.mae_t[t] + b.mae_t[t])).epsilon(1e-12));
    }
}

TEST_CASE("compute_metrics marks mape undefined instead of dividing by zero") {
    std::vector<double> truth = {0.0, 0.0};
    std::vector<double> pred = {1.0, 3.0};
    MetricReport rep = compute_metrics(pred, truth, 1, 2, 1);
    CHECK(std::isnan(rep.mape));
    CHECK(rep.mape_excluded == 2);
    CHECK(rep.mae == 2.0);
}

TEST_CASE("grid export") {
    const auto dir = std::filesystem::temp_directory_path() / "netdyn_grid_test";
    std::filesystem::remove_all(dir);

    // N=4 with final values [3,1,2,4]: sorted rows [[1,2],[3,4]].
    std::vector<double> truth = {3.0, 1.0, 2.0, 4.0};
    grid_export(dir, truth, truth, 1, 4, 1, {1.0}, {1.0});
    const std::string grid = read_text_file(dir / "grid_true_1.csv");
    CHECK(grid == "1,2\n3,4\n");
    // Perfect prediction: both grids identical.
    CHECK(read_text_file(dir / "grid_pred_1.csv") == grid);

    // N=5 pads to a 3x3 grid with 4 empty cells.
    std::filesystem::remove_all(dir);
    std::vector<double> five = {5.0, 4.0, 3.0, 2.0, 1.0};
    grid_export(dir, five, five, 1, 5, 1, {2.0}, {1.0});
    const std::string padded = read_text_file(dir / "grid_true_2.csv");
    CHECK(padded == "1,2,3\n4,5,\n,,\n");
    std::filesystem::remove_all(dir);
}

TEST_CASE("final_state_order is ascending and stable") {
    const std::vector<double> finals = {3.0, 1.0, 2.0, 1.0};
    const auto order = final_state_order(finals);
    CHECK(order == std::vector<std::size_t>{1, 3, 2, 0});
}
