#pragma once

// Training loop: AdamW with decoupled weight decay, cosine-annealed learning
// rate, global-norm gradient clipping, full-trajectory batches, and the
// evaluation / transductive-window protocols.

#include <cstdint>
#include <string>
#include <vector>

#include "netdyn/metrics.hpp"
#include "netdyn/model.hpp"

namespace netdyn {

struct TrainConfig {
    double lr0 = 0.01;
    int epochs = 80;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double grad_clip = 5.0; // global norm threshold; 0 disables
    double lr_min = 0.0;
    std::uint64_t seed = 0;
    bool deterministic = true;
};

// lr(e) = lr_min + (lr0 - lr_min) (1 + cos(pi e / epochs)) / 2
double cosine_lr(const TrainConfig& cfg, int epoch);

class AdamW {
  public:
    explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
    // params[i] is updated in place using grads[i]; tensor count and shapes
    // must stay fixed across calls.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr);

  private:
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// Scales grads so the global L2 norm is at most max_norm; returns the
// pre-clip norm. max_norm <= 0 disables clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
};

// One optimizer step per training trajectory (all nodes, full prediction
// window); trajectories are visited in a seed-shuffled order each epoch.
TrainResult train(const std::vector<TrajectorySet>& train_set,
                  const std::vector<TrajectorySet>& val_set, const ModelConfig& cfg,
                  const TrainConfig& tcfg);

struct TrajectoryEval {
    std::string id;
    MetricReport metrics;
    std::vector<double> pred; // [t][node][feature]
};

struct EvalReport {
    std::vector<TrajectoryEval> per_trajectory;
    double mape_mean = 0.0, mape_std = 0.0;
    double mae_mean = 0.0, mae_std = 0.0;
    double rmse_mean = 0.0, rmse_std = 0.0;
    std::vector<double> mape_t, mae_t, rmse_t; // mean curves across trajectories
    int t_pred = 0;
};

EvalReport evaluate(const ModelParams& params, const std::vector<TrajectorySet>& test_set);

// Forecast that repeats the last observed value; the weakest sane comparator.
EvalReport evaluate_persistence(const std::vector<TrajectorySet>& test_set, int t_obs);

struct TransductiveResult {
    int t_pred = 0;
    ModelParams params;
    std::vector<EpochStats> history;
    EvalReport report;
    int n_train_windows = 0;
    int n_test_windows = 0;
};

// Chronological protocol on a single series: training windows of length
// t_obs + t_pred fully inside [0, split_index), test windows starting at or
// after split_index, stride 1.
TransductiveResult train_transductive(const TrajectorySet& series, const ModelConfig& cfg,
                                      const TrainConfig& tcfg, int split_index, int t_pred);

} // namespace netdyn
