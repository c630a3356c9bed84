#include "netdyn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "netdyn/rng.hpp"

namespace netdyn {

double cosine_lr(const TrainConfig& cfg, int epoch) {
    const double phase = std::numbers::pi * static_cast<double>(epoch) / cfg.epochs;
    return cfg.lr_min + (cfg.lr0 - cfg.lr_min) * (1.0 + std::cos(phase)) / 2.0;
}

void AdamW::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size()) throw ShapeError("AdamW: params/grads size mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k].assign(params[k]->numel(), 0.0);
            v_[k].assign(params[k]->numel(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (p.numel() != g.numel() || p.numel() != m_[k].size()) {
            throw ShapeError("AdamW: tensor size changed between steps");
        }
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g.data()[i];
            m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * gi;
            v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * gi * gi;
            const double m_hat = m_[k][i] / bc1;
            const double v_hat = v_[k][i] / bc2;
            // Decoupled weight decay: applied to the parameter directly.
            p.data()[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * p.data()[i]);
        }
    }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads) {
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g.data()[i] * g.data()[i];
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor& g : grads) {
            for (std::size_t i = 0; i < g.numel(); ++i) g.data()[i] *= s;
        }
    }
    return norm;
}

namespace {

double grid_spacing(const TrajectorySet& traj) {
    if (traj.n_steps < 2) throw ConfigError("trajectory needs at least 2 timestamps");
    return (traj.times.back() - traj.times.front()) / (traj.n_steps - 1);
}

double forward_loss(const ModelParams& params, const TrajectorySet& traj) {
    const int t_obs = params.cfg.t_obs;
    const Tensor obs = observation_window(traj, t_obs);
    const Tensor target = prediction_target(traj, t_obs);
    ModelForward fwd =
        forward_model(nullptr, params, obs, traj.n_steps - t_obs, grid_spacing(traj));
    return prediction_loss(nullptr, fwd.pred, target).value();
}

void require_trainable(const std::vector<TrajectorySet>& train_set, int t_obs) {
    if (train_set.empty()) throw ConfigError("train: empty training set");
    for (const TrajectorySet& traj : train_set) {
        if (traj.n_steps < t_obs + 1) {
            throw ConfigError("train: trajectory shorter than t_obs + 1");
        }
    }
}

} // namespace

TrainResult train(const std::vector<TrajectorySet>& train_set,
                  const std::vector<TrajectorySet>& val_set, const ModelConfig& cfg,
                  const TrainConfig& tcfg) {
    require_trainable(train_set, cfg.t_obs);
    if (tcfg.epochs < 1 || !(tcfg.lr0 > 0.0)) throw ConfigError("train: bad schedule config");

    TrainResult result;
    result.params = init_params(cfg, mix_seed(tcfg.seed, 0xA11));
    AdamW optimizer(tcfg);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = cosine_lr(tcfg, epoch);
        Rng shuffle_rng(mix_seed(tcfg.seed, 100 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t step = 0; step < order.size(); ++step) {
            const TrajectorySet& traj = train_set[order[step]];
            try {
                Tape tape;
                ModelParams bound = result.params.bind(tape);
                const Tensor obs = observation_window(traj, cfg.t_obs);
                const Tensor target = prediction_target(traj, cfg.t_obs);
                ModelForward fwd = forward_model(&tape, bound, obs, traj.n_steps - cfg.t_obs,
                                                 grid_spacing(traj));
                Tensor loss = prediction_loss(&tape, fwd.pred, target);
                loss_sum += loss.value();
                tape.backward(loss);

                auto bound_entries = bound.entries();
                std::vector<Tensor> grads;
                grads.reserve(bound_entries.size());
                for (auto& [name, t] : bound_entries) grads.push_back(tape.grad(*t));
                clip_global_norm(grads, tcfg.grad_clip);

                auto param_entries = result.params.entries();
                std::vector<Tensor*> tensors;
                tensors.reserve(param_entries.size());
                for (auto& [name, t] : param_entries) tensors.push_back(t);
                optimizer.step(tensors, grads, lr);
            } catch (const NumericError& e) {
                throw NumericError("train: epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(step) + ": " + e.what());
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        if (val_set.empty()) {
            stats.val_loss = std::numeric_limits<double>::quiet_NaN();
        } else {
            double v = 0.0;
            for (const TrajectorySet& traj : val_set) v += forward_loss(result.params, traj);
            stats.val_loss = v / static_cast<double>(val_set.size());
        }
        result.history.push_back(stats);
    }
    return result;
}

namespace {

void finish_report(EvalReport& rep) {
    const std::size_t n = rep.per_trajectory.size();
    if (n == 0) return;
    rep.t_pred = rep.per_trajectory[0].metrics.t_pred;
    rep.mape_t.assign(rep.t_pred, 0.0);
    rep.mae_t.assign(rep.t_pred, 0.0);
    rep.rmse_t.assign(rep.t_pred, 0.0);
    for (const TrajectoryEval& te : rep.per_trajectory) {
        for (int t = 0; t < rep.t_pred; ++t) {
            rep.mape_t[t] += te.metrics.mape_t[t] / static_cast<double>(n);
            rep.mae_t[t] += te.metrics.mae_t[t] / static_cast<double>(n);
            rep.rmse_t[t] += te.metrics.rmse_t[t] / static_cast<double>(n);
        }
    }
    auto mean_std = [n](auto getter, const std::vector<TrajectoryEval>& rows, double& mean,
                        double& stddev) {
        std::vector<double> xs;
        for (const TrajectoryEval& te : rows) {
            const double v = getter(te);
            if (std::isfinite(v)) xs.push_back(v);
        }
        if (xs.empty()) {
            mean = std::numeric_limits<double>::quiet_NaN();
            stddev = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        double sq = 0.0;
        for (double x : xs) sq += (x - mean) * (x - mean);
        stddev = xs.size() > 1 ? std::sqrt(sq / static_cast<double>(xs.size() - 1)) : 0.0;
        (void)n;
    };
    mean_std([](const TrajectoryEval& t) { return t.metrics.mape; }, rep.per_trajectory,
             rep.mape_mean, rep.mape_std);
    mean_std([](const TrajectoryEval& t) { return t.metrics.mae; }, rep.per_trajectory,
             rep.mae_mean, rep.mae_std);
    mean_std([](const TrajectoryEval& t) { return t.metrics.rmse; }, rep.per_trajectory,
             rep.rmse_mean, rep.rmse_std);
}

std::vector<double> truth_window(const TrajectorySet& traj, int t_obs) {
    const int t_pred = traj.n_steps - t_obs;
    std::vector<double> truth(static_cast<std::size_t>(t_pred) * traj.n_nodes * traj.n_features);
    std::size_t k = 0;
    for (int t = 0; t < t_pred; ++t) {
        for (int i = 0; i < traj.n_nodes; ++i) {
            for (int f = 0; f < traj.n_features; ++f) truth[k++] = traj.state(i, t_obs + t, f);
        }
    }
    return truth;
}

} // namespace

EvalReport evaluate(const ModelParams& params, const std::vector<TrajectorySet>& test_set) {
    EvalReport rep;
    const int t_obs = params.cfg.t_obs;
    for (std::size_t k = 0; k < test_set.size(); ++k) {
        const TrajectorySet& traj = test_set[k];
        const int t_pred = traj.n_steps - t_obs;
        const Tensor obs = observation_window(traj, t_obs);
        ModelForward fwd = forward_model(nullptr, params, obs, t_pred, grid_spacing(traj));
        TrajectoryEval te;
        te.id = traj.graph_id.empty() ? std::to_string(k) : traj.graph_id;
        te.pred = fwd.pred.vec();
        te.metrics =
            compute_metrics(te.pred, truth_window(traj, t_obs), t_pred, traj.n_nodes, traj.n_features);
        rep.per_trajectory.push_back(std::move(te));
    }
    finish_report(rep);
    return rep;
}

EvalReport evaluate_persistence(const std::vector<TrajectorySet>& test_set, int t_obs) {
    EvalReport rep;
    for (std::size_t k = 0; k < test_set.size(); ++k) {
        const TrajectorySet& traj = test_set[k];
        const int t_pred = traj.n_steps - t_obs;
        TrajectoryEval te;
        te.id = traj.graph_id.empty() ? std::to_string(k) : traj.graph_id;
        te.pred.resize(static_cast<std::size_t>(t_pred) * traj.n_nodes * traj.n_features);
        std::size_t idx = 0;
        for (int t = 0; t < t_pred; ++t) {
            for (int i = 0; i < traj.n_nodes; ++i) {
                for (int f = 0; f < traj.n_features; ++f) {
                    te.pred[idx++] = traj.state(i, t_obs - 1, f);
                }
            }
        }
        te.metrics =
            compute_metrics(te.pred, truth_window(traj, t_obs), t_pred, traj.n_nodes, traj.n_features);
        rep.per_trajectory.push_back(std::move(te));
    }
    finish_report(rep);
    return rep;
}

namespace {

TrajectorySet window_of(const TrajectorySet& series, int start, int len) {
    TrajectorySet w;
    w.n_nodes = series.n_nodes;
    w.n_steps = len;
    w.n_features = series.n_features;
    w.graph_id = "w" + std::to_string(start);
    w.times.assign(series.times.begin() + start, series.times.begin() + start + len);
    w.states.resize(static_cast<std::size_t>(w.n_nodes) * len * w.n_features);
    for (int i = 0; i < w.n_nodes; ++i) {
        for (int t = 0; t < len; ++t) {
            for (int f = 0; f < w.n_features; ++f) w.state(i, t, f) = series.state(i, start + t, f);
        }
    }
    return w;
}

} // namespace

TransductiveResult train_transductive(const TrajectorySet& series, const ModelConfig& cfg,
                                      const TrainConfig& tcfg, int split_index, int t_pred) {
    const int window = cfg.t_obs + t_pred;
    if (series.n_steps < window) {
        throw ConfigError("transductive: series shorter than t_obs + t_pred");
    }
    if (split_index < window) {
        throw ConfigError("transductive: no training window fits before the split");
    }
    if (split_index > series.n_steps - window) {
        throw ConfigError("transductive: no test window fits after the split");
    }
    std::vector<TrajectorySet> train_windows, test_windows;
    for (int s = 0; s + window <= split_index; ++s) train_windows.push_back(window_of(series, s, window));
    for (int s = split_index; s + window <= series.n_steps; ++s) {
        test_windows.push_back(window_of(series, s, window));
    }

    TransductiveResult out;
    out.t_pred = t_pred;
    out.n_train_windows = static_cast<int>(train_windows.size());
    out.n_test_windows = static_cast<int>(test_windows.size());
    TrainResult tr = train(train_windows, {}, cfg, tcfg);
    out.params = std::move(tr.params);
    out.history = std::move(tr.history);
    out.report = evaluate(out.params, test_windows);
    return out;
}

} // namespace netdyn
