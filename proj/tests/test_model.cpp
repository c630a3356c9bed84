#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "netdyn/model.hpp"
#include "netdyn/rng.hpp"
#include "oracles.hpp"

using namespace netdyn;

namespace {

Tensor random_obs(int n, int t_obs, int d_feat, std::uint64_t seed, double lo = 0.0,
                  double hi = 2.0) {
    Rng rng(seed);
    Tensor obs({static_cast<std::size_t>(n), static_cast<std::size_t>(t_obs),
                static_cast<std::size_t>(d_feat)});
    for (std::size_t i = 0; i < obs.numel(); ++i) obs.data()[i] = rng.uniform(lo, hi);
    return obs;
}

Tensor permute_obs(const Tensor& obs, const std::vector<std::size_t>& perm) {
    Tensor out(obs.shape());
    const std::size_t row = obs.dim(1) * obs.dim(2);
    for (std::size_t i = 0; i < obs.dim(0); ++i) {
        std::copy(obs.data() + perm[i] * row, obs.data() + (perm[i] + 1) * row,
                  out.data() + i * row);
    }
    return out;
}

ModelConfig small_cfg(OdeType ode, EncoderType enc = EncoderType::FFW) {
    ModelConfig cfg;
    cfg.latent_dim = 4;
    cfg.n_heads = 2;
    cfg.encoder = enc;
    cfg.ode_type = ode;
    cfg.t_obs = 5;
    cfg.feature_dim = 1;
    return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

} // namespace

TEST_CASE("encoder basics: per-node map, shape, identical windows") {
    for (EncoderType enc :
         {EncoderType::FFW, EncoderType::NRI, EncoderType::GT, EncoderType::GTDG}) {
        for (int n : {1, 3, 7}) {
            ModelConfig cfg = small_cfg(OdeType::SelfOnly, enc);
            if (enc == EncoderType::NRI && n == 1) continue; // no pairs to pass messages over
            ModelParams params = init_params(cfg, 42);
            Tensor obs = random_obs(n, cfg.t_obs, 1, 7);
            EncodeResult res = encode(nullptr, obs, params);
            CHECK(res.z0.shape() == std::vector<std::size_t>{static_cast<std::size_t>(n),
                                                             static_cast<std::size_t>(4)});
            CHECK_FALSE(res.a_hat.defined());
        }
    }

    // Two nodes with identical observed windows get identical embeddings (FFW).
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 1);
    Tensor obs = random_obs(3, cfg.t_obs, 1, 9);
    for (int t = 0; t < cfg.t_obs; ++t) obs.data()[2 * cfg.t_obs + t] = obs.data()[0 * cfg.t_obs + t];
    EncodeResult res = encode(nullptr, obs, params);
    for (int k = 0; k < 4; ++k) {
        CHECK(res.z0.data()[0 * 4 + k] == res.z0.data()[2 * 4 + k]);
    }
    REQUIRE(res.a_hat.defined());
    // No self-interaction in the inferred static edges.
    for (int i = 0; i < 3; ++i) CHECK(res.a_hat.data()[i * 3 + i] == 0.0);
}

TEST_CASE("FFW encoder is permutation-equivariant, including the static edges") {
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 5);
    const int n = 5;
    Tensor obs = random_obs(n, cfg.t_obs, 1, 11);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};

    EncodeResult base = encode(nullptr, obs, params);
    EncodeResult permuted = encode(nullptr, permute_obs(obs, perm), params);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 4; ++k) {
            CHECK(permuted.z0.data()[i * 4 + k] ==
                  doctest::Approx(base.z0.data()[perm[i] * 4 + k]).epsilon(1e-12));
        }
        for (int j = 0; j < n; ++j) {
            CHECK(permuted.a_hat.data()[i * n + j] ==
                  doctest::Approx(base.a_hat.data()[perm[i] * n + perm[j]]).epsilon(1e-12));
        }
    }
}

TEST_CASE("NRI encoder with zeroed edge messages collapses node embeddings") {
    ModelConfig cfg = small_cfg(OdeType::SelfOnly, EncoderType::NRI);
    ModelParams params = init_params(cfg, 3);
    for (Tensor* t : {&params.nri_edge.w1, &params.nri_edge.b1, &params.nri_edge.w2,
                      &params.nri_edge.b2}) {
        for (std::size_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
    }
    Tensor obs = random_obs(4, cfg.t_obs, 1, 13);
    EncodeResult res = encode(nullptr, obs, params);
    for (int i = 1; i < 4; ++i) {
        for (int k = 0; k < 4; ++k) {
            CHECK(res.z0.data()[i * 4 + k] == doctest::Approx(res.z0.data()[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("static RHS with zero edges equals the SelfOnly baseline bitwise") {
    ModelConfig static_cfg = small_cfg(OdeType::StaticEdge);
    ModelParams sp = init_params(static_cfg, 17);
    ModelConfig self_cfg = small_cfg(OdeType::SelfOnly);
    ModelParams np = init_params(self_cfg, 99);
    // Share the weights the two variants have in common.
    np.ode_f = sp.ode_f;
    np.out_w = sp.out_w;
    np.out_b = sp.out_b;

    const int n = 6;
    Rng rng(8);
    Tensor z({static_cast<std::size_t>(n), 4});
    for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor zero_a({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});

    Tensor rhs_static = latent_rhs(nullptr, z, zero_a, sp);
    Tensor rhs_self = latent_rhs(nullptr, z, Tensor(), np);
    for (std::size_t i = 0; i < rhs_static.numel(); ++i) {
        CHECK(rhs_static.data()[i] == rhs_self.data()[i]);
    }
}

TEST_CASE("latent RHS is permutation-equivariant and respects duplicates") {
    for (OdeType ode : {OdeType::StaticEdge, OdeType::AttentionEdge}) {
        ModelConfig cfg = small_cfg(ode);
        ModelParams params = init_params(cfg, 23);
        const int n = 5;
        Rng rng(31);
        Tensor z({static_cast<std::size_t>(n), 4});
        for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.uniform(-1.0, 1.0);
        Tensor a_hat;
        if (ode == OdeType::StaticEdge) {
            a_hat = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    a_hat.data()[i * n + j] = i == j ? 0.0 : rng.uniform(-0.5, 0.5);
                }
            }
        }
        Tensor out = latent_rhs(nullptr, z, a_hat, params);

        const std::vector<std::size_t> perm = {2, 4, 0, 3, 1};
        Tensor zp({static_cast<std::size_t>(n), 4});
        for (int i = 0; i < n; ++i) {
            std::copy(z.data() + perm[i] * 4, z.data() + (perm[i] + 1) * 4, zp.data() + i * 4);
        }
        Tensor ap;
        if (a_hat.defined()) {
            ap = Tensor(a_hat.shape());
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    ap.data()[i * n + j] = a_hat.data()[perm[i] * n + perm[j]];
                }
            }
        }
        Tensor outp = latent_rhs(nullptr, zp, ap, params);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < 4; ++k) {
                CHECK(std::abs(outp.data()[i * 4 + k] - out.data()[perm[i] * 4 + k]) <= 1e-12);
            }
        }
    }

    // A duplicated node (same latent, same couplings) gets the same derivative.
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 29);
    Tensor z({3, 4});
    Rng rng(77);
    for (int k = 0; k < 4; ++k) {
        const double v = rng.uniform(-1.0, 1.0);
        z.data()[0 * 4 + k] = v;
        z.data()[1 * 4 + k] = v;
        z.data()[2 * 4 + k] = rng.uniform(-1.0, 1.0);
    }
    Tensor a({3, 3});
    // Nodes 0 and 1 share couplings to node 2 and to each other symmetrically.
    a.data()[0 * 3 + 2] = a.data()[1 * 3 + 2] = 0.7;
    a.data()[2 * 3 + 0] = a.data()[2 * 3 + 1] = 0.4;
    a.data()[0 * 3 + 1] = a.data()[1 * 3 + 0] = 0.2;
    Tensor out = latent_rhs(nullptr, z, a, params);
    for (int k = 0; k < 4; ++k) CHECK(out.data()[k] == out.data()[4 + k]);
}

TEST_CASE("attention rows are stochastic at every evaluation, any N") {
    ModelConfig cfg = small_cfg(OdeType::AttentionEdge);
    cfg.n_heads = 3;
    ModelParams params = init_params(cfg, 37);
    for (int n : {1, 4}) {
        Tensor z({static_cast<std::size_t>(n), 4});
        Rng rng(5);
        for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.uniform(-2.0, 2.0);
        std::vector<Tensor> sink;
        Tensor out = latent_rhs(nullptr, z, Tensor(), params, &sink);
        CHECK(out.shape() == z.shape());
        REQUIRE(sink.size() == 3);
        for (const Tensor& att : sink) {
            for (int i = 0; i < n; ++i) {
                double row = 0.0;
                for (int j = 0; j < n; ++j) row += att.data()[i * n + j];
                CHECK(std::abs(row - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("rollout: zero weights freeze the latent state") {
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 3);
    for (auto& [name, t] : params.entries()) {
        for (std::size_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
    }
    Tensor z0({4, 4});
    Rng rng(1);
    for (std::size_t i = 0; i < z0.numel(); ++i) z0.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor a({4, 4});
    const auto seq = rollout(nullptr, z0, a, params, 7, 0.05);
    REQUIRE(seq.size() == 7);
    for (const Tensor& z : seq) {
        for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == z0.data()[i]);
    }
}

TEST_CASE("rollout step refinement shows fourth-order convergence") {
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 41);
    const int n = 4;
    Rng rng(2);
    Tensor z0({static_cast<std::size_t>(n), 4});
    for (std::size_t i = 0; i < z0.numel(); ++i) z0.data()[i] = rng.uniform(-0.5, 0.5);
    Tensor a({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a.data()[i * n + j] = i == j ? 0.0 : rng.uniform(0.0, 0.5);
    }
    const double t_end = 0.8;
    auto final_state = [&](int steps) {
        return rollout(nullptr, z0, a, params, steps, t_end / steps).back();
    };
    Tensor c1 = final_state(4);
    Tensor c2 = final_state(8);
    Tensor c4 = final_state(16);
    const double e1 = max_abs_diff(c1, c2);
    const double e2 = max_abs_diff(c2, c4);
    const double ratio = e1 / e2;
    CHECK(ratio >= 8.0);
    CHECK(ratio <= 32.0);
}

TEST_CASE("decode shape and equivariance; loss identities") {
    ModelConfig cfg = small_cfg(OdeType::SelfOnly);
    ModelParams params = init_params(cfg, 51);
    Rng rng(3);
    std::vector<Tensor> seq;
    for (int k = 0; k < 3; ++k) {
        Tensor z({5, 4});
        for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.uniform(-1.0, 1.0);
        seq.push_back(z);
    }
    Tensor pred = decode(nullptr, seq, params);
    CHECK(pred.shape() == std::vector<std::size_t>{3, 5, 1});

    // Identical latent vectors decode identically.
    Tensor z = seq[0];
    for (int k = 0; k < 4; ++k) z.data()[1 * 4 + k] = z.data()[3 * 4 + k];
    Tensor one = decode(nullptr, {z}, params);
    CHECK(one.data()[1] == one.data()[3]);

    // Loss identities: zero at equality, c^2 under constant offset.
    Tensor target(pred.shape(), pred.vec());
    CHECK(prediction_loss(nullptr, pred, target).value() == 0.0);
    Tensor shifted(pred.shape(), pred.vec());
    for (std::size_t i = 0; i < shifted.numel(); ++i) shifted.data()[i] += 0.3;
    CHECK(prediction_loss(nullptr, shifted, target).value() == doctest::Approx(0.09).epsilon(1e-12));

    // Gradient of the mean squared error is 2 (pred - target) / count.
    Tape tape;
    Tensor p = tape.watch(shifted);
    Tensor loss = prediction_loss(&tape, p, target);
    tape.backward(loss);
    Tensor g = tape.grad(p);
    for (std::size_t i = 0; i < g.numel(); ++i) {
        CHECK(g.data()[i] ==
              doctest::Approx(2.0 * 0.3 / static_cast<double>(g.numel())).epsilon(1e-12));
    }
}

TEST_CASE("parameter manifests do not depend on the graph size") {
    for (OdeType ode : {OdeType::StaticEdge, OdeType::AttentionEdge, OdeType::SelfOnly}) {
        ModelConfig cfg = small_cfg(ode);
        ModelParams a = init_params(cfg, 1);
        ModelParams b = init_params(cfg, 1);
        CHECK(params_manifest_json(a) == params_manifest_json(b));
        CHECK(a.parameter_count() == b.parameter_count());
        CHECK(a.parameter_count() > 0);
    }
}

TEST_CASE("end-to-end permutation equivariance for both ODE types") {
    for (OdeType ode : {OdeType::StaticEdge, OdeType::AttentionEdge}) {
        ModelConfig cfg = small_cfg(ode);
        ModelParams params = init_params(cfg, 61);
        const int n = 5;
        Tensor obs = random_obs(n, cfg.t_obs, 1, 71);
        const std::vector<std::size_t> perm = {4, 2, 0, 1, 3};

        ModelForward base = forward_model(nullptr, params, obs, 6, 0.05);
        ModelForward permuted = forward_model(nullptr, params, permute_obs(obs, perm), 6, 0.05);
        double max_err = 0.0;
        for (int t = 0; t < 6; ++t) {
            for (int i = 0; i < n; ++i) {
                max_err = std::max(max_err, std::abs(permuted.pred.data()[t * n + i] -
                                                     base.pred.data()[t * n + perm[i]]));
            }
        }
        CHECK(max_err <= 1e-9);
    }
}

TEST_CASE("SelfOnly predictions ignore the other nodes bitwise") {
    ModelConfig cfg = small_cfg(OdeType::SelfOnly);
    ModelParams params = init_params(cfg, 81);
    const int n = 4;
    Tensor obs = random_obs(n, cfg.t_obs, 1, 91);
    ModelForward base = forward_model(nullptr, params, obs, 5, 0.05);

    Tensor tweaked(obs.shape(), obs.vec());
    for (int t = 0; t < cfg.t_obs; ++t) tweaked.data()[2 * cfg.t_obs + t] += 0.37;
    ModelForward other = forward_model(nullptr, params, tweaked, 5, 0.05);
    for (int t = 0; t < 5; ++t) {
        for (int i = 0; i < n; ++i) {
            if (i == 2) continue;
            CHECK(other.pred.data()[t * n + i] == base.pred.data()[t * n + i]);
        }
    }
}

TEST_CASE("full-model gradient check, static edges") {
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams params = init_params(cfg, 101);
    const int n = 4;
    Tensor obs = random_obs(n, cfg.t_obs, 1, 103);
    Rng rng(7);
    Tensor target({3, static_cast<std::size_t>(n), 1});
    for (std::size_t i = 0; i < target.numel(); ++i) target.data()[i] = rng.uniform(0.0, 1.0);

    auto entries = params.entries();
    std::vector<Tensor> leaves;
    for (auto& [name, t] : entries) leaves.push_back(*t);
    oracles::check_gradients(
        [&](Tape* tape, const std::vector<Tensor>& in) {
            ModelParams p = params;
            auto es = p.entries();
            for (std::size_t k = 0; k < es.size(); ++k) *es[k].second = in[k];
            ModelForward fwd = forward_model(tape, p, obs, 3, 0.1);
            return prediction_loss(tape, fwd.pred, target);
        },
        leaves, 1e-6, 1e-4, 1e-9);
}

TEST_CASE("checkpoint round-trip") {
    ModelConfig cfg = small_cfg(OdeType::AttentionEdge, EncoderType::GT);
    cfg.n_heads = 3;
    ModelParams params = init_params(cfg, 111);
    const auto dir = std::filesystem::temp_directory_path() / "netdyn_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, params);
    ModelParams loaded = load_checkpoint(dir);
    auto a = params.entries();
    auto b = loaded.entries();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].first == b[k].first);
        CHECK(a[k].second->vec() == b[k].second->vec());
    }
    CHECK(loaded.cfg.encoder == EncoderType::GT);
    CHECK(loaded.cfg.ode_type == OdeType::AttentionEdge);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pure-affine combining map is one config flag away") {
    ModelConfig cfg = small_cfg(OdeType::StaticEdge);
    ModelParams bounded = init_params(cfg, 7);
    cfg.f_hat_tanh = false;
    ModelParams affine = init_params(cfg, 7); // same draws, same weights
    Rng rng(3);
    Tensor z({4, 4});
    for (std::size_t i = 0; i < z.numel(); ++i) z.data()[i] = rng.uniform(-1.0, 1.0);
    Tensor a({4, 4});
    for (std::size_t i = 0; i < a.numel(); ++i) a.data()[i] = rng.uniform(-0.5, 0.5);
    for (int i = 0; i < 4; ++i) a.data()[i * 4 + i] = 0.0;
    Tensor bounded_rhs = latent_rhs(nullptr, z, a, bounded);
    Tensor affine_rhs = latent_rhs(nullptr, z, a, affine);
    for (std::size_t i = 0; i < bounded_rhs.numel(); ++i) {
        CHECK(bounded_rhs.data()[i] == std::tanh(affine_rhs.data()[i]));
    }

    // The flag survives a checkpoint round-trip.
    const auto dir = std::filesystem::temp_directory_path() / "netdyn_affine_ckpt";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, affine);
    CHECK(load_checkpoint(dir).cfg.f_hat_tanh == false);
    std::filesystem::remove_all(dir);
}

TEST_CASE("encode validates the observation shape against the config") {
    ModelConfig cfg = small_cfg(OdeType::SelfOnly);
    ModelParams params = init_params(cfg, 3);
    Tensor bad({3, 4, 1}); // t_obs mismatch
    CHECK_THROWS_AS(encode(nullptr, bad, params), ShapeError);
}
