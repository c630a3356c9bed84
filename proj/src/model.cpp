#include "netdyn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "netdyn/io_util.hpp"
#include "netdyn/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

namespace netdyn {

std::string to_string(EncoderType e) {
    switch (e) {
    case EncoderType::FFW: return "FFW";
    case EncoderType::NRI: return "NRI";
    case EncoderType::GT: return "GT";
    case EncoderType::GTDG: return "GT-DG";
    }
    throw ConfigError("unknown encoder enum value");
}

std::string to_string(OdeType o) {
    switch (o) {
    case OdeType::StaticEdge: return "StaticEdge";
    case OdeType::AttentionEdge: return "AttentionEdge";
    case OdeType::SelfOnly: return "SelfOnly";
    }
    throw ConfigError("unknown ode_type enum value");
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::GELU: return "gelu";
    case Activation::Tanh: return "tanh";
    }
    throw ConfigError("unknown activation enum value");
}

EncoderType encoder_from_string(const std::string& s) {
    if (s == "FFW") return EncoderType::FFW;
    if (s == "NRI") return EncoderType::NRI;
    if (s == "GT") return EncoderType::GT;
    if (s == "GT-DG" || s == "GTDG") return EncoderType::GTDG;
    throw ConfigError("unknown encoder: " + s);
}

OdeType ode_type_from_string(const std::string& s) {
    if (s == "StaticEdge") return OdeType::StaticEdge;
    if (s == "AttentionEdge") return OdeType::AttentionEdge;
    if (s == "SelfOnly") return OdeType::SelfOnly;
    throw ConfigError("unknown ode_type: " + s);
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "gelu") return Activation::GELU;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation: " + s);
}

namespace {

Tensor apply_activation(Tape* tape, const Tensor& x, Activation act) {
    switch (act) {
    case Activation::ReLU: return relu(tape, x);
    case Activation::GELU: return gelu(tape, x);
    case Activation::Tanh: return tanh_op(tape, x);
    }
    throw ConfigError("unknown activation enum value");
}

Tensor ffw_apply(Tape* tape, const Ffw& f, const Tensor& x, Activation act) {
    Tensor h = add(tape, matmul(tape, x, f.w1, false, true), f.b1);
    h = apply_activation(tape, h, act);
    return add(tape, matmul(tape, h, f.w2, false, true), f.b2);
}

// FFW over all ordered (receiver, sender) pairs; output row r*Ns + s. slot1
// fills the first half of the concatenated input and slot2 the second; when
// slot1_is_col, slot1 is indexed by the sender (column) and slot2 by the
// receiver (row), and vice versa otherwise.
Tensor pair_ffw(Tape* tape, const Ffw& f, const Tensor& slot1, const Tensor& slot2,
                bool slot1_is_col, Activation act) {
    const std::size_t d1 = slot1.dim(1);
    const std::size_t d2 = slot2.dim(1);
    Tensor w1a = slice(tape, f.w1, 1, 0, d1);
    Tensor w1b = slice(tape, f.w1, 1, d1, d2);
    Tensor p = matmul(tape, slot1, w1a, false, true);
    Tensor q = matmul(tape, slot2, w1b, false, true);
    Tensor pre = slot1_is_col ? cross_add(tape, q, p) : cross_add(tape, p, q);
    pre = add(tape, pre, f.b1);
    Tensor h = apply_activation(tape, pre, act);
    return add(tape, matmul(tape, h, f.w2, false, true), f.b2);
}

// [N*N, 1] constant mask that zeroes (i, i) pairs.
Tensor offdiag_mask(std::size_t n) {
    Tensor m({n * n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m.data()[i * n + j] = i == j ? 0.0 : 1.0;
    }
    return m;
}

Ffw make_ffw(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
    auto xavier = [&rng](std::size_t rows, std::size_t cols) {
        Tensor w({rows, cols});
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (std::size_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-a, a);
        return w;
    };
    Ffw f;
    f.w1 = xavier(hidden, in);
    f.b1 = Tensor({hidden});
    f.w2 = xavier(out, hidden);
    f.b2 = Tensor({out});
    return f;
}

AttHead make_head(Rng& rng, std::size_t d) {
    auto xavier = [&rng, d]() {
        Tensor w({d, d});
        const double a = std::sqrt(6.0 / static_cast<double>(2 * d));
        for (std::size_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-a, a);
        return w;
    };
    AttHead h;
    h.wk = xavier();
    h.wq = xavier();
    h.wv = xavier();
    return h;
}

void push_ffw(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& name, Ffw& f) {
    if (!f.present()) return;
    out.emplace_back(name + ".w1", &f.w1);
    out.emplace_back(name + ".b1", &f.b1);
    out.emplace_back(name + ".w2", &f.w2);
    out.emplace_back(name + ".b2", &f.b2);
}

void push_head(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& name,
               AttHead& h) {
    if (!h.present()) return;
    out.emplace_back(name + ".wk", &h.wk);
    out.emplace_back(name + ".wq", &h.wq);
    out.emplace_back(name + ".wv", &h.wv);
}

} // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::entries() {
    std::vector<std::pair<std::string, Tensor*>> out;
    push_ffw(out, "enc.f_node", f_node);
    push_ffw(out, "enc.nri_edge", nri_edge);
    push_ffw(out, "enc.nri_edge2node", nri_edge2node);
    push_head(out, "enc.att", enc_att);
    push_ffw(out, "enc.f_edge", f_edge);
    push_ffw(out, "ode.f", ode_f);
    push_ffw(out, "ode.g", ode_g);
    for (std::size_t h = 0; h < ode_att.size(); ++h) {
        push_head(out, "ode.att" + std::to_string(h), ode_att[h]);
    }
    if (out_w.defined()) {
        out.emplace_back("ode.out.w", &out_w);
        out.emplace_back("ode.out.b", &out_b);
    }
    push_ffw(out, "dec", dec);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::entries() const {
    auto mut = const_cast<ModelParams*>(this)->entries();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries()) n += t->numel();
    return n;
}

ModelParams ModelParams::bind(Tape& tape) const {
    ModelParams bound = *this;
    for (auto& [name, t] : bound.entries()) *t = tape.watch(*t);
    return bound;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.latent_dim < 1 || cfg.n_heads < 1 || cfg.t_obs < 1 || cfg.feature_dim < 1) {
        throw ConfigError("model config requires latent_dim, n_heads, t_obs, feature_dim >= 1");
    }
    const std::size_t d = static_cast<std::size_t>(cfg.latent_dim);
    const std::size_t obs_in = cfg.encoder == EncoderType::GTDG
                                   ? static_cast<std::size_t>(cfg.feature_dim)
                                   : static_cast<std::size_t>(cfg.t_obs) * cfg.feature_dim;
    Rng rng(seed);
    ModelParams p;
    p.cfg = cfg;
    p.f_node = make_ffw(rng, obs_in, d, d);
    if (cfg.encoder == EncoderType::NRI) {
        p.nri_edge = make_ffw(rng, 2 * d, d, d);
        p.nri_edge2node = make_ffw(rng, d, d, d);
    }
    if (cfg.encoder == EncoderType::GT || cfg.encoder == EncoderType::GTDG) {
        p.enc_att = make_head(rng, d);
    }
    if (cfg.ode_type == OdeType::StaticEdge) {
        p.f_edge = make_ffw(rng, 2 * d, d, 1);
    }
    p.ode_f = make_ffw(rng, d, d, d);
    if (cfg.ode_type != OdeType::SelfOnly) {
        p.ode_g = make_ffw(rng, 2 * d, d, d);
    }
    if (cfg.ode_type == OdeType::AttentionEdge) {
        for (int h = 0; h < cfg.n_heads; ++h) p.ode_att.push_back(make_head(rng, d));
        const std::size_t cat = d * static_cast<std::size_t>(cfg.n_heads);
        p.out_w = Tensor({d, cat});
        const double a = std::sqrt(6.0 / static_cast<double>(d + cat));
        for (std::size_t i = 0; i < p.out_w.numel(); ++i) p.out_w.data()[i] = rng.uniform(-a, a);
    } else {
        p.out_w = Tensor({d, d});
        const double a = std::sqrt(6.0 / static_cast<double>(2 * d));
        for (std::size_t i = 0; i < p.out_w.numel(); ++i) p.out_w.data()[i] = rng.uniform(-a, a);
    }
    p.out_b = Tensor({d});
    p.dec = make_ffw(rng, d, d, static_cast<std::size_t>(cfg.feature_dim));
    return p;
}

EncodeResult encode(Tape* tape, const Tensor& obs, const ModelParams& params) {
    const ModelConfig& cfg = params.cfg;
    if (obs.rank() != 3 || obs.dim(1) != static_cast<std::size_t>(cfg.t_obs) ||
        obs.dim(2) != static_cast<std::size_t>(cfg.feature_dim)) {
        throw ShapeError("encode: observation shape " + shape_str(obs.shape()) +
                         " does not match config [N, " + std::to_string(cfg.t_obs) + ", " +
                         std::to_string(cfg.feature_dim) + "]");
    }
    const std::size_t n = obs.dim(0);
    const std::size_t t_obs = obs.dim(1);
    Tensor z0;
    switch (cfg.encoder) {
    case EncoderType::FFW: {
        Tensor x = reshape(tape, obs, {n, t_obs * obs.dim(2)});
        z0 = ffw_apply(tape, params.f_node, x, cfg.activation);
        break;
    }
    case EncoderType::NRI: {
        Tensor x = reshape(tape, obs, {n, t_obs * obs.dim(2)});
        Tensor h = ffw_apply(tape, params.f_node, x, cfg.activation);
        Tensor pairs = pair_ffw(tape, params.nri_edge, h, h, true, cfg.activation);
        pairs = mul(tape, pairs, offdiag_mask(n));
        Tensor summed = sum_axis(tape, reshape(tape, pairs, {n, n, pairs.dim(1)}), 1);
        z0 = ffw_apply(tape, params.nri_edge2node, summed, cfg.activation);
        break;
    }
    case EncoderType::GT: {
        Tensor x = reshape(tape, obs, {n, t_obs * obs.dim(2)});
        Tensor h = ffw_apply(tape, params.f_node, x, cfg.activation);
        Tensor k = matmul(tape, h, params.enc_att.wk, false, true);
        Tensor q = matmul(tape, h, params.enc_att.wq, false, true);
        Tensor v = matmul(tape, h, params.enc_att.wv, false, true);
        Tensor att = softmax(tape, leaky_relu(tape, matmul(tape, q, k, false, true)), 1);
        Tensor msg = apply_activation(tape, matmul(tape, att, v), cfg.activation);
        z0 = add(tape, h, msg);
        break;
    }
    case EncoderType::GTDG: {
        // Observation graph: one node per (i, t); neighbors share a timestamp
        // (i != j) or a trajectory (i == j), plus the node itself.
        Tensor x = reshape(tape, obs, {n * t_obs, obs.dim(2)});
        Tensor h = ffw_apply(tape, params.f_node, x, cfg.activation);
        Tensor k = matmul(tape, h, params.enc_att.wk, false, true);
        Tensor q = matmul(tape, h, params.enc_att.wq, false, true);
        Tensor v = matmul(tape, h, params.enc_att.wv, false, true);
        Tensor logits = leaky_relu(tape, matmul(tape, q, k, false, true));
        const std::size_t nt = n * t_obs;
        Tensor mask({nt, nt});
        for (std::size_t r = 0; r < nt; ++r) {
            const std::size_t i1 = r / t_obs, t1 = r % t_obs;
            for (std::size_t c = 0; c < nt; ++c) {
                const std::size_t i2 = c / t_obs, t2 = c % t_obs;
                const bool allowed = (i1 != i2 && t1 == t2) || i1 == i2;
                mask.data()[r * nt + c] = allowed ? 0.0 : -1e30;
            }
        }
        Tensor att = softmax(tape, add(tape, logits, mask), 1);
        Tensor msg = apply_activation(tape, matmul(tape, att, v), cfg.activation);
        Tensor z_all = add(tape, h, msg);
        std::vector<std::size_t> readout(n);
        for (std::size_t i = 0; i < n; ++i) readout[i] = i * t_obs + (t_obs - 1);
        z0 = take_rows(tape, z_all, readout);
        break;
    }
    }
    EncodeResult out;
    out.z0 = z0;
    if (cfg.ode_type == OdeType::StaticEdge) {
        Tensor flat = pair_ffw(tape, params.f_edge, z0, z0, true, cfg.activation);
        flat = mul(tape, flat, offdiag_mask(n));
        out.a_hat = reshape(tape, flat, {n, n});
    }
    return out;
}

Tensor latent_rhs(Tape* tape, const Tensor& z, const Tensor& a_hat, const ModelParams& params,
                  std::vector<Tensor>* attention_sink) {
    const ModelConfig& cfg = params.cfg;
    const std::size_t n = z.dim(0);
    const std::size_t d = z.dim(1);
    Tensor self = ffw_apply(tape, params.ode_f, z, cfg.activation);
    switch (cfg.ode_type) {
    case OdeType::SelfOnly: {
        Tensor aff = add(tape, matmul(tape, self, params.out_w, false, true), params.out_b);
        return cfg.f_hat_tanh ? tanh_op(tape, aff) : aff;
    }
    case OdeType::StaticEdge: {
        if (!a_hat.defined()) throw ShapeError("latent_rhs: static-edge model requires a_hat");
        Tensor g_flat = pair_ffw(tape, params.ode_g, z, z, false, cfg.activation);
        Tensor weighted = mul(tape, g_flat, reshape(tape, a_hat, {n * n, 1}));
        Tensor interaction = sum_axis(tape, reshape(tape, weighted, {n, n, d}), 1);
        Tensor pre = add(tape, self, interaction);
        Tensor aff = add(tape, matmul(tape, pre, params.out_w, false, true), params.out_b);
        return cfg.f_hat_tanh ? tanh_op(tape, aff) : aff;
    }
    case OdeType::AttentionEdge: {
        std::vector<Tensor> heads;
        for (const AttHead& head : params.ode_att) {
            Tensor k = matmul(tape, z, head.wk, false, true);
            Tensor q = matmul(tape, z, head.wq, false, true);
            Tensor v = matmul(tape, z, head.wv, false, true);
            Tensor att = softmax(tape, leaky_relu(tape, matmul(tape, q, k, false, true)), 1);
            if (attention_sink != nullptr) attention_sink->push_back(att);
            Tensor g_flat = pair_ffw(tape, params.ode_g, z, v, false, cfg.activation);
            Tensor weighted = mul(tape, g_flat, reshape(tape, att, {n * n, 1}));
            heads.push_back(sum_axis(tape, reshape(tape, weighted, {n, n, d}), 1));
        }
        Tensor cat = heads.size() == 1 ? heads[0] : concat(tape, heads, 1);
        Tensor aff = add(tape, matmul(tape, cat, params.out_w, false, true), params.out_b);
        Tensor combined = add(tape, self, aff);
        return cfg.f_hat_tanh ? tanh_op(tape, combined) : combined;
    }
    }
    throw ConfigError("unknown ode_type enum value");
}

std::vector<Tensor> rollout(Tape* tape, const Tensor& z0, const Tensor& a_hat,
                            const ModelParams& params, int n_steps, double dt,
                            std::vector<Tensor>* attention_sink) {
    if (!(dt > 0.0)) throw ConfigError("rollout: dt must be positive");
    std::vector<Tensor> z_seq;
    z_seq.reserve(n_steps);
    Tensor z = z0;
    for (int step = 0; step < n_steps; ++step) {
        try {
            Tensor k1 = latent_rhs(tape, z, a_hat, params, attention_sink);
            Tensor k2 = latent_rhs(tape, add(tape, z, scale(tape, k1, dt / 2)), a_hat, params,
                                   attention_sink);
            Tensor k3 = latent_rhs(tape, add(tape, z, scale(tape, k2, dt / 2)), a_hat, params,
                                   attention_sink);
            Tensor k4 = latent_rhs(tape, add(tape, z, scale(tape, k3, dt)), a_hat, params,
                                   attention_sink);
            Tensor incr = add(tape, add(tape, k1, k4), scale(tape, add(tape, k2, k3), 2.0));
            z = add(tape, z, scale(tape, incr, dt / 6.0));
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (rollout step " + std::to_string(step) +
                               ")");
        }
        z_seq.push_back(z);
    }
    return z_seq;
}

Tensor decode(Tape* tape, const std::vector<Tensor>& z_seq, const ModelParams& params) {
    if (z_seq.empty()) throw ShapeError("decode: empty latent sequence");
    const std::size_t n = z_seq[0].dim(0);
    Tensor cat = z_seq.size() == 1 ? z_seq[0] : concat(tape, z_seq, 0);
    Tensor flat = ffw_apply(tape, params.dec, cat, params.cfg.activation);
    return reshape(tape, flat, {z_seq.size(), n, static_cast<std::size_t>(params.cfg.feature_dim)});
}

Tensor prediction_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("loss: prediction shape " + shape_str(pred.shape()) +
                         " does not match target " + shape_str(target.shape()));
    }
    Tensor diff = sub(tape, pred, target);
    return mean_all(tape, mul(tape, diff, diff));
}

ModelForward forward_model(Tape* tape, const ModelParams& params, const Tensor& obs, int n_steps,
                           double dt, std::vector<Tensor>* attention_sink) {
    ModelForward out;
    EncodeResult enc = encode(tape, obs, params);
    out.z0 = enc.z0;
    out.a_hat = enc.a_hat;
    std::vector<Tensor> z_seq =
        rollout(tape, enc.z0, enc.a_hat, params, n_steps, dt, attention_sink);
    out.pred = decode(tape, z_seq, params);
    return out;
}

Tensor observation_window(const TrajectorySet& traj, int t_obs) {
    if (t_obs < 1 || t_obs > traj.n_steps) throw ConfigError("observation_window: bad t_obs");
    Tensor obs({static_cast<std::size_t>(traj.n_nodes), static_cast<std::size_t>(t_obs),
                static_cast<std::size_t>(traj.n_features)});
    double* out = obs.data();
    for (int i = 0; i < traj.n_nodes; ++i) {
        for (int t = 0; t < t_obs; ++t) {
            for (int f = 0; f < traj.n_features; ++f) *out++ = traj.state(i, t, f);
        }
    }
    return obs;
}

Tensor prediction_target(const TrajectorySet& traj, int t_obs) {
    if (t_obs < 1 || t_obs >= traj.n_steps) throw ConfigError("prediction_target: bad t_obs");
    const int n_steps = traj.n_steps - t_obs;
    Tensor target({static_cast<std::size_t>(n_steps), static_cast<std::size_t>(traj.n_nodes),
                   static_cast<std::size_t>(traj.n_features)});
    double* out = target.data();
    for (int t = 0; t < n_steps; ++t) {
        for (int i = 0; i < traj.n_nodes; ++i) {
            for (int f = 0; f < traj.n_features; ++f) *out++ = traj.state(i, t_obs + t, f);
        }
    }
    return target;
}

std::string params_manifest_json(const ModelParams& params) {
    nlohmann::json j;
    j["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : params.entries()) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t->shape();
        j["tensors"].push_back(entry);
    }
    return j.dump(2) + "\n";
}

std::string model_config_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["latent_dim"] = cfg.latent_dim;
    j["n_heads"] = cfg.n_heads;
    j["encoder"] = to_string(cfg.encoder);
    j["ode_type"] = to_string(cfg.ode_type);
    j["t_obs"] = cfg.t_obs;
    j["feature_dim"] = cfg.feature_dim;
    j["activation"] = to_string(cfg.activation);
    j["f_hat_tanh"] = cfg.f_hat_tanh;
    return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed model config: ") + e.what());
    }
    ModelConfig cfg;
    cfg.latent_dim = j.at("latent_dim").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.encoder = encoder_from_string(j.at("encoder").get<std::string>());
    cfg.ode_type = ode_type_from_string(j.at("ode_type").get<std::string>());
    cfg.t_obs = j.at("t_obs").get<int>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.activation = activation_from_string(j.at("activation").get<std::string>());
    if (j.contains("f_hat_tanh")) cfg.f_hat_tanh = j.at("f_hat_tanh").get<bool>();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "params_manifest.json", params_manifest_json(params));
    write_text_file(dir / "model_config.json", model_config_json(params.cfg));
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open for writing: " + (dir / "params.bin").string());
    for (const auto& [name, t] : params.entries()) {
        bin.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * sizeof(double)));
    }
    if (!bin) throw IoError("write failed: " + (dir / "params.bin").string());
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
    const ModelConfig cfg = model_config_from_json(read_text_file(dir / "model_config.json"));
    ModelParams params = init_params(cfg, 0);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(dir / "params_manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed params manifest: ") + e.what());
    }
    auto entries = params.entries();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != entries.size()) {
        throw IoError("checkpoint manifest does not match model config");
    }
    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw IoError("cannot open for reading: " + (dir / "params.bin").string());
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& [name, t] = entries[k];
        if (tensors[k].at("name").get<std::string>() != name ||
            tensors[k].at("shape").get<std::vector<std::size_t>>() != t->shape()) {
            throw IoError("checkpoint manifest does not match model config at " + name);
        }
        bin.read(reinterpret_cast<char*>(t->data()),
                 static_cast<std::streamsize>(t->numel() * sizeof(double)));
        if (!bin) throw IoError("truncated checkpoint blob: " + (dir / "params.bin").string());
    }
    return params;
}

} // namespace netdyn
