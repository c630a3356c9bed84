#pragma once

// The latent graph ODE family: trajectory encoders (FFW / NRI / GT / GT-DG),
// a latent ODE with static inferred edges, attention-driven time-varying
// edges, or self-dynamics only (the NODE baseline), and a per-node decoder.
// Parameter count depends only on the architecture, never on the number of
// nodes, so a trained model transfers across graph sizes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "netdyn/dynamics.hpp"
#include "netdyn/tensor.hpp"

namespace netdyn {

enum class EncoderType { FFW, NRI, GT, GTDG };
enum class OdeType { StaticEdge, AttentionEdge, SelfOnly };
enum class Activation { ReLU, GELU, Tanh };

std::string to_string(EncoderType);
std::string to_string(OdeType);
std::string to_string(Activation);
EncoderType encoder_from_string(const std::string&);
OdeType ode_type_from_string(const std::string&);
Activation activation_from_string(const std::string&);

struct ModelConfig {
    int latent_dim = 16;
    int n_heads = 3;
    EncoderType encoder = EncoderType::FFW;
    OdeType ode_type = OdeType::StaticEdge;
    int t_obs = 25;
    int feature_dim = 1;
    Activation activation = Activation::GELU;
    bool f_hat_tanh = true; // bound the combining map; false = pure affine
};

// Two-layer feedforward block: y = W2 act(W1 x + b1) + b2. Hidden width
// equals the latent dimension throughout.
struct Ffw {
    Tensor w1, b1, w2, b2;
    bool present() const { return w1.defined(); }
};

struct AttHead {
    Tensor wk, wq, wv;
    bool present() const { return wk.defined(); }
};

struct ModelParams {
    ModelConfig cfg;
    Ffw f_node;                 // per-node trajectory encoder
    Ffw nri_edge, nri_edge2node; // NRI encoder message passing
    AttHead enc_att;            // GT / GT-DG encoder attention
    Ffw f_edge;                 // static edge head: [z_j || z_i] -> scalar
    Ffw ode_f;                  // latent self-dynamics
    Ffw ode_g;                  // latent interaction on [z_i || z_j]
    std::vector<AttHead> ode_att; // per-head attention (time-varying edges)
    Tensor out_w, out_b;        // combining affine, followed by tanh
    Ffw dec;                    // latent -> observable decoder

    std::vector<std::pair<std::string, Tensor*>> entries();
    std::vector<std::pair<std::string, const Tensor*>> entries() const;
    std::size_t parameter_count() const;

    // Copy whose tensors share storage with this one but are registered as
    // tape leaves; gradients are retrieved per entry after backward().
    ModelParams bind(Tape& tape) const;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct EncodeResult {
    Tensor z0;    // [N, d]
    Tensor a_hat; // [N, N], defined only for the static-edge ODE
};

// obs is [N, t_obs, D]; shape is validated against the config.
EncodeResult encode(Tape* tape, const Tensor& obs, const ModelParams& params);

// dz/dt for one latent state [N, d]. a_hat is required for StaticEdge and
// ignored otherwise. When attention_sink is non-null every attention matrix
// evaluated (one per head per call) is appended to it.
Tensor latent_rhs(Tape* tape, const Tensor& z, const Tensor& a_hat, const ModelParams& params,
                  std::vector<Tensor>* attention_sink = nullptr);

// Fixed-step RK4 through the tape (discretize-then-optimize). Element k of
// the result is the latent state at prediction step k+1.
std::vector<Tensor> rollout(Tape* tape, const Tensor& z0, const Tensor& a_hat,
                            const ModelParams& params, int n_steps, double dt,
                            std::vector<Tensor>* attention_sink = nullptr);

// Per-(node, step) decoding to the observable space: [n_steps, N, D].
Tensor decode(Tape* tape, const std::vector<Tensor>& z_seq, const ModelParams& params);

// Mean squared error over the prediction window.
Tensor prediction_loss(Tape* tape, const Tensor& pred, const Tensor& target);

struct ModelForward {
    Tensor z0, a_hat, pred;
};

ModelForward forward_model(Tape* tape, const ModelParams& params, const Tensor& obs, int n_steps,
                           double dt, std::vector<Tensor>* attention_sink = nullptr);

// Windowing helpers between trajectory storage and model tensors.
Tensor observation_window(const TrajectorySet& traj, int t_obs);            // [N, t_obs, D]
Tensor prediction_target(const TrajectorySet& traj, int t_obs);             // [T-t_obs, N, D]

// Checkpoints: JSON manifest (names, shapes), raw little-endian float64 blob
// per tensor in manifest order, and the model config.
std::string params_manifest_json(const ModelParams& params);
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

} // namespace netdyn
