#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdjpt/data.hpp"
#include "mdjpt/dynamics.hpp"
#include "mdjpt/encoder.hpp"
#include "mdjpt/graph.hpp"

namespace mdjpt::model {

struct ModelConfig {
    std::size_t n_channels = 60;  // C
    enc::PatchConfig patch;
    enc::MllaConfig mlla;
    dyn::DynamicsConfig dynamics;

    std::string snapshot() const;  // key=value text, one entry per line
    static ModelConfig from_snapshot(const std::string& text);
};

// The model's graph-bound view for one forward pass. `leaves` keeps the
// per-parameter nodes so gradients can be read back by name after backward.
struct BoundModel {
    std::map<std::string, nn::Var> leaves;
    enc::MllaVars mlla;
    dyn::DynamicsVars dynamics;
};

// Everything the losses need from one window.
struct ForwardOut {
    nn::Var x_hat;    // [C, N1, K1] encoder output
    nn::Var p;        // [C, N1, K1] spatially projected latent
    nn::Var h1;       // [K, N1] transition response
    nn::Var att;      // [K, N1] attention weights
    nn::Var h3;       // [K, N1] attended response
    nn::Var h_isa;    // [K, N1] contrastive embedding
    nn::Var feature;  // [K] temporal mean of h3
};

// Owns the parameter tensors by name; bind() copies the current values into
// a graph as leaves, one tape per step.
class EncoderModel {
public:
    explicit EncoderModel(ModelConfig cfg);

    // Deterministic initialization: fan-in uniform weights, zero biases,
    // layernorm at identity, forget-gate bias biased open.
    void init(std::uint64_t seed);

    BoundModel bind(nn::Graph& g, bool requires_grad) const;
    ForwardOut forward(nn::Graph& g, const BoundModel& bound, const nn::Tensor& window) const;

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::string>& param_names() const { return order_; }
    nn::Tensor& param(const std::string& name);
    const nn::Tensor& param(const std::string& name) const;
    std::size_t param_count() const;

    data::ModelCheckpoint to_checkpoint(std::uint64_t seed, std::uint64_t step) const;
    static EncoderModel from_checkpoint(const data::ModelCheckpoint& ckpt);

private:
    // kind: u = uniform +-1/sqrt(arg), c = constant arg
    struct InitSpec {
        char kind;
        double arg;
    };
    void register_params();
    void add(const std::string& name, std::vector<std::size_t> shape, InitSpec spec);

    ModelConfig cfg_;
    std::vector<std::string> order_;
    std::map<std::string, nn::Tensor> params_;
    std::map<std::string, InitSpec> init_;
};

}  // namespace mdjpt::model
