#include "mdjpt/model.hpp"

#include <cmath>
#include <sstream>

#include "mdjpt/error.hpp"

namespace mdjpt::model {

using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {
// sigmoid(2.1972) ~= 0.9: the forget gate starts mostly open.
constexpr double kForgetBias = 2.1972245773362196;
}  // namespace

std::string ModelConfig::snapshot() const {
    std::ostringstream os;
    os << "n_channels=" << n_channels << "\n";
    os << "patch_len=" << patch.patch_len << "\n";
    os << "patch_stride=" << patch.stride << "\n";
    os << "hidden_dim=" << mlla.hidden_dim << "\n";
    os << "out_dim=" << mlla.out_dim << "\n";
    os << "depth=" << mlla.depth << "\n";
    os << "n_heads=" << mlla.n_heads << "\n";
    os << "conv_kernel=" << mlla.conv_kernel << "\n";
    os << "mlp_hidden=" << mlla.mlp_hidden << "\n";
    os << "kernels_per_dim=" << dynamics.kernels_per_dim << "\n";
    os << "transition_len=" << dynamics.transition_len << "\n";
    os << "dilations=";
    for (std::size_t i = 0; i < dynamics.dilations.size(); ++i)
        os << (i ? "," : "") << dynamics.dilations[i];
    os << "\n";
    os << "attention_len=" << dynamics.attention_len << "\n";
    os << "pooling_len=" << dynamics.pooling_len << "\n";
    os << "softmax_temperature=" << dynamics.softmax_temperature << "\n";
    os << "projector_len=" << dynamics.projector_len << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_snapshot(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("SchemaViolation", "config line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "n_channels") cfg.n_channels = std::stoul(val);
        else if (key == "patch_len") cfg.patch.patch_len = std::stoul(val);
        else if (key == "patch_stride") cfg.patch.stride = std::stoul(val);
        else if (key == "hidden_dim") cfg.mlla.hidden_dim = std::stoul(val);
        else if (key == "out_dim") cfg.mlla.out_dim = std::stoul(val);
        else if (key == "depth") cfg.mlla.depth = std::stoul(val);
        else if (key == "n_heads") cfg.mlla.n_heads = std::stoul(val);
        else if (key == "conv_kernel") cfg.mlla.conv_kernel = std::stoul(val);
        else if (key == "mlp_hidden") cfg.mlla.mlp_hidden = std::stoul(val);
        else if (key == "kernels_per_dim") cfg.dynamics.kernels_per_dim = std::stoul(val);
        else if (key == "transition_len") cfg.dynamics.transition_len = std::stoul(val);
        else if (key == "dilations") {
            cfg.dynamics.dilations.clear();
            std::istringstream ds(val);
            std::string tok;
            while (std::getline(ds, tok, ',')) cfg.dynamics.dilations.push_back(std::stoul(tok));
        } else if (key == "attention_len") cfg.dynamics.attention_len = std::stoul(val);
        else if (key == "pooling_len") cfg.dynamics.pooling_len = std::stoul(val);
        else if (key == "softmax_temperature") cfg.dynamics.softmax_temperature = std::stod(val);
        else if (key == "projector_len") cfg.dynamics.projector_len = std::stoul(val);
        else throw Error("SchemaViolation", "unknown config key: " + key);
    }
    return cfg;
}

EncoderModel::EncoderModel(ModelConfig cfg) : cfg_(std::move(cfg)) { register_params(); }

void EncoderModel::add(const std::string& name, std::vector<std::size_t> shape, InitSpec spec) {
    order_.push_back(name);
    params_.emplace(name, Tensor(std::move(shape)));
    init_.emplace(name, spec);
}

void EncoderModel::register_params() {
    const std::size_t P = cfg_.patch.patch_len;
    const std::size_t H = cfg_.mlla.hidden_dim;
    const std::size_t K1 = cfg_.mlla.out_dim;
    const std::size_t M = cfg_.mlla.mlp_hidden;
    const std::size_t Lc = cfg_.mlla.conv_kernel;
    const std::size_t C = cfg_.n_channels;
    const std::size_t K = cfg_.dynamics.n_kernels(K1);
    const auto u = [](std::size_t fan_in) { return InitSpec{'u', double(fan_in)}; };
    const InitSpec zero{'c', 0.0}, one{'c', 1.0};

    add("mlla.embed.w", {P, H}, u(P));
    add("mlla.embed.b", {H}, zero);
    for (std::size_t i = 0; i < cfg_.mlla.depth; ++i) {
        const std::string b = "mlla.b" + std::to_string(i) + ".";
        add(b + "norm1.g", {H}, one);
        add(b + "norm1.b", {H}, zero);
        add(b + "in.w", {H, H}, u(H));
        add(b + "in.b", {H}, zero);
        add(b + "dw.w", {H, Lc}, u(Lc));
        add(b + "q.w", {H, H}, u(H));
        add(b + "q.b", {H}, zero);
        add(b + "k.w", {H, H}, u(H));
        add(b + "k.b", {H}, zero);
        add(b + "v.w", {H, H}, u(H));
        add(b + "v.b", {H}, zero);
        add(b + "forget.w", {H, H}, u(H));
        add(b + "forget.b", {H}, InitSpec{'c', kForgetBias});
        add(b + "out.w", {H, H}, u(H));
        add(b + "out.b", {H}, zero);
        add(b + "norm2.g", {H}, one);
        add(b + "norm2.b", {H}, zero);
        add(b + "mlp.w1", {H, M}, u(H));
        add(b + "mlp.b1", {M}, zero);
        add(b + "mlp.w2", {M, H}, u(M));
        add(b + "mlp.b2", {H}, zero);
    }
    add("mlla.final_norm.g", {H}, one);
    add("mlla.final_norm.b", {H}, zero);
    add("mlla.proj.w", {H, K1}, u(H));
    add("mlla.proj.b", {K1}, zero);

    add("dyn.ws", {C, C}, u(C));
    add("dyn.wtr", {K, C, cfg_.dynamics.transition_len}, u(C * cfg_.dynamics.transition_len));
    add("dyn.watt", {K, cfg_.dynamics.attention_len}, u(cfg_.dynamics.attention_len));
    add("dyn.mix", {K, K}, u(K));
    add("dyn.isa1", {K, cfg_.dynamics.projector_len}, u(cfg_.dynamics.projector_len));
    add("dyn.isa2", {K, cfg_.dynamics.projector_len}, u(cfg_.dynamics.projector_len));
}

void EncoderModel::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& name : order_) {
        Tensor& t = params_.at(name);
        const InitSpec& spec = init_.at(name);
        if (spec.kind == 'c') {
            std::fill(t.v.begin(), t.v.end(), spec.arg);
        } else {
            const double bound = 1.0 / std::sqrt(spec.arg);
            t.fill_uniform(rng, -bound, bound);
        }
    }
}

BoundModel EncoderModel::bind(Graph& g, bool requires_grad) const {
    BoundModel bm;
    for (const auto& name : order_)
        bm.leaves[name] = g.leaf(params_.at(name), requires_grad);
    const auto at = [&](const std::string& n) { return bm.leaves.at(n); };

    bm.mlla.embed_w = at("mlla.embed.w");
    bm.mlla.embed_b = at("mlla.embed.b");
    for (std::size_t i = 0; i < cfg_.mlla.depth; ++i) {
        const std::string b = "mlla.b" + std::to_string(i) + ".";
        enc::MllaVars::Block blk;
        blk.norm1_g = at(b + "norm1.g");
        blk.norm1_b = at(b + "norm1.b");
        blk.in_w = at(b + "in.w");
        blk.in_b = at(b + "in.b");
        blk.dw_w = at(b + "dw.w");
        blk.q_w = at(b + "q.w");
        blk.q_b = at(b + "q.b");
        blk.k_w = at(b + "k.w");
        blk.k_b = at(b + "k.b");
        blk.v_w = at(b + "v.w");
        blk.v_b = at(b + "v.b");
        blk.forget_w = at(b + "forget.w");
        blk.forget_b = at(b + "forget.b");
        blk.out_w = at(b + "out.w");
        blk.out_b = at(b + "out.b");
        blk.norm2_g = at(b + "norm2.g");
        blk.norm2_b = at(b + "norm2.b");
        blk.mlp_w1 = at(b + "mlp.w1");
        blk.mlp_b1 = at(b + "mlp.b1");
        blk.mlp_w2 = at(b + "mlp.w2");
        blk.mlp_b2 = at(b + "mlp.b2");
        bm.mlla.blocks.push_back(blk);
    }
    bm.mlla.final_norm_g = at("mlla.final_norm.g");
    bm.mlla.final_norm_b = at("mlla.final_norm.b");
    bm.mlla.proj_w = at("mlla.proj.w");
    bm.mlla.proj_b = at("mlla.proj.b");

    bm.dynamics.w_s = at("dyn.ws");
    bm.dynamics.w_tr = at("dyn.wtr");
    bm.dynamics.w_att = at("dyn.watt");
    bm.dynamics.mixing = at("dyn.mix");
    bm.dynamics.w_isa1 = at("dyn.isa1");
    bm.dynamics.w_isa2 = at("dyn.isa2");
    return bm;
}

ForwardOut EncoderModel::forward(Graph& g, const BoundModel& bound,
                                 const Tensor& window) const {
    if (window.dim(0) != cfg_.n_channels)
        throw Error("DimensionMismatch", "window channel count does not match model");
    ForwardOut out;
    out.x_hat = enc::encode_channels(g, window, bound.mlla, cfg_.mlla, cfg_.patch);
    out.p = dyn::spatial_project(g, out.x_hat, bound.dynamics.w_s);
    out.h1 = dyn::transition_conv(g, out.p, bound.dynamics, cfg_.dynamics);
    auto att = dyn::local_attention(g, out.h1, bound.dynamics, cfg_.dynamics);
    out.att = att.weights;
    out.h3 = att.h3;
    out.h_isa = dyn::isa_projector(g, out.h3, bound.dynamics, cfg_.dynamics);
    out.feature = dyn::extract_window_feature(g, out.h3);
    return out;
}

Tensor& EncoderModel::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("UnknownParameter", name);
    return it->second;
}

const Tensor& EncoderModel::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("UnknownParameter", name);
    return it->second;
}

std::size_t EncoderModel::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

data::ModelCheckpoint EncoderModel::to_checkpoint(std::uint64_t seed, std::uint64_t step) const {
    data::ModelCheckpoint ckpt;
    ckpt.params = params_;
    ckpt.config_snapshot = cfg_.snapshot();
    ckpt.seed = seed;
    ckpt.step = step;
    return ckpt;
}

EncoderModel EncoderModel::from_checkpoint(const data::ModelCheckpoint& ckpt) {
    EncoderModel m(ModelConfig::from_snapshot(ckpt.config_snapshot));
    for (const auto& name : m.order_) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end()) throw Error("UnknownParameter", "checkpoint missing " + name);
        if (it->second.shape != m.params_.at(name).shape)
            throw Error("DimensionMismatch", "checkpoint shape for " + name);
        m.params_.at(name) = it->second;
    }
    if (ckpt.params.size() != m.order_.size())
        throw Error("SchemaViolation", "checkpoint has extra parameters");
    return m;
}

}  // namespace mdjpt::model
