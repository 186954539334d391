#include "mdjpt/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdjpt/error.hpp"

namespace mdjpt::pretrain {

using nn::Graph;
using nn::Tensor;
using nn::Var;

std::string PretrainConfig::snapshot() const {
    std::ostringstream os;
    os << "epochs=" << epochs << "\n";
    os << "iterations_per_epoch=" << iterations_per_epoch << "\n";
    os << "learning_rate=" << learning_rate << "\n";
    os << "weight_decay=" << weight_decay << "\n";
    os << "lambda_cda=" << weights.lambda_cda << "\n";
    os << "tau=" << weights.tau << "\n";
    os << "isa_weight=" << weights.isa_weight << "\n";
    os << "seed=" << seed << "\n";
    os << "window_samples=" << window_samples << "\n";
    os << "vm_cap=" << vm_cap << "\n";
    os << "grad_clip=" << grad_clip << "\n";
    os << "unaligned=" << (unaligned ? 1 : 0) << "\n";
    return os.str();
}

PretrainConfig PretrainConfig::from_snapshot(const std::string& text) {
    PretrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("SchemaViolation", "config line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "epochs") cfg.epochs = std::stoul(val);
        else if (key == "iterations_per_epoch") cfg.iterations_per_epoch = std::stoul(val);
        else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
        else if (key == "lambda_cda") cfg.weights.lambda_cda = std::stod(val);
        else if (key == "tau") cfg.weights.tau = std::stod(val);
        else if (key == "isa_weight") cfg.weights.isa_weight = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "window_samples") cfg.window_samples = std::stoul(val);
        else if (key == "vm_cap") cfg.vm_cap = std::stoul(val);
        else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
        else if (key == "unaligned") cfg.unaligned = std::stoi(val) != 0;
        else throw Error("SchemaViolation", "unknown config key: " + key);
    }
    return cfg;
}

std::size_t AlignedBatch::n_windows() const {
    std::size_t n = 0;
    for (const auto& ds : datasets) n += 2 * ds.pairs.size();
    return n;
}

const data::TrialEpoch& EpochCache::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, data::read_epoch(path)).first;
    return it->second;
}

namespace {

Tensor slice_window(const data::TrialEpoch& epoch, std::size_t start, std::size_t w) {
    const std::size_t C = epoch.channels();
    Tensor out({C, w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < w; ++t) out.at(c, t) = epoch.data.at(c, start + t);
    return out;
}

}  // namespace

AlignedBatch sample_aligned_batch(const std::vector<data::DatasetManifest>& manifests,
                                  EpochCache& store, const PretrainConfig& cfg,
                                  std::mt19937_64& rng) {
    AlignedBatch batch;
    for (const auto& man : manifests) {
        if (man.n_subjects < 2)
            throw Error("InsufficientSubjects", man.dataset_id + " has fewer than two subjects");
        DatasetBatch ds;
        ds.dataset_id = man.dataset_id;
        std::uniform_int_distribution<std::size_t> pick(0, man.n_subjects - 1);
        ds.subject_a = pick(rng);
        std::uniform_int_distribution<std::size_t> pick_other(0, man.n_subjects - 2);
        ds.subject_b = pick_other(rng);
        if (ds.subject_b >= ds.subject_a) ++ds.subject_b;

        std::size_t n_trials = man.n_trials_per_subject;
        if (cfg.vm_cap > 0) n_trials = std::min(n_trials, cfg.vm_cap);
        for (std::size_t v = 0; v < n_trials; ++v) {
            const auto& ea = store.get(man.epoch_path(ds.subject_a, v));
            const auto& eb = store.get(man.epoch_path(ds.subject_b, v));
            const std::size_t n = std::min(ea.samples(), eb.samples());
            if (n < cfg.window_samples)
                throw Error("TrialTooShort", man.dataset_id + " trial " + std::to_string(v));
            std::uniform_int_distribution<std::size_t> start_dist(0, n - cfg.window_samples);
            AlignedPair pair;
            pair.trial_index = v;
            const std::size_t start = start_dist(rng);
            const std::size_t start_b = cfg.unaligned ? start_dist(rng) : start;
            pair.window_start_s = double(start) / man.sampling_rate_hz;
            pair.window_start_b_s = double(start_b) / man.sampling_rate_hz;
            pair.window_a = slice_window(ea, start, cfg.window_samples);
            pair.window_b = slice_window(eb, start_b, cfg.window_samples);
            ds.pairs.push_back(std::move(pair));
        }
        batch.datasets.push_back(std::move(ds));
    }
    return batch;
}

void adam_update(model::EncoderModel& m, const std::map<std::string, nn::Tensor>& grads,
                 AdamState& state, double lr, double weight_decay) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.t;
    const double bc1 = 1.0 - std::pow(b1, double(state.t));
    const double bc2 = 1.0 - std::pow(b2, double(state.t));
    for (const auto& name : m.param_names()) {
        const Tensor& g = grads.at(name);
        Tensor& theta = m.param(name);
        auto [mi, _a] = state.m.try_emplace(name, Tensor(theta.shape));
        auto [vi, _b] = state.v.try_emplace(name, Tensor(theta.shape));
        Tensor& mo = mi->second;
        Tensor& vo = vi->second;
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            mo[i] = b1 * mo[i] + (1.0 - b1) * g[i];
            vo[i] = b2 * vo[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = mo[i] / bc1;
            const double vhat = vo[i] / bc2;
            theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * theta[i]);
        }
    }
}

LossBreakdown pretrain_step(model::EncoderModel& m, AdamState& opt, const AlignedBatch& batch,
                            const PretrainConfig& cfg) {
    Graph g;
    auto bound = m.bind(g, true);
    const std::size_t k1 = m.config().mlla.out_dim;

    std::vector<std::vector<Var>> centroids;  // [subject over all datasets][dim]
    std::vector<losses::DatasetEmbeddings> embeds;
    for (const auto& ds : batch.datasets) {
        losses::DatasetEmbeddings emb;
        std::vector<std::vector<Var>> covs_a(k1), covs_b(k1);
        for (const auto& pair : ds.pairs) {
            auto out_a = m.forward(g, bound, pair.window_a);
            auto out_b = m.forward(g, bound, pair.window_b);
            for (std::size_t d = 0; d < k1; ++d) {
                covs_a[d].push_back(losses::trial_covariance(g, g.slice_plane(out_a.p, d)));
                covs_b[d].push_back(losses::trial_covariance(g, g.slice_plane(out_b.p, d)));
            }
            emb.a.push_back(out_a.h_isa);
            emb.b.push_back(out_b.h_isa);
        }
        std::vector<Var> cent_a, cent_b;
        for (std::size_t d = 0; d < k1; ++d) {
            cent_a.push_back(losses::subject_centroid(g, covs_a[d]));
            cent_b.push_back(losses::subject_centroid(g, covs_b[d]));
        }
        centroids.push_back(std::move(cent_a));
        centroids.push_back(std::move(cent_b));
        embeds.push_back(std::move(emb));
    }

    Var l_cda = losses::cda_loss(g, centroids);
    Var l_isa = losses::isa_loss(g, embeds, cfg.weights.tau);
    Var total = cfg.weights.isa_weight == 1.0
                    ? losses::total_loss(g, l_isa, l_cda, cfg.weights.lambda_cda)
                    : g.add(g.scale(l_isa, cfg.weights.isa_weight),
                            g.scale(l_cda, cfg.weights.lambda_cda));

    LossBreakdown out{l_isa->val[0], l_cda->val[0], total->val[0]};
    if (!std::isfinite(out.l_isa)) throw Error("NonFiniteLoss", "isa_loss");
    if (!std::isfinite(out.l_cda)) throw Error("NonFiniteLoss", "cda_loss");
    if (!std::isfinite(out.total)) throw Error("NonFiniteLoss", "total_loss");

    g.backward(total);

    std::map<std::string, Tensor> grads;
    for (const auto& name : m.param_names()) grads.emplace(name, bound.leaves.at(name)->grad);
    if (cfg.grad_clip > 0) {
        double sq = 0;
        for (const auto& [name, t] : grads)
            for (double x : t.v) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
            const double s = cfg.grad_clip / norm;
            for (auto& [name, t] : grads)
                for (double& x : t.v) x *= s;
        }
    }
    adam_update(m, grads, opt, cfg.learning_rate, cfg.weight_decay);
    return out;
}

data::ModelCheckpoint pretrain(model::EncoderModel& m, const PretrainConfig& cfg,
                               const std::vector<data::DatasetManifest>& manifests,
                               const std::string& out_dir) {
    if (manifests.empty()) throw Error("EmptyList", "pretrain needs at least one dataset");
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir + "/train_log.jsonl");
    if (!log) throw Error("IoFailure", "cannot open loss log under " + out_dir);

    EpochCache store;
    std::mt19937_64 rng(cfg.seed);
    AdamState opt;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t it = 0; it < cfg.iterations_per_epoch; ++it) {
            AlignedBatch batch = sample_aligned_batch(manifests, store, cfg, rng);
            LossBreakdown l = pretrain_step(m, opt, batch, cfg);
            ++step;
            log << "{\"step\":" << step << ",\"epoch\":" << epoch + 1 << ",\"l_isa\":" << l.l_isa
                << ",\"l_cda\":" << l.l_cda << ",\"l\":" << l.total << "}\n";
        }
        log.flush();
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch + 1);
        data::save_checkpoint(out_dir + "/" + name, m.to_checkpoint(cfg.seed, step));
    }
    data::ModelCheckpoint final_ckpt = m.to_checkpoint(cfg.seed, step);
    data::save_checkpoint(out_dir + "/final.ckpt", final_ckpt);
    return final_ckpt;
}

}  // namespace mdjpt::pretrain
