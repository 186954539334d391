// mdjpt: corpus prep, synthetic generation, pre-training, and evaluation.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mdjpt/eval.hpp"
#include "mdjpt/losses.hpp"
#include "mdjpt/montage.hpp"
#include "mdjpt/prep.hpp"
#include "mdjpt/pretrain.hpp"
#include "mdjpt/synth.hpp"

namespace fs = std::filesystem;
using namespace mdjpt;
using nn::Graph;
using nn::Tensor;
using nn::Var;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingFile", path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Every run leaves one of these beside its outputs; a run is reproducible
// from the recorded command, config, seed, and paths alone.
struct RunManifest {
    std::string command;
    std::string config_snapshot;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs, outputs;
    std::string checkpoint_hash;  // content hash of the checkpoint used/produced
};

void write_run_manifest(const std::string& out_dir, const RunManifest& rm) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "run_manifest.txt");
    if (!out) throw Error("IoFailure", "cannot write run manifest under " + out_dir);
    out << "schema_version: 1\n";
    out << "command: " << rm.command << "\n";
    out << "seed: " << rm.seed << "\n";
    if (!rm.checkpoint_hash.empty()) out << "checkpoint_hash: " << rm.checkpoint_hash << "\n";
    out << "inputs:\n";
    for (const auto& p : rm.inputs) out << "  " << p << "\n";
    out << "outputs:\n";
    for (const auto& p : rm.outputs) out << "  " << p << "\n";
    out << "config:\n";
    std::istringstream is(rm.config_snapshot);
    std::string line;
    while (std::getline(is, line)) out << "  " << line << "\n";
}

std::string hash_hex(const std::string& path) {
    std::ostringstream os;
    os << std::hex << data::file_hash(path);
    return os.str();
}

// resolve a manifest path against MDJPT_DATA_ROOT when it is not found as given
std::string resolve_manifest(const std::string& path) {
    if (fs::exists(path)) return path;
    const fs::path rooted = fs::path(data::data_root()) / path;
    if (fs::exists(rooted)) return rooted.string();
    return path;  // let the loader produce the MissingFile error
}

// ---------------------------------------------------------------- subcommands

int run_prep(const std::string& manifest_path, const std::string& out_dir, double rate,
             double low, double high, const std::string& montage_path) {
    prep::PrepConfig cfg;
    cfg.target_rate_hz = rate;
    cfg.bandpass_low_hz = low;
    cfg.bandpass_high_hz = high;
    const montage::MontageTable table =
        montage_path.empty() ? montage::standard_1020_60() : montage::load_tsv(montage_path);

    const std::string resolved = resolve_manifest(manifest_path);
    auto manifest = data::load_manifest(resolved);
    auto prepped = prep::prep_dataset(manifest, cfg, table, out_dir);
    std::cout << "prepped " << prepped.n_subjects * prepped.n_trials_per_subject
              << " epochs -> " << out_dir << "\n";

    RunManifest rm;
    rm.command = "prep";
    std::ostringstream cs;
    cs << "target_rate_hz=" << rate << "\nbandpass_low_hz=" << low << "\nbandpass_high_hz="
       << high << "\n";
    rm.config_snapshot = cs.str();
    rm.inputs = {resolved};
    rm.outputs = {(fs::path(out_dir) / "manifest.txt").string()};
    write_run_manifest(out_dir, rm);
    return 0;
}

int run_synth(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed,
              bool seed_given) {
    synth::SynthSpec spec;
    if (!spec_path.empty()) spec = synth::SynthSpec::from_snapshot(read_file(spec_path));
    if (seed_given) spec.seed = seed;
    spec.validate();
    auto manifests = synth::generate_corpus(spec, out_dir);
    std::cout << "generated " << manifests.size() << " datasets under " << out_dir << "\n";

    RunManifest rm;
    rm.command = "synth";
    rm.config_snapshot = spec.snapshot();
    rm.seed = spec.seed;
    if (!spec_path.empty()) rm.inputs = {spec_path};
    rm.outputs = manifests;
    write_run_manifest(out_dir, rm);
    return 0;
}

int run_pretrain(const CLI::App* cmd, std::string config_path, std::string model_config_path,
                 std::vector<std::string> dataset_paths, std::string exclude_id,
                 bool allow_target, std::string out_dir, pretrain::PretrainConfig flags) {
    // precedence: explicit flags > config file > built-in defaults
    pretrain::PretrainConfig cfg;
    if (!config_path.empty()) cfg = pretrain::PretrainConfig::from_snapshot(read_file(config_path));
    if (cmd->count("--epochs")) cfg.epochs = flags.epochs;
    if (cmd->count("--iterations")) cfg.iterations_per_epoch = flags.iterations_per_epoch;
    if (cmd->count("--lr")) cfg.learning_rate = flags.learning_rate;
    if (cmd->count("--wd")) cfg.weight_decay = flags.weight_decay;
    if (cmd->count("--lambda")) cfg.weights.lambda_cda = flags.weights.lambda_cda;
    if (cmd->count("--tau")) cfg.weights.tau = flags.weights.tau;
    if (cmd->count("--isa-weight")) cfg.weights.isa_weight = flags.weights.isa_weight;
    if (cmd->count("--seed")) cfg.seed = flags.seed;
    if (cmd->count("--window")) cfg.window_samples = flags.window_samples;
    if (cmd->count("--vm-cap")) cfg.vm_cap = flags.vm_cap;
    if (cmd->count("--clip")) cfg.grad_clip = flags.grad_clip;
    if (cmd->count("--unaligned")) cfg.unaligned = true;

    model::ModelConfig mcfg;
    if (!model_config_path.empty())
        mcfg = model::ModelConfig::from_snapshot(read_file(model_config_path));

    std::vector<data::DatasetManifest> manifests;
    std::vector<std::string> resolved;
    for (const auto& p : dataset_paths) {
        resolved.push_back(resolve_manifest(p));
        manifests.push_back(data::load_manifest(resolved.back()));
        if (!exclude_id.empty() && manifests.back().dataset_id == exclude_id && !allow_target)
            throw Error("TargetDatasetInTraining",
                        "dataset '" + exclude_id +
                            "' is the evaluation target; pass --allow-target to override");
    }

    model::EncoderModel m(mcfg);
    m.init(cfg.seed);
    std::cout << "pretraining " << m.param_count() << " parameters on " << manifests.size()
              << " datasets, " << cfg.epochs << " x " << cfg.iterations_per_epoch
              << " steps\n";
    auto ckpt = pretrain::pretrain(m, cfg, manifests, out_dir);
    const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
    std::cout << "final checkpoint: " << final_path << " (step " << ckpt.step << ")\n";

    RunManifest rm;
    rm.command = "pretrain";
    rm.config_snapshot = cfg.snapshot() + mcfg.snapshot();
    rm.seed = cfg.seed;
    rm.inputs = resolved;
    rm.outputs = {final_path, (fs::path(out_dir) / "train_log.jsonl").string()};
    rm.checkpoint_hash = hash_hex(final_path);
    write_run_manifest(out_dir, rm);
    return 0;
}

// shared by finetune and zeroshot: per-window features for every trial
std::vector<eval::TrialFeatures> target_features(const data::DatasetManifest& manifest,
                                                 const std::string& ckpt_path, double window_s,
                                                 double stride_s, bool de_baseline,
                                                 model::ModelConfig* cfg_out) {
    const std::size_t window = std::size_t(window_s * manifest.sampling_rate_hz + 0.5);
    const std::size_t stride = std::size_t(stride_s * manifest.sampling_rate_hz + 0.5);
    if (de_baseline) return eval::extract_de_features(manifest, window, stride);
    auto ckpt = data::load_checkpoint(ckpt_path);
    auto m = model::EncoderModel::from_checkpoint(ckpt);
    if (cfg_out) *cfg_out = m.config();
    return eval::extract_features(manifest, m, window, stride);
}

int run_finetune(const std::string& manifest_path, const std::string& ckpt_path,
                 const std::string& out_dir, double window_s, double stride_s, bool de_baseline,
                 eval::FewShotConfig fs_cfg) {
    const std::string resolved = resolve_manifest(manifest_path);
    auto manifest = data::load_manifest(resolved);
    model::ModelConfig mcfg;
    auto trials = target_features(manifest, ckpt_path, window_s, stride_s, de_baseline, &mcfg);
    auto result = eval::few_shot_protocol(trials, manifest.n_subjects, fs_cfg);

    fs::create_directories(out_dir);
    std::ofstream rep(fs::path(out_dir) / "metrics.txt");
    rep << "protocol: few-shot\n";
    rep << "features: " << (de_baseline ? "de" : "encoder") << "\n";
    rep << "n_train_subjects: " << result.n_train_subjects << "\n";
    rep << "repeats: " << result.repeats.size() << "\n";
    rep << "accuracy_mean: " << result.accuracy_mean << "\n";
    rep << "accuracy_std: " << result.accuracy_std << "\n";
    rep << "f1_mean: " << result.f1_mean << "\n";
    rep << "auroc_mean: " << result.auroc_mean << "\n";
    for (std::size_t r = 0; r < result.repeats.size(); ++r) {
        rep << "repeat " << r << ":\n";
        std::istringstream is(result.repeats[r].to_text());
        std::string line;
        while (std::getline(is, line)) rep << "  " << line << "\n";
    }
    std::cout << "few-shot accuracy " << result.accuracy_mean << " +- " << result.accuracy_std
              << " over " << result.repeats.size() << " repeats\n";

    RunManifest rm;
    rm.command = "finetune";
    std::ostringstream cs;
    cs << "window_s=" << window_s << "\nstride_s=" << stride_s << "\nrepeats="
       << fs_cfg.repeats << "\ntrain_fraction=" << fs_cfg.train_fraction << "\nhidden_units="
       << fs_cfg.classifier.hidden_units << "\nepochs=" << fs_cfg.classifier.epochs
       << "\nbatch_size=" << fs_cfg.classifier.batch_size << "\nlearning_rate="
       << fs_cfg.classifier.learning_rate << "\nweight_decay="
       << fs_cfg.classifier.weight_decay << "\nfeatures=" << (de_baseline ? "de" : "encoder")
       << "\n";
    rm.config_snapshot = cs.str() + (de_baseline ? "" : mcfg.snapshot());
    rm.seed = fs_cfg.seed;
    rm.inputs = {resolved};
    if (!de_baseline) {
        rm.inputs.push_back(ckpt_path);
        rm.checkpoint_hash = hash_hex(ckpt_path);
    }
    rm.outputs = {(fs::path(out_dir) / "metrics.txt").string()};
    write_run_manifest(out_dir, rm);
    return 0;
}

int run_zeroshot(const std::string& manifest_path, const std::string& ckpt_path,
                 const std::string& out_dir, double window_s, double stride_s,
                 bool de_baseline) {
    const std::string resolved = resolve_manifest(manifest_path);
    auto manifest = data::load_manifest(resolved);
    model::ModelConfig mcfg;
    auto trials = target_features(manifest, ckpt_path, window_s, stride_s, de_baseline, &mcfg);

    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (const auto& t : trials)
        for (const auto& w : t.windows) {
            feats.push_back(w);
            labels.push_back(t.label);
        }
    const double acc = eval::zero_shot_nn(feats, labels);
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    std::size_t top = 0;
    for (const auto& [l, n] : counts) top = std::max(top, n);
    const double majority = double(top) / double(labels.size());

    fs::create_directories(out_dir);
    std::ofstream rep(fs::path(out_dir) / "metrics.txt");
    rep << "protocol: zero-shot\n";
    rep << "features: " << (de_baseline ? "de" : "encoder") << "\n";
    rep << "n_samples: " << labels.size() << "\n";
    rep << "accuracy: " << acc << "\n";
    rep << "majority_rate: " << majority << "\n";
    std::cout << "zero-shot accuracy " << acc << " over " << labels.size()
              << " windows (majority rate " << majority << ")\n";

    RunManifest rm;
    rm.command = "zeroshot";
    std::ostringstream cs;
    cs << "window_s=" << window_s << "\nstride_s=" << stride_s << "\nfeatures="
       << (de_baseline ? "de" : "encoder") << "\n";
    rm.config_snapshot = cs.str() + (de_baseline ? "" : mcfg.snapshot());
    rm.inputs = {resolved};
    if (!de_baseline) {
        rm.inputs.push_back(ckpt_path);
        rm.checkpoint_hash = hash_hex(ckpt_path);
    }
    rm.outputs = {(fs::path(out_dir) / "metrics.txt").string()};
    write_run_manifest(out_dir, rm);
    return 0;
}

int run_report(const std::string& run_dir) {
    bool found = false;
    const fs::path dir(run_dir);
    if (fs::exists(dir / "run_manifest.txt")) {
        std::cout << "== run manifest ==\n" << read_file((dir / "run_manifest.txt").string());
        found = true;
    }
    if (fs::exists(dir / "train_log.jsonl")) {
        std::ifstream log(dir / "train_log.jsonl");
        std::string line, first, last;
        std::size_t rows = 0;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            if (rows == 0) first = line;
            last = line;
            ++rows;
        }
        std::cout << "== training log ==\n";
        std::cout << "steps: " << rows << "\n";
        if (rows) {
            std::cout << "first: " << first << "\n";
            std::cout << "last:  " << last << "\n";
        }
        found = true;
    }
    if (fs::exists(dir / "metrics.txt")) {
        std::cout << "== metrics ==\n" << read_file((dir / "metrics.txt").string());
        found = true;
    }
    if (!found)
        throw Error("MissingFile", "no run artifacts (run_manifest.txt, train_log.jsonl, "
                                   "metrics.txt) under " + run_dir);
    return 0;
}

// ------------------------------------------------------------------ gradcheck

using BuildFn = std::function<Var(Graph&, std::vector<Var>&)>;

double eval_scalar(std::vector<Tensor>& params, const BuildFn& build) {
    Graph g;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(g.leaf(p, true));
    return build(g, leaves)->val[0];
}

double fd_gradcheck(std::vector<Tensor> params, const BuildFn& build, double step) {
    Graph g;
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(g.leaf(p, true));
    g.backward(build(g, leaves));
    double worst = 0;
    for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (std::size_t i = 0; i < params[pi].numel(); ++i) {
            const double keep = params[pi][i];
            params[pi][i] = keep + step;
            const double fp = eval_scalar(params, build);
            params[pi][i] = keep - step;
            const double fm = eval_scalar(params, build);
            params[pi][i] = keep;
            const double num = (fp - fm) / (2.0 * step);
            const double ana = leaves[pi]->grad[i];
            worst = std::max(worst, std::abs(ana - num) /
                                        std::max(1e-6, std::abs(ana) + std::abs(num)));
        }
    return worst;
}

Tensor randn(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& v : t.v) v = nd(rng);
    return t;
}

double check_cda(double step) {
    std::mt19937_64 rng(101);
    std::vector<Tensor> params;  // 2 subjects x 2 trials x 2 latent dims, [C x N1]
    for (int i = 0; i < 8; ++i) params.push_back(randn({3, 6}, rng));
    auto build = [](Graph& g, std::vector<Var>& p) {
        std::vector<std::vector<Var>> centroids(2);
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t d = 0; d < 2; ++d) {
                std::vector<Var> covs = {losses::trial_covariance(g, p[s * 4 + d * 2]),
                                         losses::trial_covariance(g, p[s * 4 + d * 2 + 1])};
                centroids[s].push_back(losses::subject_centroid(g, covs));
            }
        return losses::cda_loss(g, centroids);
    };
    return fd_gradcheck(std::move(params), build, step);
}

double check_isa(double step) {
    std::mt19937_64 rng(102);
    std::vector<Tensor> params;  // M=2 datasets, v_m=3, embeddings [2 x 4]
    for (int i = 0; i < 12; ++i) params.push_back(randn({2, 4}, rng));
    auto build = [](Graph& g, std::vector<Var>& p) {
        std::vector<losses::DatasetEmbeddings> ds(2);
        for (std::size_t m = 0; m < 2; ++m)
            for (std::size_t v = 0; v < 3; ++v) {
                ds[m].a.push_back(p[m * 6 + v]);
                ds[m].b.push_back(p[m * 6 + 3 + v]);
            }
        return losses::isa_loss(g, ds, 0.07);
    };
    return fd_gradcheck(std::move(params), build, step);
}

double check_mkmmd(double step) {
    std::mt19937_64 rng(103);
    std::vector<Tensor> params;
    for (int i = 0; i < 7; ++i) params.push_back(randn({4}, rng));
    auto build = [](Graph& g, std::vector<Var>& p) {
        std::vector<Var> a(p.begin(), p.begin() + 4), b(p.begin() + 4, p.end());
        return losses::mkmmd_loss(g, a, b, {0.5, 1.0, 2.0});
    };
    return fd_gradcheck(std::move(params), build, step);
}

double check_classifier(double step) {
    std::mt19937_64 rng(104);
    const std::size_t n = 6, in = 3, hid = 4, ncls = 2;
    Tensor x = randn({n, in}, rng);
    std::vector<int> y(n);
    for (auto& l : y) l = int(rng() % ncls);
    std::vector<Tensor> params = {randn({in, hid}, rng, 0.5), randn({hid}, rng, 0.1),
                                  randn({hid}, rng, 0.1),     randn({hid}, rng, 0.1),
                                  randn({hid, ncls}, rng, 0.5), randn({ncls}, rng, 0.1)};
    params[2].v.assign(hid, 1.0);  // gamma near identity keeps the check well-scaled
    auto build = [x, y](Graph& g, std::vector<Var>& p) {
        std::vector<double> bm, bv;
        Var h = g.linear(g.constant(x), p[0], p[1]);
        Var a = g.relu(g.batchnorm_train(h, p[2], p[3], 1e-5, &bm, &bv));
        return g.softmax_cross_entropy(g.linear(a, p[4], p[5]), y);
    };
    return fd_gradcheck(std::move(params), build, step);
}

// the full encoder -> dynamics -> Eq.-8 objective chain on a miniature model
double check_chain(double step) {
    model::ModelConfig cfg;
    cfg.n_channels = 2;
    cfg.patch.patch_len = 25;
    cfg.patch.stride = 25;
    cfg.mlla.hidden_dim = 4;
    cfg.mlla.out_dim = 2;
    cfg.mlla.depth = 1;
    cfg.mlla.n_heads = 2;
    cfg.mlla.mlp_hidden = 4;
    cfg.dynamics.kernels_per_dim = 2;
    cfg.dynamics.dilations = {1};
    cfg.dynamics.attention_len = 3;
    cfg.dynamics.pooling_len = 3;
    model::EncoderModel m(cfg);
    m.init(105);

    std::mt19937_64 rng(106);
    std::vector<Tensor> windows;  // one dataset, v_m=2, two subjects
    for (int i = 0; i < 4; ++i) windows.push_back(randn({2, 50}, rng, 0.5));

    losses::LossWeights w;
    auto loss_of = [&](Graph& g, const model::BoundModel& bound) {
        const std::size_t k1 = cfg.mlla.out_dim;
        std::vector<std::vector<Var>> centroids;
        losses::DatasetEmbeddings emb;
        std::vector<std::vector<Var>> covs_a(k1), covs_b(k1);
        for (int v = 0; v < 2; ++v) {
            auto oa = m.forward(g, bound, windows[v]);
            auto ob = m.forward(g, bound, windows[2 + v]);
            for (std::size_t d = 0; d < k1; ++d) {
                covs_a[d].push_back(losses::trial_covariance(g, g.slice_plane(oa.p, d)));
                covs_b[d].push_back(losses::trial_covariance(g, g.slice_plane(ob.p, d)));
            }
            emb.a.push_back(oa.h_isa);
            emb.b.push_back(ob.h_isa);
        }
        std::vector<Var> ca, cb;
        for (std::size_t d = 0; d < k1; ++d) {
            ca.push_back(losses::subject_centroid(g, covs_a[d]));
            cb.push_back(losses::subject_centroid(g, covs_b[d]));
        }
        centroids.push_back(ca);
        centroids.push_back(cb);
        Var l_cda = losses::cda_loss(g, centroids);
        Var l_isa = losses::isa_loss(g, {emb}, w.tau);
        return losses::total_loss(g, l_isa, l_cda, w.lambda_cda);
    };

    // analytic pass
    Graph g;
    auto bound = m.bind(g, true);
    g.backward(loss_of(g, bound));

    auto eval_total = [&]() {
        Graph gg;
        auto b = m.bind(gg, false);
        return loss_of(gg, b)->val[0];
    };

    double worst = 0;
    for (const auto& name : m.param_names()) {
        Tensor& t = m.param(name);
        const Tensor& grad = bound.leaves.at(name)->grad;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double keep = t[i];
            t[i] = keep + step;
            const double fp = eval_total();
            t[i] = keep - step;
            const double fm = eval_total();
            t[i] = keep;
            const double num = (fp - fm) / (2.0 * step);
            worst = std::max(worst, std::abs(grad[i] - num) /
                                        std::max(1e-6, std::abs(grad[i]) + std::abs(num)));
        }
    }
    return worst;
}

int run_gradcheck(double step, double tol) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Row {
        const char* name;
        double err;
    };
    std::vector<Row> rows = {
        {"cda_loss", check_cda(step)},       {"isa_loss", check_isa(step)},
        {"mkmmd_loss", check_mkmmd(step)},   {"mlp_classifier", check_classifier(step)},
        {"encoder_dynamics_chain", check_chain(step)},
    };
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool ok = true;
    std::cout << "component                 max_rel_err   status\n";
    for (const auto& r : rows) {
        const bool pass = r.err < tol;
        ok = ok && pass;
        std::cout << r.name;
        for (std::size_t i = std::strlen(r.name); i < 26; ++i) std::cout << ' ';
        std::cout.precision(3);
        std::cout << std::scientific << r.err << "      " << (pass ? "pass" : "FAIL") << "\n";
        std::cout.unsetf(std::ios::scientific);
    }
    std::cout << "elapsed: " << secs << " s\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-dataset joint pre-training for EEG emotion recognition"};
    app.allow_extras(true);  // so an unknown subcommand can be reported by name

    bool deterministic = false;
    std::size_t jobs = 1;
    app.add_flag("--deterministic", deterministic,
                 "serialize all work and fix reduction order (already the default path)");
    app.add_option("--jobs", jobs, "worker threads for embarrassingly parallel stages")
        ->check(CLI::PositiveNumber);

    // prep
    auto* prep_cmd = app.add_subcommand("prep", "preprocess a dataset to the 60-channel store");
    std::string prep_manifest, prep_out, prep_montage;
    double prep_rate = 125.0, prep_low = 0.5, prep_high = 47.0;
    prep_cmd->add_option("--manifest", prep_manifest, "input dataset manifest")->required();
    prep_cmd->add_option("--out", prep_out, "output directory")->required();
    prep_cmd->add_option("--rate", prep_rate, "target sampling rate (Hz)");
    prep_cmd->add_option("--low", prep_low, "bandpass low edge (Hz)");
    prep_cmd->add_option("--high", prep_high, "bandpass high edge (Hz)");
    prep_cmd->add_option("--montage", prep_montage, "montage tsv (default: built-in 10-20)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-dataset corpus");
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 0;
    synth_cmd->add_option("--spec", synth_spec, "spec file (key=value, defaults when omitted)");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "override the spec seed");

    // pretrain
    auto* pre_cmd = app.add_subcommand("pretrain", "joint pre-training on several datasets");
    std::string pre_config, pre_model_config, pre_exclude, pre_out;
    std::vector<std::string> pre_datasets;
    bool pre_allow_target = false;
    pretrain::PretrainConfig pre_flags;
    pre_cmd->add_option("--config", pre_config, "pretrain config file (key=value)");
    pre_cmd->add_option("--model-config", pre_model_config, "model config file (key=value)");
    pre_cmd->add_option("--datasets", pre_datasets, "training dataset manifests")
        ->required()
        ->delimiter(',');
    pre_cmd->add_option("--exclude", pre_exclude, "held-out target dataset_id");
    pre_cmd->add_flag("--allow-target", pre_allow_target,
                      "permit training on the excluded target dataset");
    pre_cmd->add_option("--out", pre_out, "checkpoint/log directory")->required();
    pre_cmd->add_option("--epochs", pre_flags.epochs, "training epochs");
    pre_cmd->add_option("--iterations", pre_flags.iterations_per_epoch, "steps per epoch");
    pre_cmd->add_option("--lr", pre_flags.learning_rate, "learning rate");
    pre_cmd->add_option("--wd", pre_flags.weight_decay, "decoupled weight decay");
    pre_cmd->add_option("--lambda", pre_flags.weights.lambda_cda, "CDA loss weight");
    pre_cmd->add_option("--tau", pre_flags.weights.tau, "NT-Xent temperature");
    pre_cmd->add_option("--isa-weight", pre_flags.weights.isa_weight,
                        "ISA loss weight (0 trains on the CDA term alone)");
    pre_cmd->add_option("--seed", pre_flags.seed, "RNG seed");
    pre_cmd->add_option("--window", pre_flags.window_samples, "window length (samples)");
    pre_cmd->add_option("--vm-cap", pre_flags.vm_cap, "max trials per subject per batch");
    pre_cmd->add_option("--clip", pre_flags.grad_clip, "global-norm gradient clip");
    pre_cmd->add_flag("--unaligned", "ablation: sample positive pairs without alignment");

    // finetune
    auto* ft_cmd = app.add_subcommand("finetune", "few-shot subject-split evaluation");
    std::string ft_manifest, ft_ckpt, ft_out;
    double ft_window = 5.0, ft_stride = 2.0;
    bool ft_de = false;
    eval::FewShotConfig ft_cfg;
    ft_cmd->add_option("--manifest", ft_manifest, "target dataset manifest")->required();
    ft_cmd->add_option("--checkpoint", ft_ckpt, "pretrained encoder checkpoint");
    ft_cmd->add_option("--out", ft_out, "report directory")->required();
    ft_cmd->add_option("--window-s", ft_window, "feature window (s)");
    ft_cmd->add_option("--stride-s", ft_stride, "feature stride (s)");
    ft_cmd->add_flag("--de-baseline", ft_de, "use DE features instead of the encoder");
    ft_cmd->add_option("--repeats", ft_cfg.repeats, "random split repeats");
    ft_cmd->add_option("--seed", ft_cfg.seed, "split seed");
    ft_cmd->add_option("--hidden", ft_cfg.classifier.hidden_units, "MLP hidden units");
    ft_cmd->add_option("--epochs", ft_cfg.classifier.epochs, "MLP epochs");
    ft_cmd->add_option("--batch", ft_cfg.classifier.batch_size, "MLP batch size");
    ft_cmd->add_option("--lr", ft_cfg.classifier.learning_rate, "MLP learning rate");
    ft_cmd->add_option("--wd", ft_cfg.classifier.weight_decay, "MLP weight decay");

    // zeroshot
    auto* zs_cmd = app.add_subcommand("zeroshot", "nearest-neighbor transfer evaluation");
    std::string zs_manifest, zs_ckpt, zs_out;
    double zs_window = 5.0, zs_stride = 2.0;
    bool zs_de = false;
    zs_cmd->add_option("--manifest", zs_manifest, "target dataset manifest")->required();
    zs_cmd->add_option("--checkpoint", zs_ckpt, "pretrained encoder checkpoint");
    zs_cmd->add_option("--out", zs_out, "report directory")->required();
    zs_cmd->add_option("--window-s", zs_window, "feature window (s)");
    zs_cmd->add_option("--stride-s", zs_stride, "feature stride (s)");
    zs_cmd->add_flag("--de-baseline", zs_de, "use DE features instead of the encoder");

    // report
    auto* rep_cmd = app.add_subcommand("report", "summarize a run directory");
    std::string rep_dir;
    rep_cmd->add_option("--run", rep_dir, "run directory")->required();

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    double gc_step = 1e-4, gc_tol = 1e-4;
    gc_cmd->add_option("--step", gc_step, "central-difference step");
    gc_cmd->add_option("--tol", gc_tol, "max relative error tolerance");

    try {
        app.parse(argc, argv);
        (void)deterministic;  // all code paths are single-threaded and seed-driven
        (void)jobs;
        if (prep_cmd->parsed())
            return run_prep(prep_manifest, prep_out, prep_rate, prep_low, prep_high,
                            prep_montage);
        if (synth_cmd->parsed())
            return run_synth(synth_spec, synth_out, synth_seed, synth_cmd->count("--seed") > 0);
        if (pre_cmd->parsed())
            return run_pretrain(pre_cmd, pre_config, pre_model_config, pre_datasets,
                                pre_exclude, pre_allow_target, pre_out, pre_flags);
        if (ft_cmd->parsed()) {
            if (!ft_de && ft_ckpt.empty())
                throw Error("MissingCheckpoint", "--checkpoint required without --de-baseline");
            return run_finetune(ft_manifest, ft_ckpt, ft_out, ft_window, ft_stride, ft_de,
                                ft_cfg);
        }
        if (zs_cmd->parsed()) {
            if (!zs_de && zs_ckpt.empty())
                throw Error("MissingCheckpoint", "--checkpoint required without --de-baseline");
            return run_zeroshot(zs_manifest, zs_ckpt, zs_out, zs_window, zs_stride, zs_de);
        }
        if (rep_cmd->parsed()) return run_report(rep_dir);
        if (gc_cmd->parsed()) return run_gradcheck(gc_step, gc_tol);
        if (!app.remaining().empty()) {
            std::cerr << "error: UnknownSubcommand: " << app.remaining().front() << "\n";
            return 1;
        }
        std::cerr << "error: MissingSubcommand: expected one of prep, synth, pretrain, "
                     "finetune, zeroshot, report, gradcheck\n";
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.get_name() << ": " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
