#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "mdjpt/data.hpp"
#include "mdjpt/losses.hpp"
#include "mdjpt/model.hpp"

namespace mdjpt::pretrain {

struct PretrainConfig {
    std::size_t epochs = 20;
    std::size_t iterations_per_epoch = 256;
    double learning_rate = 5e-4;
    double weight_decay = 1e-4;
    losses::LossWeights weights;
    std::uint64_t seed = 0;
    std::size_t window_samples = 625;  // 5 s at 125 Hz
    std::size_t vm_cap = 0;            // trials per subject per batch, 0 = all
    double grad_clip = 0;              // global-norm clip, 0 = off
    bool unaligned = false;            // ablation: break positive-pair alignment

    std::string snapshot() const;
    static PretrainConfig from_snapshot(const std::string& text);
};

// One dataset's contribution to a batch: a distinct subject pair and one
// stimulus-aligned window per trial and subject.
struct AlignedPair {
    std::size_t trial_index = 0;
    double window_start_s = 0;
    double window_start_b_s = 0;  // equals window_start_s unless unaligned
    nn::Tensor window_a;          // [C x W]
    nn::Tensor window_b;
};

struct DatasetBatch {
    std::string dataset_id;
    std::size_t subject_a = 0, subject_b = 0;
    std::vector<AlignedPair> pairs;
};

struct AlignedBatch {
    std::vector<DatasetBatch> datasets;
    std::size_t n_windows() const;
};

// Read-through cache over the epoch store; pretraining revisits every trial
// each epoch.
class EpochCache {
public:
    const data::TrialEpoch& get(const std::string& path);
    void clear() { cache_.clear(); }

private:
    std::map<std::string, data::TrialEpoch> cache_;
};

AlignedBatch sample_aligned_batch(const std::vector<data::DatasetManifest>& manifests,
                                  EpochCache& store, const PretrainConfig& cfg,
                                  std::mt19937_64& rng);

struct AdamState {
    std::map<std::string, nn::Tensor> m, v;
    std::size_t t = 0;
};

// One decoupled-weight-decay Adam update; beta1 0.9, beta2 0.999, eps 1e-8.
void adam_update(model::EncoderModel& m, const std::map<std::string, nn::Tensor>& grads,
                 AdamState& state, double lr, double weight_decay);

struct LossBreakdown {
    double l_isa = 0;
    double l_cda = 0;
    double total = 0;
};

// Forward + backward over one aligned batch and a single optimizer step.
// Reported losses are the pre-update values.
LossBreakdown pretrain_step(model::EncoderModel& m, AdamState& opt, const AlignedBatch& batch,
                            const PretrainConfig& cfg);

// Full loop: epochs x iterations steps, a checkpoint per epoch plus final.ckpt,
// and a line-delimited loss log train_log.jsonl under out_dir.
data::ModelCheckpoint pretrain(model::EncoderModel& m, const PretrainConfig& cfg,
                               const std::vector<data::DatasetManifest>& manifests,
                               const std::string& out_dir);

}  // namespace mdjpt::pretrain
