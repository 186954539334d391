#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdjpt/tensor.hpp"

namespace mdjpt::data {

// One subject's multichannel EEG for one stimulus trial.
struct TrialEpoch {
    nn::Tensor data;  // [channels x samples], microvolts
    std::vector<std::string> channel_names;
    double sampling_rate_hz = 0;
    std::string subject_id, trial_id, dataset_id;

    std::size_t channels() const { return data.dim(0); }
    std::size_t samples() const { return data.dim(1); }
    void validate() const;  // shape/finite checks
};

// One fixed-length slice of a trial, the unit the encoder consumes.
struct EpochWindow {
    nn::Tensor data;  // [C x T]
    std::string trial_id;
    double window_start_s = 0;
    int trial_index = -1;
};

struct DatasetManifest {
    std::string dataset_id;
    double sampling_rate_hz = 0;
    std::vector<std::string> channel_names;
    std::size_t n_subjects = 0;
    std::size_t n_trials_per_subject = 0;                  // v_m
    std::map<std::size_t, int> emotion_labels;             // trial index -> class id
    std::map<std::pair<std::size_t, std::size_t>, std::string> paths;  // (subject, trial)
    std::string root_dir;  // resolved base for relative paths

    std::string epoch_path(std::size_t subject, std::size_t trial) const;
    int label(std::size_t trial) const;
    int n_classes() const;
};

// Epoch binary format: 64-byte header (magic "MDJPT1\0\0", version u32,
// channels u32, samples u32, rate f64, zero padding), then row-major
// little-endian float32 samples.
void write_epoch(const std::string& path, const TrialEpoch& epoch);
TrialEpoch read_epoch(const std::string& path);
void read_epoch_header(const std::string& path, std::uint32_t* channels,
                       std::uint32_t* samples, double* rate);

DatasetManifest load_manifest(const std::string& path, bool check_files = true);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Default corpus root, from MDJPT_DATA_ROOT when set.
std::string data_root();

// All learnable parameters plus run metadata, bit-exact on round trip.
struct ModelCheckpoint {
    std::map<std::string, nn::Tensor> params;
    std::string config_snapshot;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

// SHA-1 style content hash is overkill here; FNV-1a over the serialized bytes.
std::uint64_t file_hash(const std::string& path);

}  // namespace mdjpt::data
