#pragma once

#include <string>
#include <vector>

#include "mdjpt/data.hpp"

namespace mdjpt::synth {

// Controls the synthetic multi-dataset corpus: class-conditioned latent
// sources shared across subjects, subject-specific mixing, dataset-level
// gain/covariance shift, additive noise.
struct SynthSpec {
    std::size_t n_datasets = 3;  // training datasets
    std::size_t n_heldout = 1;   // extra datasets for transfer evaluation
    std::size_t n_subjects = 4;
    std::size_t v_m = 8;  // trials per subject
    std::size_t n_classes = 3;
    std::size_t n_channels = 16;
    double sampling_rate_hz = 125.0;
    double trial_s = 15.0;
    std::size_t n_sources = 6;
    double snr = 10.0;  // signal-to-noise power ratio; <= 0 means noiseless
    double subject_perturbation = 0.3;
    // log-amplitude of slow per-source power drift within a trial; the drift
    // is shared across subjects, so only time-aligned windows see the same
    // instantaneous source mixture
    double source_drift = 1.0;
    // peak excursion (Hz) of the slow resonance-frequency wander within a
    // trial, also shared across subjects; comparable to the class spacing, so
    // time-shifted windows of one trial can masquerade as another class
    double freq_wander = 2.0;
    // power of subject-specific background rhythms relative to total signal
    // power; confounds per-channel band statistics across subjects
    double subject_rhythm = 1.0;
    double dataset_gain_scale = 0.3;
    double dataset_shift_scale = 0.3;
    std::uint64_t seed = 0;

    std::size_t trial_samples() const {
        return std::size_t(trial_s * sampling_rate_hz + 0.5);
    }
    void validate() const;  // throws InvalidSpec

    std::string snapshot() const;
    static SynthSpec from_snapshot(const std::string& text);
};

// Raw channel labels: evenly spaced picks from the 60-channel montage.
std::vector<std::string> channel_labels(const SynthSpec& spec);

// Ground-truth pieces, all pure functions of (spec, indices); the generator
// composes exactly these, so tests can reconstruct sources via pseudo-inverse.
nn::Tensor base_mixing(const SynthSpec& spec);                 // [C x S]
nn::Tensor subject_mixing(const SynthSpec& spec, std::size_t dataset,
                          std::size_t subject);                // [C x S]
nn::Tensor dataset_transform(const SynthSpec& spec, std::size_t dataset);  // [C x C]
nn::Tensor trial_sources(const SynthSpec& spec, std::size_t dataset,
                         std::size_t trial);                   // [S x T], unit variance
int trial_label(const SynthSpec& spec, std::size_t trial);

// Renders every dataset (training then held-out) under out_dir, one
// subdirectory with a manifest per dataset. Byte-identical given the seed.
std::vector<std::string> generate_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace mdjpt::synth
