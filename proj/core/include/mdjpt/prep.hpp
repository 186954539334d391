#pragma once

#include <set>
#include <string>
#include <vector>

#include "mdjpt/data.hpp"
#include "mdjpt/montage.hpp"

namespace mdjpt::prep {

// Amplitude rule: a channel is noisy when the fraction of samples with
// |x| > multiple * median(|x|) exceeds `fraction`.
struct NoisyChannelRule {
    double multiple;  // m
    double fraction;  // n, in (0, 1]
};

struct PrepConfig {
    double target_rate_hz = 125.0;
    double bandpass_low_hz = 0.5;
    double bandpass_high_hz = 47.0;
    std::vector<NoisyChannelRule> rules = {{3.0, 0.4}, {30.0, 0.01}};
    std::set<std::string> first_pass_exclude = {"Fp1", "Fp2", "F7", "F8"};
    std::size_t interp_neighbors = 3;
};

data::TrialEpoch resample(const data::TrialEpoch& epoch, double target_hz);

data::TrialEpoch bandpass(const data::TrialEpoch& epoch, double low_hz = 0.5,
                          double high_hz = 47.0);

std::set<std::string> detect_noisy_channels(const data::TrialEpoch& epoch,
                                            const std::vector<NoisyChannelRule>& rules,
                                            const std::set<std::string>& exclude);

data::TrialEpoch interpolate_channels(const data::TrialEpoch& epoch,
                                      const std::set<std::string>& flagged,
                                      const montage::MontageTable& table, std::size_t k = 3);

data::TrialEpoch rereference_common_average(const data::TrialEpoch& epoch);

// Map to the canonical 60-channel montage: copy matching channels, synthesize
// missing ones by inverse-distance weighting over the 3 nearest sources.
data::TrialEpoch interpolate_montage(const data::TrialEpoch& epoch,
                                     const montage::MontageTable& table);

std::vector<data::EpochWindow> window_trial(const data::TrialEpoch& epoch, double window_s = 5.0,
                                            double stride_s = 2.0);

// Full pipeline: resample -> bandpass -> detect(frontals excluded) ->
// interpolate -> [ICA slot, no-op] -> detect(all) -> interpolate ->
// common average -> 60-channel montage.
data::TrialEpoch run_pipeline(const data::TrialEpoch& epoch, const PrepConfig& cfg,
                              const montage::MontageTable& table);

// Preprocess every epoch of a manifest into out_dir; returns the new manifest.
data::DatasetManifest prep_dataset(const data::DatasetManifest& manifest, const PrepConfig& cfg,
                                   const montage::MontageTable& table,
                                   const std::string& out_dir);

}  // namespace mdjpt::prep
