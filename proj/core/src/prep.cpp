#include "mdjpt/prep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mdjpt/dsp.hpp"
#include "mdjpt/error.hpp"

namespace mdjpt::prep {

namespace {

std::vector<double> channel_row(const data::TrialEpoch& e, std::size_t c) {
    const std::size_t t = e.samples();
    return {e.data.v.begin() + static_cast<std::ptrdiff_t>(c * t),
            e.data.v.begin() + static_cast<std::ptrdiff_t>((c + 1) * t)};
}

std::size_t channel_index(const data::TrialEpoch& e, const std::string& label) {
    for (std::size_t i = 0; i < e.channel_names.size(); ++i)
        if (e.channel_names[i] == label) return i;
    throw Error("UnknownChannelLabel", label);
}

}  // namespace

data::TrialEpoch resample(const data::TrialEpoch& epoch, double target_hz) {
    if (target_hz > epoch.sampling_rate_hz)
        throw Error("UpsampleRequested", "target " + std::to_string(target_hz) + " > source " +
                                             std::to_string(epoch.sampling_rate_hz));
    if (target_hz == epoch.sampling_rate_hz) return epoch;
    data::TrialEpoch out = epoch;
    const std::size_t n_out = static_cast<std::size_t>(std::floor(
        static_cast<double>(epoch.samples()) * target_hz / epoch.sampling_rate_hz));
    out.data = nn::Tensor({epoch.channels(), n_out});
    for (std::size_t c = 0; c < epoch.channels(); ++c) {
        const auto y = dsp::resample_poly(channel_row(epoch, c), epoch.sampling_rate_hz,
                                          target_hz);
        for (std::size_t i = 0; i < n_out; ++i) out.data.at(c, i) = y[i];
    }
    out.sampling_rate_hz = target_hz;
    return out;
}

data::TrialEpoch bandpass(const data::TrialEpoch& epoch, double low_hz, double high_hz) {
    if (!(low_hz < high_hz && high_hz < epoch.sampling_rate_hz / 2.0))
        throw Error("BandOutOfRange", "need low < high < rate/2");
    const auto lp = dsp::butter_lowpass(4, high_hz, epoch.sampling_rate_hz);
    const auto hp = dsp::butter_highpass(4, low_hz, epoch.sampling_rate_hz);
    data::TrialEpoch out = epoch;
    for (std::size_t c = 0; c < epoch.channels(); ++c) {
        auto y = dsp::filtfilt(dsp::filtfilt(channel_row(epoch, c), lp), hp);
        for (std::size_t i = 0; i < epoch.samples(); ++i) out.data.at(c, i) = y[i];
    }
    return out;
}

std::set<std::string> detect_noisy_channels(const data::TrialEpoch& epoch,
                                            const std::vector<NoisyChannelRule>& rules,
                                            const std::set<std::string>& exclude) {
    std::set<std::string> flagged;
    const std::size_t T = epoch.samples();
    for (std::size_t c = 0; c < epoch.channels(); ++c) {
        const std::string& label = epoch.channel_names[c];
        if (exclude.count(label)) continue;
        const auto row = channel_row(epoch, c);
        const double med = dsp::median_abs(row);
        for (const auto& rule : rules) {
            const double thresh = rule.multiple * med;
            std::size_t over = 0;
            for (double v : row)
                if (std::abs(v) > thresh) ++over;
            if (static_cast<double>(over) / static_cast<double>(T) > rule.fraction) {
                flagged.insert(label);
                break;
            }
        }
    }
    return flagged;
}

data::TrialEpoch interpolate_channels(const data::TrialEpoch& epoch,
                                      const std::set<std::string>& flagged,
                                      const montage::MontageTable& table, std::size_t k) {
    if (flagged.empty()) return epoch;
    std::vector<std::string> clean;
    for (const auto& name : epoch.channel_names)
        if (!flagged.count(name)) clean.push_back(name);
    if (clean.size() < k)
        throw Error("TooFewCleanChannels",
                    std::to_string(clean.size()) + " clean < k=" + std::to_string(k));
    data::TrialEpoch out = epoch;
    for (const auto& label : flagged) {
        const std::size_t ci = channel_index(epoch, label);
        const auto neighbors = table.nearest(label, clean, k);
        for (std::size_t t = 0; t < epoch.samples(); ++t) {
            double acc = 0;
            for (const auto& n : neighbors) acc += epoch.data.at(channel_index(epoch, n), t);
            out.data.at(ci, t) = acc / static_cast<double>(neighbors.size());
        }
    }
    return out;
}

data::TrialEpoch rereference_common_average(const data::TrialEpoch& epoch) {
    data::TrialEpoch out = epoch;
    const std::size_t C = epoch.channels(), T = epoch.samples();
    for (std::size_t t = 0; t < T; ++t) {
        double mu = 0;
        for (std::size_t c = 0; c < C; ++c) mu += epoch.data.at(c, t);
        mu /= static_cast<double>(C);
        for (std::size_t c = 0; c < C; ++c) out.data.at(c, t) = epoch.data.at(c, t) - mu;
    }
    return out;
}

data::TrialEpoch interpolate_montage(const data::TrialEpoch& epoch,
                                     const montage::MontageTable& table) {
    const auto& target = table.target_labels();
    data::TrialEpoch out = epoch;
    out.data = nn::Tensor({target.size(), epoch.samples()});
    out.channel_names = target;
    for (const auto& name : epoch.channel_names)
        if (!table.has(name)) throw Error("UnknownChannelLabel", name);
    for (std::size_t ti = 0; ti < target.size(); ++ti) {
        const auto& label = target[ti];
        const auto found = std::find(epoch.channel_names.begin(), epoch.channel_names.end(),
                                     label);
        if (found != epoch.channel_names.end()) {
            const std::size_t ci = static_cast<std::size_t>(found - epoch.channel_names.begin());
            for (std::size_t t = 0; t < epoch.samples(); ++t)
                out.data.at(ti, t) = epoch.data.at(ci, t);
            continue;
        }
        const auto neighbors = table.nearest(label, epoch.channel_names, 3);
        if (neighbors.empty()) throw Error("TooFewCleanChannels", "no source channels");
        const auto& p = table.position(label);
        // inverse-distance weights (power 1); a coincident source dominates
        std::vector<double> w(neighbors.size());
        double wsum = 0;
        bool exact = false;
        for (std::size_t i = 0; i < neighbors.size(); ++i) {
            const double d = montage::MontageTable::distance(p, table.position(neighbors[i]));
            if (d < 1e-12) {
                std::fill(w.begin(), w.end(), 0.0);
                w[i] = 1.0;
                wsum = 1.0;
                exact = true;
                break;
            }
            w[i] = 1.0 / d;
            wsum += w[i];
        }
        (void)exact;
        for (std::size_t t = 0; t < epoch.samples(); ++t) {
            double acc = 0;
            for (std::size_t i = 0; i < neighbors.size(); ++i)
                acc += w[i] * epoch.data.at(channel_index(epoch, neighbors[i]), t);
            out.data.at(ti, t) = acc / wsum;
        }
    }
    return out;
}

std::vector<data::EpochWindow> window_trial(const data::TrialEpoch& epoch, double window_s,
                                            double stride_s) {
    const double len_s = static_cast<double>(epoch.samples()) / epoch.sampling_rate_hz;
    if (len_s < window_s)
        throw Error("TrialTooShort", std::to_string(len_s) + " s < window " +
                                         std::to_string(window_s) + " s");
    const std::size_t wlen = static_cast<std::size_t>(std::lround(window_s *
                                                                  epoch.sampling_rate_hz));
    const std::size_t stride = static_cast<std::size_t>(std::lround(stride_s *
                                                                    epoch.sampling_rate_hz));
    const std::size_t n = (epoch.samples() - wlen) / stride + 1;
    std::vector<data::EpochWindow> windows;
    windows.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        data::EpochWindow w;
        w.trial_id = epoch.trial_id;
        w.window_start_s = static_cast<double>(k) * stride_s;
        w.data = nn::Tensor({epoch.channels(), wlen});
        const std::size_t t0 = k * stride;
        for (std::size_t c = 0; c < epoch.channels(); ++c)
            for (std::size_t t = 0; t < wlen; ++t) w.data.at(c, t) = epoch.data.at(c, t0 + t);
        windows.push_back(std::move(w));
    }
    return windows;
}

data::TrialEpoch run_pipeline(const data::TrialEpoch& epoch, const PrepConfig& cfg,
                              const montage::MontageTable& table) {
    data::TrialEpoch e = resample(epoch, cfg.target_rate_hz);
    e = bandpass(e, cfg.bandpass_low_hz, cfg.bandpass_high_hz);
    auto flagged = detect_noisy_channels(e, cfg.rules, cfg.first_pass_exclude);
    e = interpolate_channels(e, flagged, table, cfg.interp_neighbors);
    // ICA slot: artifact removal handled by external tooling when needed
    flagged = detect_noisy_channels(e, cfg.rules, {});
    e = interpolate_channels(e, flagged, table, cfg.interp_neighbors);
    e = rereference_common_average(e);
    return interpolate_montage(e, table);
}

data::DatasetManifest prep_dataset(const data::DatasetManifest& manifest, const PrepConfig& cfg,
                                   const montage::MontageTable& table,
                                   const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    data::DatasetManifest out = manifest;
    out.channel_names = table.target_labels();
    out.sampling_rate_hz = cfg.target_rate_hz;
    out.root_dir = out_dir;
    out.paths.clear();
    for (std::size_t s = 0; s < manifest.n_subjects; ++s)
        for (std::size_t t = 0; t < manifest.n_trials_per_subject; ++t) {
            auto epoch = data::read_epoch(manifest.epoch_path(s, t));
            epoch.channel_names = manifest.channel_names;
            epoch.subject_id = std::to_string(s);
            epoch.trial_id = std::to_string(t);
            epoch.dataset_id = manifest.dataset_id;
            const auto prepped = run_pipeline(epoch, cfg, table);
            const std::string rel =
                "s" + std::to_string(s) + "_t" + std::to_string(t) + ".epo";
            data::write_epoch((fs::path(out_dir) / rel).string(), prepped);
            out.paths[{s, t}] = rel;
        }
    data::save_manifest(out, (fs::path(out_dir) / "manifest.txt").string());
    return out;
}

}  // namespace mdjpt::prep
