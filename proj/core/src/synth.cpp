#include "mdjpt/synth.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "mdjpt/error.hpp"
#include "mdjpt/montage.hpp"

namespace mdjpt::synth {

using nn::Tensor;

void SynthSpec::validate() const {
    if (n_datasets + n_heldout == 0) throw Error("InvalidSpec", "no datasets requested");
    if (n_subjects < 2) throw Error("InvalidSpec", "need at least two subjects");
    if (n_classes < 2) throw Error("InvalidSpec", "need at least two classes");
    if (v_m == 0) throw Error("InvalidSpec", "need at least one trial per subject");
    if (n_channels == 0 || n_channels > 60)
        throw Error("InvalidSpec", "channel count must be in 1..60");
    if (n_sources == 0) throw Error("InvalidSpec", "need at least one latent source");
    if (sampling_rate_hz <= 0 || trial_s <= 0)
        throw Error("InvalidSpec", "rate and trial length must be positive");
    if (trial_samples() < 4) throw Error("InvalidSpec", "trial too short");
    if (subject_rhythm < 0) throw Error("InvalidSpec", "subject rhythm power must be >= 0");
    if (source_drift < 0) throw Error("InvalidSpec", "source drift must be >= 0");
    if (freq_wander < 0) throw Error("InvalidSpec", "frequency wander must be >= 0");
}

std::string SynthSpec::snapshot() const {
    std::ostringstream os;
    os << "n_datasets=" << n_datasets << "\n";
    os << "n_heldout=" << n_heldout << "\n";
    os << "n_subjects=" << n_subjects << "\n";
    os << "v_m=" << v_m << "\n";
    os << "n_classes=" << n_classes << "\n";
    os << "n_channels=" << n_channels << "\n";
    os << "sampling_rate_hz=" << sampling_rate_hz << "\n";
    os << "trial_s=" << trial_s << "\n";
    os << "n_sources=" << n_sources << "\n";
    os << "snr=" << snr << "\n";
    os << "subject_perturbation=" << subject_perturbation << "\n";
    os << "source_drift=" << source_drift << "\n";
    os << "freq_wander=" << freq_wander << "\n";
    os << "subject_rhythm=" << subject_rhythm << "\n";
    os << "dataset_gain_scale=" << dataset_gain_scale << "\n";
    os << "dataset_shift_scale=" << dataset_shift_scale << "\n";
    os << "seed=" << seed << "\n";
    return os.str();
}

SynthSpec SynthSpec::from_snapshot(const std::string& text) {
    SynthSpec s;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("SchemaViolation", "spec line: " + line);
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "n_datasets") s.n_datasets = std::stoul(val);
        else if (key == "n_heldout") s.n_heldout = std::stoul(val);
        else if (key == "n_subjects") s.n_subjects = std::stoul(val);
        else if (key == "v_m") s.v_m = std::stoul(val);
        else if (key == "n_classes") s.n_classes = std::stoul(val);
        else if (key == "n_channels") s.n_channels = std::stoul(val);
        else if (key == "sampling_rate_hz") s.sampling_rate_hz = std::stod(val);
        else if (key == "trial_s") s.trial_s = std::stod(val);
        else if (key == "n_sources") s.n_sources = std::stoul(val);
        else if (key == "snr") s.snr = std::stod(val);
        else if (key == "subject_perturbation") s.subject_perturbation = std::stod(val);
        else if (key == "source_drift") s.source_drift = std::stod(val);
        else if (key == "freq_wander") s.freq_wander = std::stod(val);
        else if (key == "subject_rhythm") s.subject_rhythm = std::stod(val);
        else if (key == "dataset_gain_scale") s.dataset_gain_scale = std::stod(val);
        else if (key == "dataset_shift_scale") s.dataset_shift_scale = std::stod(val);
        else if (key == "seed") s.seed = std::stoull(val);
        else throw Error("SchemaViolation", "unknown spec key: " + key);
    }
    return s;
}

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// stream-derived seed so every corpus piece gets an independent generator
std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0,
                     std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t z = splitmix(seed);
    z = splitmix(z ^ (tag * 0x100000001b3ULL));
    z = splitmix(z ^ (a + 1));
    z = splitmix(z ^ (b + 1));
    return splitmix(z ^ (c + 1));
}

enum Tag : std::uint64_t { kBase = 1, kSubject, kGain, kShift, kTrial, kNoise, kRhythm, kRhythmNoise };

// unit-variance AR(2) resonator at frequency f, matching the trial sources
std::vector<double> resonator_series(double f, double rate_hz, std::size_t T,
                                     std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    const double r = 0.98;
    const double theta = 2.0 * M_PI * f / rate_hz;
    const double a1 = 2.0 * r * std::cos(theta), a2 = -r * r;
    std::vector<double> out(T);
    double x1 = 0, x2 = 0, sq = 0;
    for (std::size_t t = 0; t < T; ++t) {
        const double x = a1 * x1 + a2 * x2 + noise(rng);
        out[t] = x;
        x2 = x1;
        x1 = x;
        sq += x * x;
    }
    const double sd = std::sqrt(sq / double(T));
    if (sd > 0)
        for (double& x : out) x /= sd;
    return out;
}

Tensor normal_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor t(std::move(shape));
    t.fill_normal(rng, 0.0, 1.0);
    return t;
}

}  // namespace

std::vector<std::string> channel_labels(const SynthSpec& spec) {
    const auto& target = montage::standard_1020_60().target_labels();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < spec.n_channels; ++i)
        out.push_back(target[i * target.size() / spec.n_channels]);
    return out;
}

Tensor base_mixing(const SynthSpec& spec) {
    return normal_tensor({spec.n_channels, spec.n_sources}, derive(spec.seed, kBase));
}

Tensor subject_mixing(const SynthSpec& spec, std::size_t dataset, std::size_t subject) {
    Tensor a = base_mixing(spec);
    if (spec.subject_perturbation != 0) {
        Tensor p = normal_tensor(a.shape, derive(spec.seed, kSubject, dataset, subject));
        for (std::size_t i = 0; i < a.numel(); ++i) a[i] += spec.subject_perturbation * p[i];
    }
    return a;
}

Tensor dataset_transform(const SynthSpec& spec, std::size_t dataset) {
    const std::size_t C = spec.n_channels;
    Tensor gain = normal_tensor({C}, derive(spec.seed, kGain, dataset));
    Tensor s = normal_tensor({C, C}, derive(spec.seed, kShift, dataset));
    Tensor m({C, C});
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            // (I + shift * symmetrized S) * diag(exp(gain_scale * g))
            const double sym = 0.5 * (s.at(i, j) + s.at(j, i));
            double v = spec.dataset_shift_scale * sym + (i == j ? 1.0 : 0.0);
            m.at(i, j) = v * std::exp(spec.dataset_gain_scale * gain[j]);
        }
    return m;
}

int trial_label(const SynthSpec& spec, std::size_t trial) {
    return int(trial % spec.n_classes);
}

Tensor trial_sources(const SynthSpec& spec, std::size_t dataset, std::size_t trial) {
    const std::size_t T = spec.trial_samples(), S = spec.n_sources;
    const int label = trial_label(spec, trial);
    std::mt19937_64 rng(derive(spec.seed, kTrial, dataset, trial));
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor out({S, T});
    for (std::size_t k = 0; k < S; ++k) {
        // class resonance inside 14..24 Hz, detuned slightly per source; the
        // classes sit within one conventional analysis band, so telling them
        // apart needs finer spectral resolution than broad band powers
        const double f_class = 14.0 + 10.0 * (double(label) + 0.5) / double(spec.n_classes);
        const double detune = S > 1 ? 2.0 * (double(k) / double(S - 1) - 0.5) : 0.0;
        const double f = std::clamp(f_class + detune, 1.0, 0.45 * spec.sampling_rate_hz);
        // slow power drift, a property of the trial itself: every subject's
        // rendering waxes and wanes together, so only time-aligned windows
        // observe the same instantaneous source mixture
        double ef[3], ep[3];
        std::uniform_real_distribution<double> fd(0.05, 0.4);
        std::uniform_real_distribution<double> pd(0.0, 2.0 * M_PI);
        for (int j = 0; j < 3; ++j) {
            ef[j] = fd(rng);
            ep[j] = pd(rng);
        }
        // slow resonance wander, also trial-locked: time-shifted windows of
        // the same trial can sit a class-spacing apart in frequency
        std::uniform_real_distribution<double> wfd(0.03, 0.12);
        const double wf = wfd(rng), wp = pd(rng);
        const double r = 0.98;
        const double a2 = -r * r;
        double x1 = 0, x2 = 0, sq = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const double ft = std::clamp(
                f + spec.freq_wander *
                        std::sin(2.0 * M_PI * wf * double(t) / spec.sampling_rate_hz + wp),
                1.0, 0.45 * spec.sampling_rate_hz);
            const double a1 =
                2.0 * r * std::cos(2.0 * M_PI * ft / spec.sampling_rate_hz);
            double x = a1 * x1 + a2 * x2 + noise(rng);
            x2 = x1;
            x1 = x;
            if (spec.source_drift > 0) {
                double lg = 0;
                for (int j = 0; j < 3; ++j)
                    lg += std::sin(2.0 * M_PI * ef[j] * double(t) / spec.sampling_rate_hz +
                                   ep[j]);
                x *= std::exp(spec.source_drift * lg / std::sqrt(3.0));
            }
            out.at(k, t) = x;
            sq += x * x;
        }
        const double sd = std::sqrt(sq / double(T));
        if (sd > 0)
            for (std::size_t t = 0; t < T; ++t) out.at(k, t) /= sd;
    }
    return out;
}

std::vector<std::string> generate_corpus(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    const std::size_t total = spec.n_datasets + spec.n_heldout;
    const std::size_t C = spec.n_channels, T = spec.trial_samples();
    const auto labels = channel_labels(spec);
    std::vector<std::string> manifest_paths;

    for (std::size_t d = 0; d < total; ++d) {
        const bool heldout = d >= spec.n_datasets;
        const std::string id =
            (heldout ? "heldout" : "synth") + std::to_string(heldout ? d - spec.n_datasets : d);
        const std::string dir = out_dir + "/" + id;
        std::filesystem::create_directories(dir);

        data::DatasetManifest man;
        man.dataset_id = id;
        man.sampling_rate_hz = spec.sampling_rate_hz;
        man.channel_names = labels;
        man.n_subjects = spec.n_subjects;
        man.n_trials_per_subject = spec.v_m;
        man.root_dir = dir;
        for (std::size_t v = 0; v < spec.v_m; ++v) man.emotion_labels[v] = trial_label(spec, v);

        const Tensor dsx = dataset_transform(spec, d);
        for (std::size_t s = 0; s < spec.n_subjects; ++s) {
            // full observation map for this subject: dataset transform o mixing
            const Tensor mix = subject_mixing(spec, d, s);
            Tensor obs({C, spec.n_sources});
            for (std::size_t i = 0; i < C; ++i)
                for (std::size_t j = 0; j < spec.n_sources; ++j) {
                    double acc = 0;
                    for (std::size_t k = 0; k < C; ++k) acc += dsx.at(i, k) * mix.at(k, j);
                    obs.at(i, j) = acc;
                }
            for (std::size_t v = 0; v < spec.v_m; ++v) {
                const Tensor src = trial_sources(spec, d, v);
                data::TrialEpoch epoch;
                epoch.data = Tensor({C, T});
                epoch.channel_names = labels;
                epoch.sampling_rate_hz = spec.sampling_rate_hz;
                epoch.subject_id = "s" + std::to_string(s);
                epoch.trial_id = "t" + std::to_string(v);
                epoch.dataset_id = id;
                for (std::size_t i = 0; i < C; ++i)
                    for (std::size_t t = 0; t < T; ++t) {
                        double acc = 0;
                        for (std::size_t j = 0; j < spec.n_sources; ++j)
                            acc += obs.at(i, j) * src.at(j, t);
                        epoch.data.at(i, t) = acc;
                    }
                if (spec.subject_rhythm > 0) {
                    // two subject-fixed focal rhythms; fresh realizations per
                    // trial, but frequency and scalp pattern stay the subject's
                    std::mt19937_64 prng(derive(spec.seed, kRhythm, d, s));
                    std::mt19937_64 trng(derive(spec.seed, kRhythmNoise, d, s, v));
                    std::uniform_real_distribution<double> fd(4.0, 30.0);
                    std::normal_distribution<double> nd(0.0, 1.0);
                    double p_tot = 0;
                    for (std::size_t i = 0; i < C; ++i)
                        for (std::size_t t = 0; t < T; ++t)
                            p_tot += epoch.data.at(i, t) * epoch.data.at(i, t);
                    p_tot /= double(T);
                    const std::size_t n_rhythms = 2;
                    for (std::size_t rix = 0; rix < n_rhythms; ++rix) {
                        const double f =
                            std::min(fd(prng), 0.45 * spec.sampling_rate_hz);
                        std::vector<double> pattern(C);
                        double norm = 0;
                        for (double& x : pattern) {
                            x = nd(prng);
                            norm += x * x;
                        }
                        norm = std::sqrt(norm);
                        const double amp =
                            std::sqrt(spec.subject_rhythm * p_tot / double(n_rhythms));
                        auto series = resonator_series(f, spec.sampling_rate_hz, T, trng);
                        for (std::size_t i = 0; i < C; ++i) {
                            const double w = amp * pattern[i] / norm;
                            for (std::size_t t = 0; t < T; ++t)
                                epoch.data.at(i, t) += w * series[t];
                        }
                    }
                }
                if (spec.snr > 0) {
                    std::mt19937_64 nrng(derive(spec.seed, kNoise, d, s, v));
                    std::normal_distribution<double> nd(0.0, 1.0);
                    for (std::size_t i = 0; i < C; ++i) {
                        double power = 0;
                        for (std::size_t t = 0; t < T; ++t)
                            power += epoch.data.at(i, t) * epoch.data.at(i, t);
                        power /= double(T);
                        const double nsd = std::sqrt(power / spec.snr);
                        for (std::size_t t = 0; t < T; ++t) epoch.data.at(i, t) += nsd * nd(nrng);
                    }
                }
                const std::string rel =
                    "s" + std::to_string(s) + "_t" + std::to_string(v) + ".epo";
                data::write_epoch(dir + "/" + rel, epoch);
                man.paths[{s, v}] = rel;
            }
        }
        const std::string man_path = dir + "/manifest.txt";
        data::save_manifest(man, man_path);
        manifest_paths.push_back(man_path);
    }
    return manifest_paths;
}

}  // namespace mdjpt::synth
