#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "mdjpt/dsp.hpp"
#include "mdjpt/prep.hpp"
#include "mdjpt/synth.hpp"

using namespace mdjpt;
constexpr double kPi = std::numbers::pi;

namespace {

data::TrialEpoch epoch_from(const std::vector<std::string>& names,
                            const std::vector<std::vector<double>>& rows, double fs) {
    data::TrialEpoch e;
    e.channel_names = names;
    e.sampling_rate_hz = fs;
    e.data = nn::Tensor({rows.size(), rows[0].size()});
    for (std::size_t c = 0; c < rows.size(); ++c)
        for (std::size_t t = 0; t < rows[c].size(); ++t) e.data.at(c, t) = rows[c][t];
    e.subject_id = "s";
    e.trial_id = "t";
    e.dataset_id = "d";
    return e;
}

std::vector<double> sine(double f_hz, double fs, std::size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * kPi * f_hz * double(t) / fs);
    return x;
}

std::vector<double> row_of(const data::TrialEpoch& e, std::size_t c) {
    std::vector<double> out(e.samples());
    for (std::size_t t = 0; t < e.samples(); ++t) out[t] = e.data.at(c, t);
    return out;
}

}  // namespace

TEST_CASE("resampling an epoch scales length and keeps the spectral peak") {
    auto e = epoch_from({"C3"}, {sine(10.0, 1000.0, 1000)}, 1000.0);
    auto down = prep::resample(e, 125.0);
    CHECK(down.sampling_rate_hz == 125.0);
    CHECK(down.samples() == 125);
    CHECK(down.channels() == 1);

    auto same = prep::resample(e, 1000.0);
    for (std::size_t i = 0; i < e.data.numel(); ++i) CHECK(same.data[i] == e.data[i]);

    auto longer = epoch_from({"C3"}, {sine(10.0, 1000.0, 4000)}, 1000.0);
    CHECK(dsp::dominant_frequency(row_of(prep::resample(longer, 125.0), 0), 125.0) ==
          doctest::Approx(10.0).epsilon(0.02));

    CHECK_THROWS_AS((void)prep::resample(e, 2000.0), Error);
}

TEST_CASE("bandpass keeps 10 Hz, rejects 60 Hz, and preserves silence") {
    const double fs = 125.0;
    auto in_band = epoch_from({"C3"}, {sine(10.0, fs, 2000)}, fs);
    auto out = prep::bandpass(in_band);
    CHECK(dsp::rms(row_of(out, 0)) == doctest::Approx(dsp::rms(row_of(in_band, 0))).epsilon(0.05));

    auto hum = epoch_from({"C3"}, {sine(60.0, fs, 2000)}, fs);
    CHECK(dsp::rms(row_of(prep::bandpass(hum), 0)) < 0.1 * dsp::rms(row_of(hum, 0)));

    auto silent = epoch_from({"C3"}, {std::vector<double>(500, 0.0)}, fs);
    for (double v : prep::bandpass(silent).data.v) CHECK(v == 0.0);

    CHECK_THROWS_AS((void)prep::bandpass(in_band, 0.5, 80.0), Error);
    CHECK_THROWS_AS((void)prep::bandpass(in_band, 47.0, 0.5), Error);
}

TEST_CASE("noisy-channel rules: thresholds, exclusion, spikes, scale invariance") {
    const double fs = 125.0;
    const std::size_t n = 1000;

    // 45% of samples at 10x the median amplitude -> above the (3, 0.4) fraction
    std::vector<double> bursty(n, 1.0);
    for (std::size_t t = 0; t < 450; ++t) bursty[t] = 10.0;
    for (std::size_t t = 0; t < n; t += 2) bursty[t] = -bursty[t];  // sign-symmetric

    auto clean = sine(10.0, fs, n);
    auto e = epoch_from({"C3", "C4"}, {bursty, clean}, fs);

    auto flagged = prep::detect_noisy_channels(e, {{3.0, 0.4}}, {});
    CHECK(flagged == std::set<std::string>{"C3"});
    CHECK(prep::detect_noisy_channels(e, {{3.0, 0.4}, {30.0, 0.01}}, {}).count("C4") == 0);

    // channels in the exclude set are never flagged
    CHECK(prep::detect_noisy_channels(e, {{3.0, 0.4}}, {"C3"}).empty());

    // sparse 40x-median spikes on 2% of samples trip the (30, 0.01) rule
    std::mt19937_64 rng(3);
    auto spiky = clean;
    const double med = dsp::median_abs(clean);
    for (std::size_t k = 0; k < n / 50; ++k) spiky[rng() % n] = 40.0 * med;
    auto e2 = epoch_from({"Fp1", "Pz"}, {spiky, clean}, fs);
    CHECK(prep::detect_noisy_channels(e2, {{30.0, 0.01}}, {}) == std::set<std::string>{"Fp1"});

    // invariance under positive channel scaling
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(n);
        std::normal_distribution<double> nd;
        for (auto& v : x) v = nd(rng);
        for (std::size_t k = 0; k < 30; ++k) x[rng() % n] = 8.0 * (rng() % 2 ? 1.0 : -1.0);
        std::vector<double> scaled(n);
        for (std::size_t t = 0; t < n; ++t) scaled[t] = 1000.0 * x[t];
        auto fa = prep::detect_noisy_channels(epoch_from({"Cz"}, {x}, fs), {{3.0, 0.02}}, {});
        auto fb = prep::detect_noisy_channels(epoch_from({"Cz"}, {scaled}, fs), {{3.0, 0.02}}, {});
        CHECK(fa == fb);
    }
}

TEST_CASE("flagged channels become the mean of their three nearest clean neighbors") {
    const auto& table = montage::standard_1020_60();
    const std::vector<std::string> names = {"Fz", "Cz", "Pz", "C3", "C4", "F3", "F4", "Oz"};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> rows(names.size(), std::vector<double>(64));
    for (auto& r : rows)
        for (auto& v : r) v = nd(rng);
    auto e = epoch_from(names, rows, 125.0);

    auto same = prep::interpolate_channels(e, {}, table);
    for (std::size_t i = 0; i < e.data.numel(); ++i) CHECK(same.data[i] == e.data[i]);

    auto fixed = prep::interpolate_channels(e, {"Cz"}, table);
    std::vector<std::string> clean;
    for (const auto& nm : names)
        if (nm != "Cz") clean.push_back(nm);
    auto neighbors = table.nearest("Cz", clean, 3);
    REQUIRE(neighbors.size() == 3);
    for (std::size_t t = 0; t < 64; ++t) {
        double want = 0;
        for (const auto& nb : neighbors) {
            const std::size_t idx =
                std::size_t(std::find(names.begin(), names.end(), nb) - names.begin());
            want += e.data.at(idx, t) / 3.0;
        }
        CHECK(fixed.data.at(1, t) == doctest::Approx(want).epsilon(1e-12));
    }
    // untouched channels are bit-identical
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (names[c] == "Cz") continue;
        for (std::size_t t = 0; t < 64; ++t) CHECK(fixed.data.at(c, t) == e.data.at(c, t));
    }

    CHECK_THROWS_AS(
        (void)prep::interpolate_channels(e, {"Fz", "Cz", "Pz", "C3", "C4", "F3"}, table), Error);
}

TEST_CASE("common-average referencing zeroes the channel mean at every sample") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> rows(4, std::vector<double>(16));
    for (auto& r : rows)
        for (auto& v : r) v = nd(rng);
    auto e = epoch_from({"Fz", "Cz", "Pz", "Oz"}, rows, 125.0);
    auto out = prep::rereference_common_average(e);
    for (std::size_t t = 0; t < 16; ++t) {
        double mean = 0;
        for (std::size_t c = 0; c < 4; ++c) mean += out.data.at(c, t) / 4.0;
        CHECK(std::abs(mean) < 1e-10);
    }

    auto single = prep::rereference_common_average(epoch_from({"Cz"}, {rows[0]}, 125.0));
    for (double v : single.data.v) CHECK(v == 0.0);
}

TEST_CASE("montage standardization copies known channels and synthesizes the rest") {
    const auto& table = montage::standard_1020_60();
    const auto& targets = table.target_labels();
    std::mt19937_64 rng(30);
    std::normal_distribution<double> nd;

    // full 60-channel source, shuffled order -> identity up to reordering
    std::vector<std::string> shuffled = targets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::vector<double>> rows(60, std::vector<double>(32));
    for (auto& r : rows)
        for (auto& v : r) v = nd(rng);
    auto full = epoch_from(shuffled, rows, 125.0);
    auto mapped = prep::interpolate_montage(full, table);
    REQUIRE(mapped.channel_names == targets);
    for (std::size_t c = 0; c < 60; ++c) {
        const std::size_t src =
            std::size_t(std::find(shuffled.begin(), shuffled.end(), targets[c]) - shuffled.begin());
        for (std::size_t t = 0; t < 32; ++t) CHECK(mapped.data.at(c, t) == full.data.at(src, t));
    }

    // 30-channel source: synthesized rows equal the inverse-distance oracle
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < targets.size(); i += 2) sub.push_back(targets[i]);
    std::vector<std::vector<double>> sub_rows(sub.size(), std::vector<double>(32));
    for (auto& r : sub_rows)
        for (auto& v : r) v = nd(rng);
    auto part = epoch_from(sub, sub_rows, 125.0);
    auto out = prep::interpolate_montage(part, table);
    REQUIRE(out.channel_names == targets);
    for (std::size_t c = 0; c < 60; ++c) {
        const auto hit = std::find(sub.begin(), sub.end(), targets[c]);
        if (hit != sub.end()) {
            const std::size_t src = std::size_t(hit - sub.begin());
            for (std::size_t t = 0; t < 32; ++t) CHECK(out.data.at(c, t) == part.data.at(src, t));
            continue;
        }
        auto nbs = table.nearest(targets[c], sub, 3);
        REQUIRE(nbs.size() == 3);
        double wsum = 0;
        std::vector<double> w;
        for (const auto& nb : nbs) {
            const double d =
                montage::MontageTable::distance(table.position(targets[c]), table.position(nb));
            w.push_back(1.0 / d);
            wsum += w.back();
        }
        for (std::size_t t = 0; t < 32; ++t) {
            double want = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                const std::size_t src =
                    std::size_t(std::find(sub.begin(), sub.end(), nbs[j]) - sub.begin());
                want += w[j] / wsum * part.data.at(src, t);
            }
            CHECK(out.data.at(c, t) == doctest::Approx(want).epsilon(1e-12));
        }
    }

    auto alien = epoch_from({"NotALabel"}, {rows[0]}, 125.0);
    CHECK_THROWS_AS((void)prep::interpolate_montage(alien, table), Error);
}

TEST_CASE("windowing start times follow the stride formula") {
    const double fs = 125.0;
    std::mt19937_64 rng(40);
    std::normal_distribution<double> nd;

    auto make = [&](double seconds) {
        std::vector<double> x(std::size_t(seconds * fs));
        for (auto& v : x) v = nd(rng);
        return epoch_from({"Cz"}, {x}, fs);
    };

    auto one = prep::window_trial(make(5.0));
    REQUIRE(one.size() == 1);
    CHECK(one[0].window_start_s == 0.0);
    CHECK(one[0].data.shape == std::vector<std::size_t>{1, 625});

    auto e11 = make(11.0);
    auto four = prep::window_trial(e11);
    REQUIRE(four.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(four[k].window_start_s == doctest::Approx(2.0 * double(k)));
        for (std::size_t t = 0; t < 625; ++t)
            CHECK(four[k].data.at(0, t) == e11.data.at(0, k * 250 + t));
    }

    CHECK_THROWS_AS((void)prep::window_trial(make(4.9)), Error);
}

TEST_CASE("the pipeline is the documented composition of its stages") {
    const double fs0 = 250.0;
    const std::size_t n = 2500;
    const auto& table = montage::standard_1020_60();
    std::vector<std::string> names = {"Fp1", "Fz", "Cz", "Pz", "C3", "C4", "O1", "O2"};
    std::mt19937_64 rng(50);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> rows(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        rows[c] = sine(8.0 + double(c), fs0, n, 10.0);
        for (auto& v : rows[c]) v += nd(rng);
    }
    // plant a sustained in-band artifact on the frontal channel: 30x amplitude
    // for 45% of the trial, which survives the bandpass and trips the (3, 0.4) rule
    for (std::size_t t = 0; t < std::size_t(0.45 * n); ++t) rows[0][t] *= 30.0;
    auto e = epoch_from(names, rows, fs0);

    prep::PrepConfig cfg;
    auto out = prep::run_pipeline(e, cfg, table);
    CHECK(out.channel_names == table.target_labels());
    CHECK(out.sampling_rate_hz == cfg.target_rate_hz);
    CHECK_NOTHROW(out.validate());

    auto manual = prep::resample(e, cfg.target_rate_hz);
    manual = prep::bandpass(manual, cfg.bandpass_low_hz, cfg.bandpass_high_hz);
    auto pass1 = prep::detect_noisy_channels(manual, cfg.rules, cfg.first_pass_exclude);
    manual = prep::interpolate_channels(manual, pass1, table, cfg.interp_neighbors);
    auto pass2 = prep::detect_noisy_channels(manual, cfg.rules, {});
    manual = prep::interpolate_channels(manual, pass2, table, cfg.interp_neighbors);
    manual = prep::rereference_common_average(manual);
    manual = prep::interpolate_montage(manual, table);
    REQUIRE(manual.data.shape == out.data.shape);
    for (std::size_t i = 0; i < out.data.numel(); ++i) CHECK(out.data[i] == manual.data[i]);

    // the artifact channel is caught on the all-channel second pass
    CHECK(pass1.count("Fp1") == 0);
    CHECK(pass2.count("Fp1") == 1);
}

TEST_CASE("whole datasets preprocess into a loadable 60-channel manifest") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mdjpt_prep_dataset";
    fs::remove_all(dir);
    fs::create_directories(dir);

    synth::SynthSpec spec;
    spec.n_datasets = 1;
    spec.n_heldout = 0;
    spec.n_subjects = 2;
    spec.v_m = 2;
    spec.n_channels = 12;
    spec.trial_s = 6.0;
    spec.sampling_rate_hz = 250.0;
    spec.n_sources = 3;
    spec.seed = 99;
    auto paths = synth::generate_corpus(spec, (dir / "raw").string());
    REQUIRE(paths.size() == 1);
    auto raw = data::load_manifest(paths[0]);

    prep::PrepConfig cfg;
    auto prepped = prep::prep_dataset(raw, cfg, montage::standard_1020_60(),
                                      (dir / "prepped").string());
    CHECK(prepped.n_subjects == raw.n_subjects);
    CHECK(prepped.n_trials_per_subject == raw.n_trials_per_subject);
    CHECK(prepped.sampling_rate_hz == cfg.target_rate_hz);
    CHECK(prepped.channel_names.size() == 60);
    CHECK(prepped.emotion_labels == raw.emotion_labels);

    auto reloaded = data::load_manifest((fs::path(prepped.root_dir) / "manifest.txt").string());
    auto epo = data::read_epoch(reloaded.epoch_path(1, 0));
    CHECK(epo.channels() == 60);
    CHECK(epo.sampling_rate_hz == 125.0);
    fs::remove_all(dir);
}
