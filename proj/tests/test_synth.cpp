#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mdjpt/synth.hpp"

using namespace mdjpt;
using nn::Tensor;

namespace {

synth::SynthSpec tiny_spec() {
    synth::SynthSpec s;
    s.n_datasets = 2;
    s.n_heldout = 1;
    s.n_subjects = 2;
    s.v_m = 3;
    s.n_classes = 3;
    s.n_channels = 8;
    s.trial_s = 4.0;
    s.n_sources = 3;
    s.seed = 123;
    return s;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// least-squares source reconstruction through the known observation matrix
Tensor reconstruct(const Tensor& obs, const Tensor& x) {
    const std::size_t C = obs.dim(0), S = obs.dim(1), T = x.dim(1);
    // normal equations (A^T A) s = A^T x, solved by Gaussian elimination
    std::vector<std::vector<double>> ata(S, std::vector<double>(S, 0.0));
    Tensor atx({S, T});
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j)
            for (std::size_t c = 0; c < C; ++c) ata[i][j] += obs.at(c, i) * obs.at(c, j);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) atx.at(i, t) += obs.at(c, i) * x.at(c, t);
    }
    for (std::size_t col = 0; col < S; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < S; ++r)
            if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
        std::swap(ata[col], ata[piv]);
        for (std::size_t t = 0; t < T; ++t) std::swap(atx.at(col, t), atx.at(piv, t));
        for (std::size_t r = 0; r < S; ++r) {
            if (r == col) continue;
            const double f = ata[r][col] / ata[col][col];
            for (std::size_t j = 0; j < S; ++j) ata[r][j] -= f * ata[col][j];
            for (std::size_t t = 0; t < T; ++t) atx.at(r, t) -= f * atx.at(col, t);
        }
    }
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t t = 0; t < T; ++t) atx.at(i, t) /= ata[i][i];
    return atx;
}

double row_correlation(const Tensor& a, const Tensor& b, std::size_t row) {
    const std::size_t T = a.dim(1);
    double ma = 0, mb = 0;
    for (std::size_t t = 0; t < T; ++t) {
        ma += a.at(row, t);
        mb += b.at(row, t);
    }
    ma /= double(T);
    mb /= double(T);
    double num = 0, da = 0, db = 0;
    for (std::size_t t = 0; t < T; ++t) {
        const double xa = a.at(row, t) - ma, xb = b.at(row, t) - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("spec validation rejects degenerate corpora") {
    synth::SynthSpec s = tiny_spec();
    s.n_subjects = 1;
    CHECK_THROWS_AS(s.validate(), Error);
    s = tiny_spec();
    s.n_classes = 1;
    CHECK_THROWS_AS(s.validate(), Error);
    s = tiny_spec();
    s.n_channels = 61;
    CHECK_THROWS_AS(s.validate(), Error);
    CHECK_NOTHROW(tiny_spec().validate());
}

TEST_CASE("spec snapshot round trips") {
    synth::SynthSpec s = tiny_spec();
    s.snr = 7.5;
    synth::SynthSpec back = synth::SynthSpec::from_snapshot(s.snapshot());
    CHECK(back.n_datasets == s.n_datasets);
    CHECK(back.n_subjects == s.n_subjects);
    CHECK(back.v_m == s.v_m);
    CHECK(back.snr == doctest::Approx(7.5));
    CHECK(back.seed == s.seed);
    CHECK_THROWS_AS((void)synth::SynthSpec::from_snapshot("nope=1\n"), Error);
}

TEST_CASE("noiseless identity corpus renders sources through the base mixing") {
    synth::SynthSpec s = tiny_spec();
    s.snr = 0;  // noiseless
    s.subject_rhythm = 0;
    s.subject_perturbation = 0;
    s.dataset_gain_scale = 0;
    s.dataset_shift_scale = 0;
    TempDir dir("mdjpt_synth_identity");
    auto manifests = synth::generate_corpus(s, dir.path.string());
    REQUIRE(manifests.size() == 3);

    data::DatasetManifest man = data::load_manifest(manifests[0]);
    data::TrialEpoch epoch = data::read_epoch(man.epoch_path(0, 1));
    Tensor mix = synth::base_mixing(s);
    Tensor src = synth::trial_sources(s, 0, 1);
    for (std::size_t c = 0; c < s.n_channels; ++c)
        for (std::size_t t = 0; t < 20; ++t) {
            double want = 0;
            for (std::size_t j = 0; j < s.n_sources; ++j) want += mix.at(c, j) * src.at(j, t);
            // float32 storage on disk
            CHECK(epoch.data.at(c, t) == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("same seed gives a byte-identical corpus") {
    synth::SynthSpec s = tiny_spec();
    TempDir d1("mdjpt_synth_rep1"), d2("mdjpt_synth_rep2");
    auto m1 = synth::generate_corpus(s, d1.path.string());
    auto m2 = synth::generate_corpus(s, d2.path.string());
    REQUIRE(m1.size() == m2.size());
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(d1.path)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(entry.path(), d1.path);
        CHECK(data::file_hash(entry.path().string()) ==
              data::file_hash((d2.path / rel).string()));
        ++files;
    }
    CHECK(files == 3 * (1 + 2 * 3));  // per dataset: manifest + subjects x trials
}

TEST_CASE("labels balance across trials and match between subjects") {
    synth::SynthSpec s = tiny_spec();
    s.v_m = 8;
    TempDir dir("mdjpt_synth_labels");
    auto manifests = synth::generate_corpus(s, dir.path.string());
    data::DatasetManifest man = data::load_manifest(manifests[0]);
    std::map<int, int> counts;
    for (const auto& [v, c] : man.emotion_labels) ++counts[c];
    REQUIRE(counts.size() == 3);
    int lo = 1 << 20, hi = 0;
    for (const auto& [c, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
}

TEST_CASE("shared-trial sources reconstruct consistently across subjects at SNR 10") {
    synth::SynthSpec s = tiny_spec();
    s.snr = 10.0;
    s.subject_rhythm = 0;  // pseudo-inverse reconstruction needs the pure mixture
    s.n_channels = 16;  // default-scale channel count; 8 is too noisy to invert
    TempDir dir("mdjpt_synth_recon");
    auto manifests = synth::generate_corpus(s, dir.path.string());
    data::DatasetManifest man = data::load_manifest(manifests[0]);

    Tensor dsx = synth::dataset_transform(s, 0);
    auto observation = [&](std::size_t subject) {
        Tensor mix = synth::subject_mixing(s, 0, subject);
        Tensor obs({s.n_channels, s.n_sources});
        for (std::size_t i = 0; i < s.n_channels; ++i)
            for (std::size_t j = 0; j < s.n_sources; ++j) {
                double acc = 0;
                for (std::size_t k = 0; k < s.n_channels; ++k)
                    acc += dsx.at(i, k) * mix.at(k, j);
                obs.at(i, j) = acc;
            }
        return obs;
    };
    Tensor r0 = reconstruct(observation(0), data::read_epoch(man.epoch_path(0, 0)).data);
    Tensor r1 = reconstruct(observation(1), data::read_epoch(man.epoch_path(1, 0)).data);
    for (std::size_t k = 0; k < s.n_sources; ++k) CHECK(row_correlation(r0, r1, k) > 0.9);
}
