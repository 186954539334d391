#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mdjpt/dsp.hpp"
#include "mdjpt/error.hpp"

using namespace mdjpt;
constexpr double kPi = std::numbers::pi;

namespace {

std::vector<double> sine(double f_hz, double fs, std::size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * kPi * f_hz * double(t) / fs);
    return x;
}

}  // namespace

TEST_CASE("zero-phase butterworth filtering passes the band and kills the stopband") {
    const double fs = 125.0;
    auto lp = dsp::butter_lowpass(4, 47.0, fs);
    auto hp = dsp::butter_highpass(4, 0.5, fs);
    std::vector<dsp::Biquad> band = lp;
    band.insert(band.end(), hp.begin(), hp.end());

    auto in_band = sine(10.0, fs, 2000);
    auto out = dsp::filtfilt(in_band, band);
    CHECK(dsp::rms(out) == doctest::Approx(dsp::rms(in_band)).epsilon(0.05));

    auto stop = sine(60.0, fs, 2000);
    CHECK(dsp::rms(dsp::filtfilt(stop, band)) < 0.1 * dsp::rms(stop));

    std::vector<double> zeros(500, 0.0);
    for (double v : dsp::filtfilt(zeros, band)) CHECK(v == 0.0);

    // zero phase: the filtered in-band sinusoid stays aligned with the input
    double dot = 0, nn = 0;
    for (std::size_t t = 500; t < 1500; ++t) {  // interior, away from edges
        dot += out[t] * in_band[t];
        nn += in_band[t] * in_band[t];
    }
    CHECK(dot / nn == doctest::Approx(1.0).epsilon(0.05));

    CHECK_THROWS_AS((void)dsp::butter_lowpass(3, 10.0, fs), Error);
    CHECK_THROWS_AS((void)dsp::butter_lowpass(4, 80.0, fs), Error);
}

TEST_CASE("stopband attenuation one octave out exceeds 20 dB") {
    const double fs = 1000.0;
    auto lp = dsp::butter_lowpass(4, 47.0, fs);
    auto x = sine(94.0, fs, 4000);  // one octave above the edge
    CHECK(dsp::rms(dsp::filtfilt(x, lp)) < 0.1 * dsp::rms(x));

    auto hp = dsp::butter_highpass(4, 8.0, fs);
    auto y = sine(4.0, fs, 4000);  // one octave below the edge
    CHECK(dsp::rms(dsp::filtfilt(y, hp)) < 0.1 * dsp::rms(y));
}

TEST_CASE("rational approximation recovers exact and near ratios") {
    CHECK(dsp::rational_approx(0.5) == std::make_pair(std::size_t(1), std::size_t(2)));
    CHECK(dsp::rational_approx(125.0 / 1000.0) == std::make_pair(std::size_t(1), std::size_t(8)));
    CHECK(dsp::rational_approx(3.0) == std::make_pair(std::size_t(3), std::size_t(1)));
    auto [p, q] = dsp::rational_approx(200.0 / 512.0);
    CHECK(p == 25);
    CHECK(q == 64);
    auto [pi_p, pi_q] = dsp::rational_approx(kPi, 1e-6);
    CHECK(std::abs(double(pi_p) / double(pi_q) - kPi) < 1e-6);
    CHECK_THROWS_AS((void)dsp::rational_approx(-1.0), Error);
}

TEST_CASE("polyphase resampling: lengths, identity, and spectral preservation") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    std::vector<double> noise(1000);
    for (auto& v : noise) v = nd(rng);

    CHECK(dsp::resample_poly(noise, 1000.0, 125.0).size() == 125);
    CHECK(dsp::resample_poly(noise, 1000.0, 1000.0) == noise);
    CHECK(dsp::resample_poly({}, 1000.0, 125.0).empty());
    CHECK_THROWS_AS((void)dsp::resample_poly(noise, 125.0, 250.0), Error);

    // non-integer ratio length: floor(n * out / in)
    CHECK(dsp::resample_poly(noise, 512.0, 200.0).size() == 390);

    // a 10 Hz tone survives 1000 -> 125 Hz with its peak intact
    auto tone = sine(10.0, 1000.0, 4000);
    auto down = dsp::resample_poly(tone, 1000.0, 125.0);
    REQUIRE(down.size() == 500);
    CHECK(dsp::dominant_frequency(down, 125.0) == doctest::Approx(10.0).epsilon(0.02));
    // amplitude preserved in the interior
    double peak = 0;
    for (std::size_t t = 100; t + 100 < down.size(); ++t) peak = std::max(peak, std::abs(down[t]));
    CHECK(peak == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("periodogram satisfies parseval and localizes tones") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 64 + std::size_t(rng() % 200);
        std::vector<double> x(n);
        for (auto& v : x) v = nd(rng);
        double mean = 0;
        for (double v : x) mean += v / double(n);
        double var = 0;
        for (double v : x) var += (v - mean) * (v - mean) / double(n);
        auto p = dsp::periodogram(x);
        double sum = 0;
        for (double v : p) sum += v;
        CHECK(sum == doctest::Approx(var).epsilon(1e-9));
    }

    const double fs = 125.0;
    auto x = sine(20.0, fs, 625, 3.0);
    CHECK(dsp::dominant_frequency(x, fs) == doctest::Approx(20.0).epsilon(0.01));
    // variance of a sine is amp^2/2, concentrated in its band
    CHECK(dsp::band_variance(x, fs, 14.0, 31.0) == doctest::Approx(4.5).epsilon(0.01));
    CHECK(dsp::band_variance(x, fs, 31.0, 47.0) < 0.01);
}

TEST_CASE("rms and median_abs match brute-force oracles") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 1 + std::size_t(rng() % 50);
        std::vector<double> x(n);
        for (auto& v : x) v = nd(rng);

        double acc = 0;
        for (double v : x) acc += v * v;
        CHECK(dsp::rms(x) == doctest::Approx(std::sqrt(acc / double(n))).epsilon(1e-12));

        std::vector<double> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(x[i]);
        std::sort(a.begin(), a.end());
        const double med = n % 2 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
        CHECK(dsp::median_abs(x) == doctest::Approx(med).epsilon(1e-12));
    }
    CHECK(dsp::rms({}) == 0.0);
    CHECK(dsp::median_abs({}) == 0.0);
}
