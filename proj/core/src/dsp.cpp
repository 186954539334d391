#include "mdjpt/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "mdjpt/error.hpp"

namespace mdjpt::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// Bilinear transform of an analog section
// (n2 s^2 + n1 s + n0) / (s^2 + d1 s + d0) at sampling constant K = 2 fs.
Biquad bilinear(double n2, double n1, double n0, double d1, double d0, double K) {
    const double a0 = K * K + d1 * K + d0;
    Biquad q;
    q.b0 = (n2 * K * K + n1 * K + n0) / a0;
    q.b1 = (2.0 * n0 - 2.0 * n2 * K * K) / a0;
    q.b2 = (n2 * K * K - n1 * K + n0) / a0;
    q.a1 = (2.0 * d0 - 2.0 * K * K) / a0;
    q.a2 = (K * K - d1 * K + d0) / a0;
    return q;
}

std::vector<Biquad> butter(int order, double cutoff_hz, double fs, bool highpass) {
    if (order < 1 || order % 2 != 0)
        throw Error("BandOutOfRange", "butterworth order must be a positive even integer");
    if (cutoff_hz <= 0 || cutoff_hz >= fs / 2)
        throw Error("BandOutOfRange", "cutoff must lie in (0, fs/2)");
    const double K = 2.0 * fs;
    const double wc = K * std::tan(kPi * cutoff_hz / fs);  // prewarped
    std::vector<Biquad> sos;
    for (int k = 0; k < order / 2; ++k) {
        // normalized LP Butterworth pole pair angle
        const double theta = kPi * (2.0 * k + 1.0) / (2.0 * order) + kPi / 2.0;
        const double re = std::cos(theta);  // negative
        // section denominator s^2 - 2 re wc s + wc^2
        const double d1 = -2.0 * re * wc, d0 = wc * wc;
        if (highpass)
            sos.push_back(bilinear(1.0, 0.0, 0.0, d1, d0, K));
        else
            sos.push_back(bilinear(0.0, 0.0, wc * wc, d1, d0, K));
    }
    return sos;
}

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

std::vector<Biquad> butter_lowpass(int order, double cutoff_hz, double fs) {
    return butter(order, cutoff_hz, fs, false);
}

std::vector<Biquad> butter_highpass(int order, double cutoff_hz, double fs) {
    return butter(order, cutoff_hz, fs, true);
}

std::vector<double> apply_sos(const std::vector<double>& x, const std::vector<Biquad>& sos) {
    std::vector<double> y = x;
    for (const auto& q : sos) {
        double z1 = 0, z2 = 0;  // direct form II transposed
        for (double& s : y) {
            const double in = s;
            s = q.b0 * in + z1;
            z1 = q.b1 * in - q.a1 * s + z2;
            z2 = q.b2 * in - q.a2 * s;
        }
    }
    return y;
}

std::vector<double> filtfilt(const std::vector<double>& x, const std::vector<Biquad>& sos) {
    if (x.empty()) return {};
    const std::size_t n = x.size();
    const std::size_t pad = std::min(n - 1, 12 * sos.size() + 3);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    ext = apply_sos(ext, sos);
    std::reverse(ext.begin(), ext.end());
    ext = apply_sos(ext, sos);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::pair<std::size_t, std::size_t> rational_approx(double ratio, double tol) {
    if (ratio <= 0) throw Error("BandOutOfRange", "ratio must be positive");
    std::size_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double r = ratio;
    for (int it = 0; it < 64; ++it) {
        const double a = std::floor(r);
        const std::size_t ai = static_cast<std::size_t>(a);
        const std::size_t p2 = ai * p1 + p0, q2 = ai * q1 + q0;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - ratio) < tol) break;
        const double frac = r - a;
        if (frac < 1e-15) break;
        r = 1.0 / frac;
    }
    return {p1, q1};
}

std::vector<double> resample_poly(const std::vector<double>& x, double fs_in, double fs_out) {
    if (fs_out > fs_in) throw Error("UpsampleRequested", "target rate exceeds source rate");
    if (x.empty()) return {};
    if (fs_out == fs_in) return x;
    const auto [p, q] = rational_approx(fs_out / fs_in);
    const std::size_t n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(x.size()) * fs_out / fs_in));

    // windowed-sinc low-pass in the upsampled domain (rate fs_in * p),
    // cutoff 0.45 * fs_out
    const double fc = 0.45 * fs_out / (fs_in * static_cast<double>(p));  // cycles/sample
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(
        10 * std::max<std::size_t>(p, q));
    std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
    for (std::ptrdiff_t i = -half; i <= half; ++i) {
        const double t = static_cast<double>(i);
        const double sinc = (i == 0) ? 2.0 * fc : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double w = 0.54 + 0.46 * std::cos(kPi * t / static_cast<double>(half));  // Hamming
        h[static_cast<std::size_t>(i + half)] = sinc * w;
    }

    std::vector<double> y(n_out, 0.0);
    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(p);
    const std::ptrdiff_t qn = static_cast<std::ptrdiff_t>(q);
    const std::ptrdiff_t nin = static_cast<std::ptrdiff_t>(x.size());
    for (std::size_t n = 0; n < n_out; ++n) {
        const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(n) * qn;
        // input samples i contribute at upsampled position i*p
        const std::ptrdiff_t i_lo = (center - half + pn - 1) / pn - 1;
        const std::ptrdiff_t i_hi = (center + half) / pn + 1;
        double acc = 0;
        for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, i_lo);
             i <= std::min(nin - 1, i_hi); ++i) {
            const std::ptrdiff_t d = center - i * pn;
            if (d < -half || d > half) continue;
            acc += h[static_cast<std::size_t>(d + half)] * x[static_cast<std::size_t>(i)];
        }
        y[n] = acc * static_cast<double>(p);
    }
    return y;
}

std::vector<double> periodogram(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) return {0.0};
    std::vector<double> in = x;
    double mean = 0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : in) v -= mean;

    std::vector<std::complex<double>> out(n / 2 + 1);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                              reinterpret_cast<fftw_complex*>(out.data()),
                                              FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    std::vector<double> p(n / 2 + 1);
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    for (std::size_t k = 0; k <= n / 2; ++k) {
        double v = std::norm(out[k]) * scale;
        if (k != 0 && !(n % 2 == 0 && k == n / 2)) v *= 2.0;  // one-sided doubling
        p[k] = v;
    }
    return p;
}

double band_variance(const std::vector<double>& x, double fs, double f_lo, double f_hi) {
    const auto p = periodogram(x);
    const double bin = fs / static_cast<double>(x.size());
    double acc = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
        const double f = bin * static_cast<double>(k);
        if (f >= f_lo && f < f_hi) acc += p[k];
    }
    return acc;
}

double dominant_frequency(const std::vector<double>& x, double fs) {
    const auto p = periodogram(x);
    std::size_t best = 1;
    for (std::size_t k = 2; k < p.size(); ++k)
        if (p[k] > p[best]) best = k;
    return fs * static_cast<double>(best) / static_cast<double>(x.size());
}

double rms(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double acc = 0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

double median_abs(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    std::vector<double> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = std::abs(x[i]);
    const std::size_t mid = a.size() / 2;
    std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
    double m = a[mid];
    if (a.size() % 2 == 0) {
        const double lo = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lo);
    }
    return m;
}

}  // namespace mdjpt::dsp
