#pragma once

#include <cstddef>
#include <vector>

namespace mdjpt::dsp {

// Second-order IIR section, normalized so a0 == 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

// Butterworth designs via bilinear transform with cutoff prewarping.
std::vector<Biquad> butter_lowpass(int order, double cutoff_hz, double fs);
std::vector<Biquad> butter_highpass(int order, double cutoff_hz, double fs);

std::vector<double> apply_sos(const std::vector<double>& x, const std::vector<Biquad>& sos);

// Zero-phase forward-backward filtering with odd-reflection edge padding.
std::vector<double> filtfilt(const std::vector<double>& x, const std::vector<Biquad>& sos);

// Rational-ratio polyphase resampling with a windowed-sinc anti-alias filter.
// Output length is floor(n * fs_out / fs_in). Requires fs_out <= fs_in.
std::vector<double> resample_poly(const std::vector<double>& x, double fs_in, double fs_out);

// Best rational approximation p/q of `ratio` within `tol` (continued fractions).
std::pair<std::size_t, std::size_t> rational_approx(double ratio, double tol = 1e-9);

// One-sided periodogram |X_k|^2 scaled so that summing bins reproduces the
// signal variance about its mean (Parseval). bin_hz() = fs / n.
std::vector<double> periodogram(const std::vector<double>& x);

// Variance of the [f_lo, f_hi) band of x via periodogram integration.
double band_variance(const std::vector<double>& x, double fs, double f_lo, double f_hi);

// Frequency (Hz) of the largest periodogram bin above DC.
double dominant_frequency(const std::vector<double>& x, double fs);

double rms(const std::vector<double>& x);
double median_abs(const std::vector<double>& x);

}  // namespace mdjpt::dsp
