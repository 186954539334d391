#pragma once

#include <random>
#include <string>
#include <vector>

#include "mdjpt/data.hpp"
#include "mdjpt/model.hpp"

namespace mdjpt::eval {

// Fixed-interval smoother for the random-walk scalar model, applied to each
// feature dimension of seq [n x F] independently. Kalman forward, RTS back.
nn::Tensor lds_smooth(const nn::Tensor& seq, double process_noise = 0.01,
                      double observation_noise = 0.01);

struct Band {
    std::string name;
    double lo_hz, hi_hz;
};
const std::vector<Band>& default_bands();  // delta theta alpha beta gamma

// Differential entropy per channel and band: 0.5 log(2 pi e var_band),
// flattened row-major [C x n_bands].
std::vector<double> de_features(const nn::Tensor& window, double rate_hz,
                                const std::vector<Band>& bands = default_bands());

struct ClassifierConfig {
    std::size_t hidden_units = 128;
    std::size_t epochs = 25;
    std::size_t batch_size = 256;
    double learning_rate = 5e-4;
    double weight_decay = 2.2e-3;
};

// F -> hidden (batch norm, ReLU) -> n_class softmax head.
class MlpClassifier {
public:
    MlpClassifier(std::size_t in_dim, std::size_t hidden, std::size_t n_classes,
                  std::uint64_t seed);

    std::size_t n_classes() const { return n_classes_; }
    std::vector<double> predict_proba(const std::vector<double>& x) const;
    nn::Tensor predict_proba(const nn::Tensor& features) const;  // [n x n_class]

    double class_logit(const std::vector<double>& x, std::size_t c) const;
    // d(logit_c)/dx at x, inference-mode batch norm
    std::vector<double> class_logit_grad(const std::vector<double>& x, std::size_t c) const;

    void fit(const nn::Tensor& features, const std::vector<int>& labels,
             const ClassifierConfig& cfg, std::mt19937_64& rng);

    // exposed for persistence and for constructing exact instances
    std::size_t in_dim_, hidden_, n_classes_;
    nn::Tensor w1_, b1_, gamma_, beta_, w2_, b2_;
    std::vector<double> run_mean_, run_var_;
};

MlpClassifier train_classifier(const nn::Tensor& features, const std::vector<int>& labels,
                               const ClassifierConfig& cfg, std::mt19937_64& rng);

struct MetricsReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, auroc = 0;
    std::vector<std::vector<long>> confusion;  // [n_class][n_class], rows = truth
    std::size_t auroc_skipped_classes = 0;

    std::string to_text() const;  // fixed field order, diffable
};

MetricsReport compute_metrics(const nn::Tensor& probabilities, const std::vector<int>& labels);

// Smoothed per-window features of one trial with its label and subject.
struct TrialFeatures {
    std::vector<std::vector<double>> windows;
    int label = 0;
    std::size_t subject = 0;
};

// Encoder features: one model forward per window, then LDS smoothing over the
// trial's window sequence.
std::vector<TrialFeatures> extract_features(const data::DatasetManifest& manifest,
                                            const model::EncoderModel& m,
                                            std::size_t window_samples, std::size_t stride,
                                            double lds_q = 0.01, double lds_r = 0.01);

// DE baseline features on the same windowing, also smoothed.
std::vector<TrialFeatures> extract_de_features(const data::DatasetManifest& manifest,
                                               std::size_t window_samples, std::size_t stride,
                                               double lds_q = 0.01, double lds_r = 0.01);

struct FewShotConfig {
    ClassifierConfig classifier;
    std::size_t repeats = 6;
    double train_fraction = 0.25;  // 1:3 subject split
    std::uint64_t seed = 0;
};

struct FewShotResult {
    std::vector<MetricsReport> repeats;
    std::size_t n_train_subjects = 0;
    double accuracy_mean = 0, accuracy_std = 0;
    double f1_mean = 0, auroc_mean = 0;
};

FewShotResult few_shot_protocol(const std::vector<TrialFeatures>& trials,
                                std::size_t n_subjects, const FewShotConfig& cfg);

// Cosine nearest neighbor over all other samples; ties go to the lowest index.
double zero_shot_nn(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels);

// Mean silhouette over both clusters, Euclidean distance.
double silhouette_pair(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b);

// Midpoint-rule path integral of d(logit_c)/dx from baseline to x.
std::vector<double> integrated_gradients(const MlpClassifier& clf, const std::vector<double>& x,
                                         const std::vector<double>& baseline, std::size_t c,
                                         std::size_t steps = 64);

double attribution_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mdjpt::eval
