#include "mdjpt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "mdjpt/dsp.hpp"
#include "mdjpt/error.hpp"
#include "mdjpt/graph.hpp"

namespace mdjpt::eval {

using nn::Graph;
using nn::Tensor;
using nn::Var;

Tensor lds_smooth(const Tensor& seq, double process_noise, double observation_noise) {
    if (seq.rank() != 2) throw Error("DimensionMismatch", "lds_smooth expects [n x F]");
    const std::size_t n = seq.dim(0), F = seq.dim(1);
    const double q = process_noise, r = observation_noise;
    if (q <= 0 || r <= 0) throw Error("SchemaViolation", "noise variances must be positive");
    Tensor out({n, F});
    std::vector<double> xf(n), p(n), pp(n);
    for (std::size_t f = 0; f < F; ++f) {
        xf[0] = seq.at(0, f);
        p[0] = r;
        pp[0] = r;
        for (std::size_t t = 1; t < n; ++t) {
            const double pred_p = p[t - 1] + q;
            const double k = pred_p / (pred_p + r);
            xf[t] = xf[t - 1] + k * (seq.at(t, f) - xf[t - 1]);
            p[t] = (1.0 - k) * pred_p;
            pp[t] = pred_p;
        }
        out.at(n - 1, f) = xf[n - 1];
        double next = xf[n - 1];
        for (std::size_t t = n - 1; t-- > 0;) {
            const double c = p[t] / pp[t + 1];
            const double xs = xf[t] + c * (next - xf[t]);
            out.at(t, f) = xs;
            next = xs;
        }
    }
    return out;
}

const std::vector<Band>& default_bands() {
    static const std::vector<Band> bands = {
        {"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 14.0},
        {"beta", 14.0, 31.0}, {"gamma", 31.0, 47.0},
    };
    return bands;
}

std::vector<double> de_features(const Tensor& window, double rate_hz,
                                const std::vector<Band>& bands) {
    const std::size_t C = window.dim(0), T = window.dim(1);
    std::vector<double> out;
    out.reserve(C * bands.size());
    std::vector<double> row(T);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t) row[t] = window.at(c, t);
        for (const auto& band : bands) {
            double var = dsp::band_variance(row, rate_hz, band.lo_hz, band.hi_hz);
            var = std::max(var, 1e-12);
            out.push_back(0.5 * std::log(2.0 * M_PI * M_E * var));
        }
    }
    return out;
}

MlpClassifier::MlpClassifier(std::size_t in_dim, std::size_t hidden, std::size_t n_classes,
                             std::uint64_t seed)
    : in_dim_(in_dim),
      hidden_(hidden),
      n_classes_(n_classes),
      w1_({in_dim, hidden}),
      b1_({hidden}),
      gamma_(Tensor::full({hidden}, 1.0)),
      beta_({hidden}),
      w2_({hidden, n_classes}),
      b2_({n_classes}),
      run_mean_(hidden, 0.0),
      run_var_(hidden, 1.0) {
    std::mt19937_64 rng(seed);
    w1_.fill_uniform(rng, -1.0 / std::sqrt(double(in_dim)), 1.0 / std::sqrt(double(in_dim)));
    w2_.fill_uniform(rng, -1.0 / std::sqrt(double(hidden)), 1.0 / std::sqrt(double(hidden)));
}

namespace {
constexpr double kBnEps = 1e-5;
}

std::vector<double> MlpClassifier::predict_proba(const std::vector<double>& x) const {
    std::vector<double> logits(n_classes_, 0.0);
    for (std::size_t c = 0; c < n_classes_; ++c) logits[c] = class_logit(x, c);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

Tensor MlpClassifier::predict_proba(const Tensor& features) const {
    const std::size_t n = features.dim(0);
    Tensor out({n, n_classes_});
    std::vector<double> x(in_dim_);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < in_dim_; ++f) x[f] = features.at(i, f);
        auto p = predict_proba(x);
        for (std::size_t c = 0; c < n_classes_; ++c) out.at(i, c) = p[c];
    }
    return out;
}

double MlpClassifier::class_logit(const std::vector<double>& x, std::size_t c) const {
    if (x.size() != in_dim_) throw Error("DimensionMismatch", "classifier input size");
    double logit = b2_[c];
    for (std::size_t h = 0; h < hidden_; ++h) {
        double pre = b1_[h];
        for (std::size_t f = 0; f < in_dim_; ++f) pre += x[f] * w1_.at(f, h);
        const double norm =
            (pre - run_mean_[h]) / std::sqrt(run_var_[h] + kBnEps) * gamma_[h] + beta_[h];
        if (norm > 0) logit += norm * w2_.at(h, c);
    }
    return logit;
}

std::vector<double> MlpClassifier::class_logit_grad(const std::vector<double>& x,
                                                    std::size_t c) const {
    std::vector<double> grad(in_dim_, 0.0);
    for (std::size_t h = 0; h < hidden_; ++h) {
        double pre = b1_[h];
        for (std::size_t f = 0; f < in_dim_; ++f) pre += x[f] * w1_.at(f, h);
        const double scale = gamma_[h] / std::sqrt(run_var_[h] + kBnEps);
        const double hn = (pre - run_mean_[h]) * scale + beta_[h];
        if (hn <= 0) continue;
        const double up = w2_.at(h, c) * scale;
        for (std::size_t f = 0; f < in_dim_; ++f) grad[f] += up * w1_.at(f, h);
    }
    return grad;
}

void MlpClassifier::fit(const Tensor& features, const std::vector<int>& labels,
                        const ClassifierConfig& cfg, std::mt19937_64& rng) {
    const std::size_t n = features.dim(0);
    if (n == 0 || labels.size() != n)
        throw Error("DimensionMismatch", "features/labels length mismatch");
    if (std::set<int>(labels.begin(), labels.end()).size() < 2)
        throw Error("SingleClassTraining", "need at least two classes to fit");

    struct Slot {
        Tensor* t;
        Tensor m, v;
        bool decay;
    };
    // order must match grads_of below; decay applies to the weight matrices only
    std::vector<Slot> slots;
    slots.push_back({&w1_, Tensor(w1_.shape), Tensor(w1_.shape), true});
    for (Tensor* t : {&b1_, &gamma_, &beta_})
        slots.push_back({t, Tensor(t->shape), Tensor(t->shape), false});
    slots.push_back({&w2_, Tensor(w2_.shape), Tensor(w2_.shape), true});
    slots.push_back({&b2_, Tensor(b2_.shape), Tensor(b2_.shape), false});

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t step = 0;
    constexpr double b1c = 0.9, b2c = 0.999, eps = 1e-8, momentum = 0.1;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t off = 0; off < n; off += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - off);
            if (bsz < 2) continue;  // batch norm needs a real batch
            Tensor xb({bsz, in_dim_});
            std::vector<int> yb(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                for (std::size_t f = 0; f < in_dim_; ++f)
                    xb.at(i, f) = features.at(idx[off + i], f);
                yb[i] = labels[idx[off + i]];
            }
            Graph g;
            Var vw1 = g.leaf(w1_, true), vb1 = g.leaf(b1_, true);
            Var vg = g.leaf(gamma_, true), vb = g.leaf(beta_, true);
            Var vw2 = g.leaf(w2_, true), vb2 = g.leaf(b2_, true);
            std::vector<double> bm, bv;
            Var h = g.linear(g.constant(xb), vw1, vb1);
            Var a = g.relu(g.batchnorm_train(h, vg, vb, kBnEps, &bm, &bv));
            Var loss = g.softmax_cross_entropy(g.linear(a, vw2, vb2), yb);
            g.backward(loss);

            for (std::size_t hidx = 0; hidx < hidden_; ++hidx) {
                run_mean_[hidx] = (1.0 - momentum) * run_mean_[hidx] + momentum * bm[hidx];
                run_var_[hidx] = (1.0 - momentum) * run_var_[hidx] + momentum * bv[hidx];
            }

            Var grads_of[6] = {vw1, vb1, vg, vb, vw2, vb2};
            ++step;
            const double bc1 = 1.0 - std::pow(b1c, double(step));
            const double bc2 = 1.0 - std::pow(b2c, double(step));
            for (std::size_t s = 0; s < slots.size(); ++s) {
                auto& slot = slots[s];
                const Tensor& grad = grads_of[s]->grad;
                for (std::size_t i = 0; i < slot.t->numel(); ++i) {
                    slot.m[i] = b1c * slot.m[i] + (1.0 - b1c) * grad[i];
                    slot.v[i] = b2c * slot.v[i] + (1.0 - b2c) * grad[i] * grad[i];
                    const double mhat = slot.m[i] / bc1, vhat = slot.v[i] / bc2;
                    double upd = mhat / (std::sqrt(vhat) + eps);
                    if (slot.decay) upd += cfg.weight_decay * (*slot.t)[i];
                    (*slot.t)[i] -= cfg.learning_rate * upd;
                }
            }
        }
    }
}

MlpClassifier train_classifier(const Tensor& features, const std::vector<int>& labels,
                               const ClassifierConfig& cfg, std::mt19937_64& rng) {
    int n_classes = 0;
    for (int l : labels) n_classes = std::max(n_classes, l + 1);
    MlpClassifier clf(features.dim(1), cfg.hidden_units, std::size_t(n_classes), rng());
    clf.fit(features, labels, cfg, rng);
    return clf;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "accuracy: " << accuracy << "\n";
    os << "precision: " << precision << "\n";
    os << "recall: " << recall << "\n";
    os << "f1: " << f1 << "\n";
    os << "auroc: " << auroc << "\n";
    os << "auroc_skipped_classes: " << auroc_skipped_classes << "\n";
    os << "confusion:\n";
    for (const auto& row : confusion) {
        os << " ";
        for (long v : row) os << " " << v;
        os << "\n";
    }
    return os.str();
}

namespace {

// one-vs-rest AUROC for class c by trapezoidal integration over tie groups
double ovr_auroc(const Tensor& probs, const std::vector<int>& labels, std::size_t c) {
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs.at(a, c) > probs.at(b, c);
    });
    double pos = 0, neg = 0;
    for (int l : labels) (std::size_t(l) == c ? pos : neg) += 1.0;
    double tp = 0, fp = 0, area = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double dtp = 0, dfp = 0;
        do {  // consume at least one element so non-comparable scores cannot stall
            (std::size_t(labels[order[j]]) == c ? dtp : dfp) += 1.0;
            ++j;
        } while (j < n && probs.at(order[j], c) == probs.at(order[i], c));
        area += dfp * (tp + 0.5 * dtp);
        tp += dtp;
        fp += dfp;
        i = j;
    }
    return area / (pos * neg);
}

}  // namespace

MetricsReport compute_metrics(const Tensor& probabilities, const std::vector<int>& labels) {
    const std::size_t n = probabilities.dim(0), ncls = probabilities.dim(1);
    if (n == 0 || labels.size() != n)
        throw Error("DimensionMismatch", "probabilities/labels length mismatch");
    MetricsReport rep;
    rep.confusion.assign(ncls, std::vector<long>(ncls, 0));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pred = 0;
        for (std::size_t c = 1; c < ncls; ++c)
            if (probabilities.at(i, c) > probabilities.at(i, pred)) pred = c;
        rep.confusion[std::size_t(labels[i])][pred] += 1;
    }
    long correct = 0;
    for (std::size_t c = 0; c < ncls; ++c) correct += rep.confusion[c][c];
    rep.accuracy = double(correct) / double(n);

    double psum = 0, rsum = 0, fsum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < ncls; ++c) {
        long support = 0, predicted = 0;
        for (std::size_t j = 0; j < ncls; ++j) {
            support += rep.confusion[c][j];
            predicted += rep.confusion[j][c];
        }
        if (support == 0) continue;
        ++present;
        const long tp = rep.confusion[c][c];
        const double prec = predicted > 0 ? double(tp) / double(predicted) : 0.0;
        const double rec = double(tp) / double(support);
        psum += prec;
        rsum += rec;
        fsum += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    rep.precision = psum / double(present);
    rep.recall = rsum / double(present);
    rep.f1 = fsum / double(present);

    double asum = 0;
    std::size_t ausable = 0;
    for (std::size_t c = 0; c < ncls; ++c) {
        std::size_t pos = 0;
        for (int l : labels)
            if (std::size_t(l) == c) ++pos;
        if (pos == 0 || pos == n) {
            ++rep.auroc_skipped_classes;
            continue;
        }
        asum += ovr_auroc(probabilities, labels, c);
        ++ausable;
    }
    if (ausable == 0) throw Error("UndefinedAUROC", "no class has both positives and negatives");
    rep.auroc = asum / double(ausable);
    return rep;
}

namespace {

template <typename FeatureFn>
std::vector<TrialFeatures> extract_with(const data::DatasetManifest& man,
                                        std::size_t window_samples, std::size_t stride,
                                        double lds_q, double lds_r, FeatureFn&& features_of) {
    if (stride == 0) throw Error("SchemaViolation", "window stride must be positive");
    std::vector<TrialFeatures> out;
    for (std::size_t s = 0; s < man.n_subjects; ++s) {
        for (std::size_t v = 0; v < man.n_trials_per_subject; ++v) {
            data::TrialEpoch epoch = data::read_epoch(man.epoch_path(s, v));
            const std::size_t T = epoch.samples();
            if (T < window_samples)
                throw Error("TrialTooShort", man.dataset_id + " trial " + std::to_string(v));
            std::vector<std::vector<double>> rows;
            for (std::size_t start = 0; start + window_samples <= T; start += stride) {
                Tensor w({epoch.channels(), window_samples});
                for (std::size_t c = 0; c < epoch.channels(); ++c)
                    for (std::size_t t = 0; t < window_samples; ++t)
                        w.at(c, t) = epoch.data.at(c, start + t);
                rows.push_back(features_of(w, epoch.sampling_rate_hz));
            }
            Tensor seq({rows.size(), rows[0].size()});
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t f = 0; f < rows[i].size(); ++f) seq.at(i, f) = rows[i][f];
            Tensor smoothed = lds_smooth(seq, lds_q, lds_r);
            TrialFeatures tf;
            tf.label = man.label(v);
            tf.subject = s;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::vector<double> row(rows[i].size());
                for (std::size_t f = 0; f < row.size(); ++f) row[f] = smoothed.at(i, f);
                tf.windows.push_back(std::move(row));
            }
            out.push_back(std::move(tf));
        }
    }
    return out;
}

}  // namespace

std::vector<TrialFeatures> extract_features(const data::DatasetManifest& manifest,
                                            const model::EncoderModel& m,
                                            std::size_t window_samples, std::size_t stride,
                                            double lds_q, double lds_r) {
    return extract_with(manifest, window_samples, stride, lds_q, lds_r,
                        [&](const Tensor& w, double) {
                            Graph g;
                            auto bound = m.bind(g, false);
                            auto out = m.forward(g, bound, w);
                            std::vector<double> f = out.feature->val.v;
                            // both alignment losses compare embeddings by
                            // cosine, so only the direction is trained; drop
                            // the arbitrary per-window magnitude
                            double n2 = 0;
                            for (double x : f) n2 += x * x;
                            if (n2 > 0) {
                                const double inv = 1.0 / std::sqrt(n2);
                                for (double& x : f) x *= inv;
                            }
                            return f;
                        });
}

std::vector<TrialFeatures> extract_de_features(const data::DatasetManifest& manifest,
                                               std::size_t window_samples, std::size_t stride,
                                               double lds_q, double lds_r) {
    return extract_with(manifest, window_samples, stride, lds_q, lds_r,
                        [](const Tensor& w, double rate) { return de_features(w, rate); });
}

FewShotResult few_shot_protocol(const std::vector<TrialFeatures>& trials,
                                std::size_t n_subjects, const FewShotConfig& cfg) {
    if (n_subjects < 4) throw Error("TooFewSubjects", "few-shot split needs >= 4 subjects");
    if (trials.empty()) throw Error("EmptyList", "no trials");
    const std::size_t n_train =
        std::max<std::size_t>(1, std::size_t(std::llround(cfg.train_fraction * n_subjects)));
    const std::size_t F = trials[0].windows[0].size();

    FewShotResult res;
    res.n_train_subjects = n_train;
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (rep + 1)));
        std::vector<std::size_t> subjects(n_subjects);
        std::iota(subjects.begin(), subjects.end(), 0);
        std::shuffle(subjects.begin(), subjects.end(), rng);
        std::set<std::size_t> train_set(subjects.begin(), subjects.begin() + n_train);

        std::vector<std::vector<double>> xtr, xte;
        std::vector<int> ytr, yte;
        std::set<std::size_t> train_seen, test_seen;
        for (const auto& tf : trials) {
            const bool in_train = train_set.count(tf.subject) != 0;
            (in_train ? train_seen : test_seen).insert(tf.subject);
            for (const auto& row : tf.windows) {
                (in_train ? xtr : xte).push_back(row);
                (in_train ? ytr : yte).push_back(tf.label);
            }
        }
        // leak audit: no subject may feed both sides of the split
        for (std::size_t s : train_seen)
            if (test_seen.count(s))
                throw Error("SubjectLeak", "subject " + std::to_string(s) + " in both splits");

        Tensor ftr({xtr.size(), F}), fte({xte.size(), F});
        for (std::size_t i = 0; i < xtr.size(); ++i)
            for (std::size_t f = 0; f < F; ++f) ftr.at(i, f) = xtr[i][f];
        for (std::size_t i = 0; i < xte.size(); ++i)
            for (std::size_t f = 0; f < F; ++f) fte.at(i, f) = xte[i][f];

        MlpClassifier clf = train_classifier(ftr, ytr, cfg.classifier, rng);
        res.repeats.push_back(compute_metrics(clf.predict_proba(fte), yte));
    }
    double asum = 0, a2sum = 0, fsum = 0, usum = 0;
    for (const auto& r : res.repeats) {
        asum += r.accuracy;
        a2sum += r.accuracy * r.accuracy;
        fsum += r.f1;
        usum += r.auroc;
    }
    const double k = double(res.repeats.size());
    res.accuracy_mean = asum / k;
    res.accuracy_std = std::sqrt(std::max(0.0, a2sum / k - res.accuracy_mean * res.accuracy_mean));
    res.f1_mean = fsum / k;
    res.auroc_mean = usum / k;
    return res;
}

double zero_shot_nn(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels) {
    const std::size_t n = features.size();
    if (n < 2 || labels.size() != n)
        throw Error("DimensionMismatch", "zero_shot_nn needs >= 2 labeled samples");
    auto sim = [&](std::size_t i, std::size_t j) {
        double d = 0, ni = 0, nj = 0;
        for (std::size_t f = 0; f < features[i].size(); ++f) {
            d += features[i][f] * features[j][f];
            ni += features[i][f] * features[i][f];
            nj += features[j][f] * features[j][f];
        }
        if (ni == 0 || nj == 0) return -2.0;
        return d / (std::sqrt(ni) * std::sqrt(nj));
    };
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = i == 0 ? 1 : 0;
        double best_sim = sim(i, best);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || j == best) continue;
            const double s = sim(i, j);
            if (s > best_sim) {  // ties keep the lowest index
                best_sim = s;
                best = j;
            }
        }
        if (labels[best] == labels[i]) ++correct;
    }
    return double(correct) / double(n);
}

double silhouette_pair(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error("DegenerateCluster", "silhouette needs >= 2 samples per cluster");
    auto dist = [](const std::vector<double>& x, const std::vector<double>& y) {
        double s = 0;
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double d = x[f] - y[f];
            s += d * d;
        }
        return std::sqrt(s);
    };
    auto side = [&](const std::vector<std::vector<double>>& own,
                    const std::vector<std::vector<double>>& other) {
        double total = 0;
        for (std::size_t i = 0; i < own.size(); ++i) {
            double ai = 0, bi = 0;
            for (std::size_t j = 0; j < own.size(); ++j)
                if (j != i) ai += dist(own[i], own[j]);
            ai /= double(own.size() - 1);
            for (const auto& y : other) bi += dist(own[i], y);
            bi /= double(other.size());
            const double m = std::max(ai, bi);
            total += m > 0 ? (bi - ai) / m : 0.0;
        }
        return total;
    };
    return (side(a, b) + side(b, a)) / double(a.size() + b.size());
}

std::vector<double> integrated_gradients(const MlpClassifier& clf, const std::vector<double>& x,
                                         const std::vector<double>& baseline, std::size_t c,
                                         std::size_t steps) {
    if (steps < 2) throw Error("SchemaViolation", "integrated gradients needs >= 2 steps");
    if (x.size() != baseline.size())
        throw Error("DimensionMismatch", "baseline size mismatch");
    const std::size_t F = x.size();
    std::vector<double> acc(F, 0.0), point(F);
    for (std::size_t k = 0; k < steps; ++k) {
        const double alpha = (double(k) + 0.5) / double(steps);
        for (std::size_t f = 0; f < F; ++f)
            point[f] = baseline[f] + alpha * (x[f] - baseline[f]);
        auto grad = clf.class_logit_grad(point, c);
        for (std::size_t f = 0; f < F; ++f) acc[f] += grad[f];
    }
    for (std::size_t f = 0; f < F; ++f) acc[f] = (x[f] - baseline[f]) * acc[f] / double(steps);
    return acc;
}

double attribution_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw Error("DimensionMismatch", "correlation needs two equal vectors of length >= 2");
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da == 0 || db == 0) throw Error("ZeroVariance", "constant attribution vector");
    return num / std::sqrt(da * db);
}

}  // namespace mdjpt::eval
