#include "l2h/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace l2h {

namespace {

// log(e^{r1} + e^{r2}) without overflow.
double log_sum_exp2(double r1, double r2) {
    const double m = std::max(r1, r2);
    return m + std::log(std::exp(r1 - m) + std::exp(r2 - m));
}

// Chains a score-space gradient through the model parameters.
std::vector<double> param_grad_from_scores(const ScoreModel& model, const FeatureVector& x,
                                           const ForwardCache& cache,
                                           std::span<const double> score_grad) {
    std::vector<double> grad(model.params.size(), 0.0);
    const int in = model.input_dim;
    const int out = model.output_dim;

    if (model.architecture == Architecture::Linear) {
        double* dw = grad.data();
        double* db = dw + static_cast<std::size_t>(out) * in;
        for (int o = 0; o < out; ++o) {
            const double g = score_grad[o];
            double* row = dw + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) row[i] = g * x[i];
            db[o] = g;
        }
        return grad;
    }

    const int hid = model.hidden_dim;
    const double* w2 = model.params.data() + static_cast<std::size_t>(hid) * in + hid;
    double* dw1 = grad.data();
    double* db1 = dw1 + static_cast<std::size_t>(hid) * in;
    double* dw2 = db1 + hid;
    double* db2 = dw2 + static_cast<std::size_t>(out) * hid;

    for (int o = 0; o < out; ++o) {
        const double g = score_grad[o];
        double* row = dw2 + static_cast<std::size_t>(o) * hid;
        for (int h = 0; h < hid; ++h) row[h] = g * cache.hidden_act[h];
        db2[o] = g;
    }
    for (int h = 0; h < hid; ++h) {
        // Rectifier subgradient: 0 at and below the kink.
        if (cache.hidden_pre[h] <= 0.0) continue;
        double gh = 0.0;
        for (int o = 0; o < out; ++o) {
            gh += score_grad[o] * w2[static_cast<std::size_t>(o) * hid + h];
        }
        double* row = dw1 + static_cast<std::size_t>(h) * in;
        for (int i = 0; i < in; ++i) row[i] = gh * x[i];
        db1[h] = gh;
    }
    return grad;
}

}  // namespace

double l1_loss(std::span<const double> server_scores, Label y) {
    if (server_scores.empty()) {
        throw std::invalid_argument("l1_loss on empty score vector");
    }
    const double m = *std::max_element(server_scores.begin(), server_scores.end());
    double sum = 0.0;
    for (const double s : server_scores) sum += std::exp(s - m);
    return std::log(sum) - (server_scores[y.index] - m);
}

std::vector<double> l1_grad_scores(std::span<const double> server_scores, Label y) {
    const double m = *std::max_element(server_scores.begin(), server_scores.end());
    std::vector<double> grad(server_scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < server_scores.size(); ++i) {
        grad[i] = std::exp(server_scores[i] - m);
        sum += grad[i];
    }
    for (double& g : grad) g /= sum;
    grad[y.index] -= 1.0;
    return grad;
}

L2Weights l2_weights(Label server_pred, Label client_pred, Label y, const CostParams& costs) {
    L2Weights w;
    w.a = 1.0 - costs.reject_cost - costs.inaccuracy_cost +
          (server_pred == y ? costs.inaccuracy_cost : 0.0);
    w.b = client_pred == y ? 1.0 : 0.0;
    return w;
}

double l2_loss(double r1, double r2, const L2Weights& w) {
    const double lse = log_sum_exp2(r1, r2);
    return -w.a * (r2 - lse) - w.b * (r1 - lse);
}

std::pair<double, double> l2_grad(double r1, double r2, const L2Weights& w) {
    const double m = std::max(r1, r2);
    const double e1 = std::exp(r1 - m);
    const double e2 = std::exp(r2 - m);
    const double d_r1 = (w.a * e1 - w.b * e2) / (e1 + e2);
    return {d_r1, -d_r1};
}

GradReport backprop_l1(const ScoreModel& server, const FeatureVector& x, Label y) {
    const ForwardCache cache = forward_cached(server, x);
    GradReport report;
    report.loss = l1_loss(cache.scores, y);
    report.score_grad = l1_grad_scores(cache.scores, y);
    report.param_grad = param_grad_from_scores(server, x, cache, report.score_grad);
    return report;
}

GradReport backprop_l2(const ScoreModel& rejector, const FeatureVector& x, const L2Weights& w) {
    if (rejector.output_dim != 2) {
        throw std::invalid_argument("rejector must have exactly two outputs");
    }
    const ForwardCache cache = forward_cached(rejector, x);
    GradReport report;
    report.loss = l2_loss(cache.scores[0], cache.scores[1], w);
    const auto [d1, d2] = l2_grad(cache.scores[0], cache.scores[1], w);
    report.score_grad = {d1, d2};
    report.param_grad = param_grad_from_scores(rejector, x, cache, report.score_grad);
    return report;
}

double chord_gap(const L2Weights& w, std::pair<double, double> u, std::pair<double, double> v) {
    const double at_u = l2_loss(u.first, u.second, w);
    const double at_v = l2_loss(v.first, v.second, w);
    const double at_mid = l2_loss((u.first + v.first) / 2.0, (u.second + v.second) / 2.0, w);
    return (at_u + at_v) / 2.0 - at_mid;
}

}  // namespace l2h
