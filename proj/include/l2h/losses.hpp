#pragma once

#include <span>
#include <utility>
#include <vector>

#include "l2h/core.hpp"
#include "l2h/models.hpp"

namespace l2h {

// Coefficients of the rejector loss for one sample:
//   a = 1 - c_e - c_1 + c_1 * [server correct]   (weight on the remote term)
//   b = [client correct]                          (weight on the local term)
struct L2Weights {
    double a = 0.0;
    double b = 0.0;
};

struct GradReport {
    double loss = 0.0;
    std::vector<double> score_grad;
    std::vector<double> param_grad;
};

// Cross-entropy on the server scores, -log softmax_y, stabilized by max
// subtraction.
double l1_loss(std::span<const double> server_scores, Label y);

// softmax(scores) - onehot(y).
std::vector<double> l1_grad_scores(std::span<const double> server_scores, Label y);

L2Weights l2_weights(Label server_pred, Label client_pred, Label y, const CostParams& costs);

// Weighted two-way log-softmax over the rejector scores:
//   -a * log softmax(r2) - b * log softmax(r1).
double l2_loss(double r1, double r2, const L2Weights& w);

// d/dr1 = (a e^{r1} - b e^{r2}) / (e^{r1} + e^{r2}); d/dr2 is its negation.
std::pair<double, double> l2_grad(double r1, double r2, const L2Weights& w);

GradReport backprop_l1(const ScoreModel& server, const FeatureVector& x, Label y);
GradReport backprop_l2(const ScoreModel& rejector, const FeatureVector& x, const L2Weights& w);

// Midpoint convexity probe of the rejector loss surface for fixed weights:
// (f(u) + f(v))/2 - f((u+v)/2). Non-negative wherever the surface is convex.
double chord_gap(const L2Weights& w, std::pair<double, double> u, std::pair<double, double> v);

}  // namespace l2h
