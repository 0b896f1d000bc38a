#include "l2h/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "l2h/losses.hpp"
#include "l2h/models.hpp"
#include "l2h/rng.hpp"

namespace l2h {

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> at, double h) {
    std::vector<double> grad(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double original = at[i];
        at[i] = original + h;
        const double up = f(at);
        at[i] = original - h;
        const double down = f(at);
        at[i] = original;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), 1e-4);
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

bool GradCheckSummary::passed() const {
    return std::all_of(suites.begin(), suites.end(),
                       [this](const GradCheckSuite& s) { return s.max_rel_error < tolerance; });
}

namespace {

FeatureVector random_input(RandomStream& stream, int dim) {
    FeatureVector x(dim);
    for (double& v : x) v = stream.uniform(-2.0, 2.0);
    return x;
}

L2Weights random_weights(RandomStream& stream) {
    // Spans both the convex (a > 0) and monotone (a <= 0) regimes.
    return {stream.uniform(-1.5, 1.0), stream.below(2) ? 1.0 : 0.0};
}

GradCheckSuite check_l1_scores(int cases, RandomStream& stream, double h) {
    GradCheckSuite suite{"l1 score gradients", cases, 0.0};
    for (int c = 0; c < cases; ++c) {
        const int k = 2 + static_cast<int>(stream.below(5));
        std::vector<double> scores(k);
        for (double& s : scores) s = stream.uniform(-3.0, 3.0);
        const Label y{static_cast<int>(stream.below(k))};
        const auto analytic = l1_grad_scores(scores, y);
        const auto numeric = central_difference(
            [y](const std::vector<double>& s) { return l1_loss(s, y); }, scores, h);
        suite.max_rel_error = std::max(suite.max_rel_error,
                                       max_relative_error(analytic, numeric));
    }
    return suite;
}

GradCheckSuite check_l2_scores(int cases, RandomStream& stream, double h) {
    GradCheckSuite suite{"l2 score gradients", cases, 0.0};
    for (int c = 0; c < cases; ++c) {
        const L2Weights w = random_weights(stream);
        const std::vector<double> at{stream.uniform(-3.0, 3.0), stream.uniform(-3.0, 3.0)};
        const auto [d1, d2] = l2_grad(at[0], at[1], w);
        const auto numeric = central_difference(
            [w](const std::vector<double>& r) { return l2_loss(r[0], r[1], w); }, at, h);
        suite.max_rel_error =
            std::max(suite.max_rel_error, max_relative_error({d1, d2}, numeric));
    }
    return suite;
}

GradCheckSuite check_backprop_l1(Architecture arch, int cases, RandomStream& stream, double h) {
    GradCheckSuite suite{std::string("l1 backprop ") + to_string(arch), cases, 0.0};
    for (int c = 0; c < cases; ++c) {
        const int dim = 2 + static_cast<int>(stream.below(3));
        const int k = 2 + static_cast<int>(stream.below(3));
        ScoreModel model = init_model(arch, dim, k, 8, stream.next_u64());
        const FeatureVector x = random_input(stream, dim);
        const Label y{static_cast<int>(stream.below(k))};
        const GradReport report = backprop_l1(model, x, y);
        const auto numeric = central_difference(
            [&model, &x, y](const std::vector<double>& params) {
                ScoreModel probe = model;
                probe.params = params;
                return l1_loss(forward(probe, x), y);
            },
            model.params, h);
        suite.max_rel_error =
            std::max(suite.max_rel_error, max_relative_error(report.param_grad, numeric));
    }
    return suite;
}

GradCheckSuite check_backprop_l2(Architecture arch, int cases, RandomStream& stream, double h) {
    GradCheckSuite suite{std::string("l2 backprop ") + to_string(arch), cases, 0.0};
    for (int c = 0; c < cases; ++c) {
        const int dim = 2 + static_cast<int>(stream.below(3));
        ScoreModel model = init_model(arch, dim, 2, 8, stream.next_u64());
        const FeatureVector x = random_input(stream, dim);
        const L2Weights w = random_weights(stream);
        const GradReport report = backprop_l2(model, x, w);
        const auto numeric = central_difference(
            [&model, &x, w](const std::vector<double>& params) {
                ScoreModel probe = model;
                probe.params = params;
                const auto scores = forward(probe, x);
                return l2_loss(scores[0], scores[1], w);
            },
            model.params, h);
        suite.max_rel_error =
            std::max(suite.max_rel_error, max_relative_error(report.param_grad, numeric));
    }
    return suite;
}

}  // namespace

GradCheckSummary run_gradient_checks(int cases_per_suite, RngSeed seed, double h,
                                     double tolerance) {
    RandomStream stream(seed);
    GradCheckSummary summary;
    summary.tolerance = tolerance;
    summary.suites.push_back(check_l1_scores(cases_per_suite, stream, h));
    summary.suites.push_back(check_l2_scores(cases_per_suite, stream, h));
    summary.suites.push_back(check_backprop_l1(Architecture::Linear, cases_per_suite, stream, h));
    summary.suites.push_back(check_backprop_l1(Architecture::Mlp1, cases_per_suite, stream, h));
    summary.suites.push_back(check_backprop_l2(Architecture::Linear, cases_per_suite, stream, h));
    summary.suites.push_back(check_backprop_l2(Architecture::Mlp1, cases_per_suite, stream, h));
    return summary;
}

}  // namespace l2h
