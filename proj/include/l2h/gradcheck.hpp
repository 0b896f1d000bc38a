#pragma once

#include <functional>
#include <string>
#include <vector>

#include "l2h/core.hpp"

namespace l2h {

// Central finite differences of a scalar function of a parameter vector.
// Touches only forward evaluations, never analytic gradients, so it serves
// as an independent reference for them.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> at, double h = 1e-5);

// Worst relative disagreement between two gradients, component-wise, with a
// small denominator floor so exact zeros do not blow up the ratio.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

struct GradCheckSuite {
    std::string name;
    int cases = 0;
    double max_rel_error = 0.0;
};

struct GradCheckSummary {
    std::vector<GradCheckSuite> suites;
    double tolerance = 1e-4;
    bool passed() const;
};

// Compares every analytic gradient in the loss stack (cross-entropy score
// gradients, rejector-loss gradients, and full backpropagation through both
// architectures) against central differences on random configurations.
GradCheckSummary run_gradient_checks(int cases_per_suite, RngSeed seed, double h = 1e-5,
                                     double tolerance = 1e-4);

}  // namespace l2h
