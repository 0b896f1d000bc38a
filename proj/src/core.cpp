#include "l2h/core.hpp"

#include <cstdio>
#include <stdexcept>

namespace l2h {

void Dataset::validate() const {
    if (examples.empty()) {
        throw std::invalid_argument("dataset is empty");
    }
    if (num_classes < 1) {
        throw std::invalid_argument("dataset needs at least one class");
    }
    for (const auto& ex : examples) {
        if (static_cast<int>(ex.x.size()) != dim) {
            throw std::invalid_argument("feature dimension mismatch in dataset");
        }
        if (ex.y.index < 0 || ex.y.index >= num_classes) {
            throw std::invalid_argument("label out of range in dataset");
        }
    }
}

void CostParams::validate() const {
    if (reject_cost < 0.0 || inaccuracy_cost < 0.0) {
        throw std::invalid_argument("costs must be non-negative");
    }
}

void GeneralCosts::validate() const {
    if (local_correct > local_error || remote_correct > remote_error ||
        local_correct > remote_correct || local_error > remote_error) {
        throw std::invalid_argument("general costs violate the outcome ordering");
    }
}

Label argmax_label(std::span<const double> scores) {
    if (scores.empty()) {
        throw std::invalid_argument("argmax of empty score vector");
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    return Label{best};
}

Route route_from_scores(double local_score, double remote_score) {
    return local_score > remote_score ? Route::Local : Route::Remote;
}

double generalized_loss(Route route, Label local_pred, Label remote_pred, Label y,
                        const CostParams& costs) {
    if (route == Route::Local) {
        return local_pred == y ? 0.0 : 1.0;
    }
    return remote_pred == y ? costs.reject_cost : costs.reject_cost + costs.inaccuracy_cost;
}

double general_loss(Route route, Label local_pred, Label remote_pred, Label y,
                    const GeneralCosts& costs) {
    if (route == Route::Local) {
        return local_pred == y ? costs.local_correct : costs.local_error;
    }
    return remote_pred == y ? costs.remote_correct : costs.remote_error;
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace l2h
