#include "l2h/deployment.hpp"

#include <cmath>
#include <stdexcept>

namespace l2h {

bool UsageLedger::consistent_with(const CostParams& costs, double tolerance) const {
    if (remote_queries > total_queries || remote_errors > remote_queries) {
        return false;
    }
    const double expected = costs.reject_cost * static_cast<double>(remote_queries) +
                            costs.inaccuracy_cost * static_cast<double>(remote_errors);
    return std::abs(accumulated_cost - expected) <= tolerance;
}

AvailabilitySchedule AvailabilitySchedule::always() {
    return AvailabilitySchedule{};
}

AvailabilitySchedule AvailabilitySchedule::periodic(int period, double duty) {
    if (period < 1) {
        throw std::invalid_argument("period must be at least 1");
    }
    if (duty < 0.0 || duty > 1.0) {
        throw std::invalid_argument("duty must lie in [0, 1]");
    }
    AvailabilitySchedule s;
    s.kind_ = Kind::Periodic;
    s.period_ = period;
    s.up_slots_ = static_cast<int>(std::lround(duty * period));
    return s;
}

AvailabilitySchedule AvailabilitySchedule::bernoulli(double p_up, RngSeed seed) {
    if (p_up < 0.0 || p_up > 1.0) {
        throw std::invalid_argument("p_up must lie in [0, 1]");
    }
    AvailabilitySchedule s;
    s.kind_ = Kind::Bernoulli;
    s.p_up_ = p_up;
    s.seed_ = seed;
    return s;
}

bool AvailabilitySchedule::available(std::int64_t step) const {
    switch (kind_) {
        case Kind::Always:
            return true;
        case Kind::Periodic:
            return step % period_ < up_slots_;
        case Kind::Bernoulli: {
            const std::uint64_t h = splitmix64(seed_ ^ static_cast<std::uint64_t>(step));
            const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
            return u < p_up_;
        }
    }
    return true;
}

BrrPolicy BrrPolicy::make(double q, double q1) {
    if (q < 0.0 || q > 1.0 || q1 < 0.0 || q1 > 1.0) {
        throw std::invalid_argument("reject rates must lie in [0, 1]");
    }
    BrrPolicy policy;
    policy.q = q;
    policy.q1 = q1;
    if (q < q1) {
        policy.mode = Mode::Under;
        policy.p = q / q1;  // q1 > q >= 0, so no division by zero here
    } else {
        policy.mode = Mode::Over;
        if (q1 >= 1.0) {
            // Everything is already routed remote; the pass probability only
            // matters for q = 1, where continuity gives p = 1.
            policy.p = q >= 1.0 ? 1.0 : 0.0;
        } else {
            policy.p = (q - q1) / (1.0 - q1);
        }
    }
    return policy;
}

double calibrate(const HybridSystem& system, const Dataset& calibration_set) {
    if (calibration_set.examples.empty()) {
        throw std::invalid_argument("calibration set is empty");
    }
    std::int64_t remote = 0;
    for (const auto& ex : calibration_set.examples) {
        if (route(system.rejector, ex.x) == Route::Remote) {
            ++remote;
        }
    }
    return static_cast<double>(remote) / static_cast<double>(calibration_set.size());
}

std::pair<Label, Route> brr_infer(const HybridSystem& system, const FeatureVector& x,
                                  const BrrPolicy& policy, RandomStream& draws) {
    const Route wanted = route(system.rejector, x);
    if (policy.mode == BrrPolicy::Mode::Under) {
        if (wanted == Route::Remote && draws.uniform() < policy.p) {
            return {predict(system.server, x), Route::Remote};
        }
        return {predict(system.client, x), Route::Local};
    }
    // Over mode: every wanted deferral goes through, and some local
    // decisions are promoted to use up the remaining budget.
    if (wanted == Route::Remote || draws.uniform() < policy.p) {
        return {predict(system.server, x), Route::Remote};
    }
    return {predict(system.client, x), Route::Local};
}

Label ppr_infer(const HybridSystem& system, const FeatureVector& x, const CostParams& costs,
                UsageLedger& ledger, std::optional<Label> truth) {
    const auto [label, used] = infer(system, x);
    ++ledger.total_queries;
    if (used == Route::Remote) {
        ++ledger.remote_queries;
        ledger.accumulated_cost += costs.reject_cost;
        if (truth && !(label == *truth)) {
            ++ledger.remote_errors;
            ledger.accumulated_cost += costs.inaccuracy_cost;
        }
    }
    return label;
}

IaOutcome ia_infer(const HybridSystem& system, const FeatureVector& x,
                   const AvailabilitySchedule& schedule, std::int64_t step) {
    IaOutcome outcome;
    const Route wanted = route(system.rejector, x);
    if (wanted == Route::Remote && schedule.available(step)) {
        outcome.label = predict(system.server, x);
        outcome.route = Route::Remote;
        return outcome;
    }
    outcome.label = predict(system.client, x);
    outcome.route = Route::Local;
    outcome.fallback = wanted == Route::Remote;
    return outcome;
}

Label random_reject_baseline(const ScoreModel& client, const ScoreModel& server,
                             const FeatureVector& x, double q, RandomStream& draws) {
    if (q < 0.0 || q > 1.0) {
        throw std::invalid_argument("q must lie in [0, 1]");
    }
    if (draws.uniform() < q) {
        return predict(server, x);
    }
    return predict(client, x);
}

BrrEvaluation brr_evaluate(const HybridSystem& system, const Dataset& calibration_set,
                           const Dataset& test, double q, RngSeed seed) {
    test.validate();
    BrrEvaluation eval;
    eval.q = q;
    eval.q1 = calibrate(system, calibration_set);
    const BrrPolicy policy = BrrPolicy::make(q, eval.q1);
    eval.p = policy.p;
    eval.mode = policy.mode;

    RandomStream policy_draws(derive_seed(seed, "brr-policy"));
    std::int64_t remote = 0;
    std::int64_t correct = 0;
    for (const auto& ex : test.examples) {
        const auto [label, used] = brr_infer(system, ex.x, policy, policy_draws);
        if (used == Route::Remote) ++remote;
        if (label == ex.y) ++correct;
    }
    const double n = static_cast<double>(test.size());
    eval.realized_remote_fraction = remote / n;
    eval.accuracy = correct / n;

    // Rejector-free baseline spending the same realized budget.
    RandomStream baseline_draws(derive_seed(seed, "brr-baseline"));
    std::int64_t baseline_correct = 0;
    for (const auto& ex : test.examples) {
        const Label label = random_reject_baseline(system.client, system.server, ex.x,
                                                   eval.realized_remote_fraction, baseline_draws);
        if (label == ex.y) ++baseline_correct;
    }
    eval.baseline_accuracy_at_budget = baseline_correct / n;
    return eval;
}

}  // namespace l2h
