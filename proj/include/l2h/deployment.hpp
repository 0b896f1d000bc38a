#pragma once

#include <cstdint>
#include <optional>

#include "l2h/core.hpp"
#include "l2h/models.hpp"
#include "l2h/rng.hpp"

namespace l2h {

// Pay-per-request accounting: every deferral costs reject_cost, and a wrong
// server answer adds inaccuracy_cost when the ground truth is known.
struct UsageLedger {
    std::int64_t total_queries = 0;
    std::int64_t remote_queries = 0;
    std::int64_t remote_errors = 0;
    double accumulated_cost = 0.0;

    bool consistent_with(const CostParams& costs, double tolerance = 0.0) const;
};

// Server availability as a function of the (0-based) query step.
class AvailabilitySchedule {
public:
    static AvailabilitySchedule always();
    // Up for the first round(duty * period) slots of every period.
    static AvailabilitySchedule periodic(int period, double duty);
    // Independent up/down per step, derived by hashing (seed, step) so the
    // schedule is random-access and reproducible.
    static AvailabilitySchedule bernoulli(double p_up, RngSeed seed);

    bool available(std::int64_t step) const;

private:
    enum class Kind { Always, Periodic, Bernoulli };
    Kind kind_ = Kind::Always;
    int period_ = 1;
    int up_slots_ = 1;
    double p_up_ = 1.0;
    RngSeed seed_ = 0;
};

// Stochastic post-hoc policy that bounds the deferral rate at q given the
// calibrated empirical rate q1. Under mode (q < q1) thins deferrals with
// pass probability q/q1; over mode (q >= q1) promotes local decisions with
// probability (q - q1)/(1 - q1).
struct BrrPolicy {
    enum class Mode { Under, Over };

    double q = 0.0;
    double q1 = 0.0;
    double p = 0.0;
    Mode mode = Mode::Under;

    static BrrPolicy make(double q, double q1);
};

// Fraction of the calibration set the rejector routes remote.
double calibrate(const HybridSystem& system, const Dataset& calibration_set);

// Routed prediction under the bounded-reject-rate policy. Uniform draws come
// from the caller's dedicated stream; the returned route is the one actually
// used.
std::pair<Label, Route> brr_infer(const HybridSystem& system, const FeatureVector& x,
                                  const BrrPolicy& policy, RandomStream& draws);

// Routed prediction with pay-per-request accounting.
Label ppr_infer(const HybridSystem& system, const FeatureVector& x, const CostParams& costs,
                UsageLedger& ledger, std::optional<Label> truth = std::nullopt);

struct IaOutcome {
    Label label{};
    Route route = Route::Local;  // the route actually used
    bool fallback = false;       // remote requested while the server was down
};

// Routed prediction under intermittent availability: a deferral that hits a
// down slot falls back to the client.
IaOutcome ia_infer(const HybridSystem& system, const FeatureVector& x,
                   const AvailabilitySchedule& schedule, std::int64_t step);

// No rejector at all: defer with probability q.
Label random_reject_baseline(const ScoreModel& client, const ScoreModel& server,
                             const FeatureVector& x, double q, RandomStream& draws);

// Calibrates on one split, runs the bounded-reject-rate policy over another,
// and pits it against the rejector-free baseline at the same realized budget.
struct BrrEvaluation {
    double q = 0.0;
    double q1 = 0.0;
    double p = 0.0;
    BrrPolicy::Mode mode = BrrPolicy::Mode::Under;
    double realized_remote_fraction = 0.0;
    double accuracy = 0.0;
    double baseline_accuracy_at_budget = 0.0;
};
BrrEvaluation brr_evaluate(const HybridSystem& system, const Dataset& calibration_set,
                           const Dataset& test, double q, RngSeed seed);

}  // namespace l2h
