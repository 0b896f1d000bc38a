#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "l2h/core.hpp"
#include "l2h/losses.hpp"
#include "l2h/models.hpp"

namespace l2h {

struct SgdConfig {
    double lr_server = 0.05;
    double lr_rejector = 0.05;
    int epochs = 1;
    bool shuffle = false;
    RngSeed seed = 0;

    void validate() const;
};

struct AsyncConfig {
    // The rejector's server snapshot refreshes at steps t = 1, S+1, 2S+1, ...
    // (1-based, counted across epochs).
    int sync_interval = 1;

    void validate() const;
};

struct TrainTrace {
    std::vector<double> l1;  // per-step server loss, recorded before its update
    std::vector<double> l2;  // per-step rejector loss, recorded before its update
    std::vector<std::int64_t> server_stage_ns;
    std::vector<std::int64_t> rejector_stage_ns;
    std::vector<double> epoch_mean_l1;
    std::vector<double> epoch_mean_l2;

    std::size_t steps() const { return l1.size(); }
    // Means of the first `upto` steps (1-based count).
    double running_mean_l1(std::size_t upto) const;
    double running_mean_l2(std::size_t upto) const;
    // Mean of l1 + l2 over the trailing window (clamped to the trace length).
    double final_window_mean(std::size_t window) const;
    // One record per step: step, l1, l2, l_s, stage timings.
    void export_records(std::ostream& out) const;
};

// One SGD update, params - lr * grad. Frozen models reject updates.
ScoreModel sgd_step(const ScoreModel& model, const GradReport& grads, double learning_rate);

struct TrainResult {
    HybridSystem system;
    TrainTrace trace;
};

// Per sample: cross-entropy step on the server, then a rejector step whose
// weights use the just-updated server's prediction.
TrainResult train_sync(const HybridSystem& system, const Dataset& data, const CostParams& costs,
                       const SgdConfig& cfg);

// Same loop, but the rejector stage scores the sample with a stale server
// snapshot that refreshes only every sync_interval steps.
TrainResult train_async(const HybridSystem& system, const Dataset& data, const CostParams& costs,
                        const SgdConfig& cfg, const AsyncConfig& async_cfg);

}  // namespace l2h
