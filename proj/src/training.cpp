#include "l2h/training.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "l2h/rng.hpp"

namespace l2h {

void SgdConfig::validate() const {
    if (lr_server <= 0.0 || lr_rejector <= 0.0) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (epochs < 1) {
        throw std::invalid_argument("epochs must be at least 1");
    }
}

void AsyncConfig::validate() const {
    if (sync_interval < 1) {
        throw std::invalid_argument("sync interval must be at least 1");
    }
}

namespace {

double prefix_mean(const std::vector<double>& values, std::size_t upto) {
    const std::size_t n = std::min(upto, values.size());
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[i];
    return sum / static_cast<double>(n);
}

}  // namespace

double TrainTrace::running_mean_l1(std::size_t upto) const { return prefix_mean(l1, upto); }

double TrainTrace::running_mean_l2(std::size_t upto) const { return prefix_mean(l2, upto); }

double TrainTrace::final_window_mean(std::size_t window) const {
    if (l1.empty()) return 0.0;
    const std::size_t n = std::min(window, l1.size());
    double sum = 0.0;
    for (std::size_t i = l1.size() - n; i < l1.size(); ++i) {
        sum += l1[i] + l2[i];
    }
    return sum / static_cast<double>(n);
}

void TrainTrace::export_records(std::ostream& out) const {
    for (std::size_t i = 0; i < l1.size(); ++i) {
        out << "{\"step\":" << i + 1 << ",\"l1\":" << format_double(l1[i])
            << ",\"l2\":" << format_double(l2[i])
            << ",\"l_s\":" << format_double(l1[i] + l2[i])
            << ",\"server_stage_ns\":" << server_stage_ns[i]
            << ",\"rejector_stage_ns\":" << rejector_stage_ns[i] << "}\n";
    }
}

ScoreModel sgd_step(const ScoreModel& model, const GradReport& grads, double learning_rate) {
    if (model.frozen) {
        throw std::logic_error("attempted SGD update of a frozen model");
    }
    if (grads.param_grad.size() != model.params.size()) {
        throw std::invalid_argument("gradient size does not match parameter count");
    }
    ScoreModel updated = model;
    for (std::size_t i = 0; i < updated.params.size(); ++i) {
        updated.params[i] -= learning_rate * grads.param_grad[i];
    }
    return updated;
}

namespace {

// Both training loops differ only in which server parameters score the
// sample during the rejector stage.
TrainResult run_loop(const HybridSystem& input, const Dataset& data, const CostParams& costs,
                     const SgdConfig& cfg, int sync_interval) {
    cfg.validate();
    data.validate();
    input.validate();
    costs.validate();

    HybridSystem system = input;
    const bool async = sync_interval > 0;
    ScoreModel server_snapshot = system.server;

    TrainTrace trace;
    const std::size_t total_steps = data.size() * static_cast<std::size_t>(cfg.epochs);
    trace.l1.reserve(total_steps);
    trace.l2.reserve(total_steps);
    trace.server_stage_ns.reserve(total_steps);
    trace.rejector_stage_ns.reserve(total_steps);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    RandomStream shuffle_stream(derive_seed(cfg.seed, "train-shuffle"));

    using clock = std::chrono::steady_clock;
    std::size_t step = 0;  // 1-based after increment, counted across epochs
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            shuffle_stream.shuffle(order);
        }
        double epoch_l1 = 0.0;
        double epoch_l2 = 0.0;
        for (const std::size_t idx : order) {
            ++step;
            const auto& [x, y] = data.examples[idx];

            const auto server_start = clock::now();
            const GradReport server_grad = backprop_l1(system.server, x, y);
            system.server = sgd_step(system.server, server_grad, cfg.lr_server);
            const auto server_end = clock::now();

            if (async && (step - 1) % static_cast<std::size_t>(sync_interval) == 0) {
                server_snapshot = system.server;
            }
            const ScoreModel& scoring_server = async ? server_snapshot : system.server;

            const Label server_pred = predict(scoring_server, x);
            const Label client_pred = predict(system.client, x);
            const L2Weights w = l2_weights(server_pred, client_pred, y, costs);
            const GradReport rejector_grad = backprop_l2(system.rejector, x, w);
            system.rejector = sgd_step(system.rejector, rejector_grad, cfg.lr_rejector);
            const auto rejector_end = clock::now();

            trace.l1.push_back(server_grad.loss);
            trace.l2.push_back(rejector_grad.loss);
            trace.server_stage_ns.push_back(
                std::chrono::duration_cast<std::chrono::nanoseconds>(server_end - server_start)
                    .count());
            trace.rejector_stage_ns.push_back(
                std::chrono::duration_cast<std::chrono::nanoseconds>(rejector_end - server_end)
                    .count());
            epoch_l1 += server_grad.loss;
            epoch_l2 += rejector_grad.loss;
        }
        trace.epoch_mean_l1.push_back(epoch_l1 / static_cast<double>(data.size()));
        trace.epoch_mean_l2.push_back(epoch_l2 / static_cast<double>(data.size()));
    }
    return {std::move(system), std::move(trace)};
}

}  // namespace

TrainResult train_sync(const HybridSystem& system, const Dataset& data, const CostParams& costs,
                       const SgdConfig& cfg) {
    return run_loop(system, data, costs, cfg, /*sync_interval=*/0);
}

TrainResult train_async(const HybridSystem& system, const Dataset& data, const CostParams& costs,
                        const SgdConfig& cfg, const AsyncConfig& async_cfg) {
    async_cfg.validate();
    return run_loop(system, data, costs, cfg, async_cfg.sync_interval);
}

}  // namespace l2h
