#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "l2h/harness.hpp"
#include "l2h/losses.hpp"
#include "l2h/models.hpp"
#include "l2h/oracle.hpp"
#include "l2h/rng.hpp"
#include "l2h/training.hpp"
#include "support.hpp"

using namespace l2h;

namespace {

// A dataset sampled from a small discrete world, so oracle routes are known.
Dataset sample_from_world(const DiscreteWorld& world, int n, RngSeed seed) {
    RandomStream stream(seed);
    Dataset data;
    data.num_classes = world.num_classes();
    data.dim = static_cast<int>(world.support[0].size());
    for (int i = 0; i < n; ++i) {
        double pick = stream.uniform();
        int s = 0;
        while (s + 1 < world.size() && pick >= world.prior[s]) {
            pick -= world.prior[s];
            ++s;
        }
        pick = stream.uniform();
        int y = 0;
        while (y + 1 < world.num_classes() && pick >= world.eta[s][y]) {
            pick -= world.eta[s][y];
            ++y;
        }
        data.examples.push_back({world.support[s], Label{y}});
    }
    return data;
}

HybridSystem fresh_system(const Dataset& data, const ScoreModel& client, RngSeed seed,
                          Architecture arch = Architecture::Mlp1) {
    HybridSystem system;
    system.client = client;
    system.client.frozen = true;
    system.rejector = init_model(arch, data.dim, 2, 8, derive_seed(seed, "rejector-init"));
    system.server = init_model(arch, data.dim, data.num_classes, 8,
                               derive_seed(seed, "server-init"));
    return system;
}

double reject_rate(const ScoreModel& rejector, const Dataset& data) {
    int remote = 0;
    for (const auto& ex : data.examples) {
        if (route(rejector, ex.x) == Route::Remote) ++remote;
    }
    return static_cast<double>(remote) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("sgd_step applies params minus lr times grad") {
    ScoreModel model = init_model(Architecture::Linear, 2, 2, 0, 5);

    GradReport zero;
    zero.param_grad.assign(model.params.size(), 0.0);
    CHECK(sgd_step(model, zero, 0.5).params == model.params);

    GradReport own;
    own.param_grad = model.params;
    const ScoreModel updated = sgd_step(model, own, 1.0);
    for (const double p : updated.params) {
        CHECK(p == 0.0);
    }
}

TEST_CASE("a small sgd step decreases the rejector loss on a convex instance") {
    ScoreModel rejector = init_model(Architecture::Linear, 2, 2, 0, 6);
    const FeatureVector x{0.8, -0.4};
    const L2Weights w{0.75, 1.0};  // a > 0: convex in the scores
    const GradReport before = backprop_l2(rejector, x, w);
    const ScoreModel updated = sgd_step(rejector, before, 0.01);
    const auto scores = forward(updated, x);
    CHECK(l2_loss(scores[0], scores[1], w) < before.loss);
}

TEST_CASE("a single-sample dataset trains one step per loop") {
    Dataset data;
    data.num_classes = 2;
    data.dim = 1;
    data.examples.push_back({{0.5}, Label{1}});

    const ScoreModel client = [] {
        ScoreModel m = init_model(Architecture::Linear, 1, 2, 0, 7);
        m.frozen = true;
        return m;
    }();
    HybridSystem system = fresh_system(data, client, 8, Architecture::Linear);
    const SgdConfig cfg{0.05, 0.05, 1, false, 0};
    const TrainResult result = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    CHECK(result.trace.steps() == 1);
    CHECK(result.trace.epoch_mean_l1.size() == 1);
}

TEST_CASE("training is deterministic given identical seeds") {
    RandomStream stream(31);
    const DiscreteWorld world = l2h::testing::random_world(stream, 6, 3);
    const Dataset data = sample_from_world(world, 300, 11);
    ScoreModel client = init_model(Architecture::Linear, data.dim, data.num_classes, 0, 12);
    client.frozen = true;

    const HybridSystem system = fresh_system(data, client, 13);
    const SgdConfig cfg{0.05, 0.05, 3, true, 77};
    const TrainResult a = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    const TrainResult b = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    CHECK(a.system.server.params == b.system.server.params);
    CHECK(a.system.rejector.params == b.system.rejector.params);
    CHECK(a.trace.l1 == b.trace.l1);
    CHECK(a.trace.l2 == b.trace.l2);

    const TrainResult async_a =
        train_async(system, data, CostParams{0.25, 1.0}, cfg, AsyncConfig{7});
    const TrainResult async_b =
        train_async(system, data, CostParams{0.25, 1.0}, cfg, AsyncConfig{7});
    CHECK(async_a.system.rejector.params == async_b.system.rejector.params);
    CHECK(async_a.trace.l2 == async_b.trace.l2);
}

TEST_CASE("the client never changes during training") {
    RandomStream stream(32);
    const DiscreteWorld world = l2h::testing::random_world(stream, 6, 3);
    const Dataset data = sample_from_world(world, 200, 14);
    ScoreModel client = init_model(Architecture::Mlp1, data.dim, data.num_classes, 8, 15);
    client.frozen = true;
    const std::vector<double> original = client.params;

    const HybridSystem system = fresh_system(data, client, 16);
    const SgdConfig cfg{0.05, 0.05, 2, true, 5};
    const TrainResult sync_result = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    CHECK(sync_result.system.client.params == original);
    const TrainResult async_result =
        train_async(system, data, CostParams{0.25, 1.0}, cfg, AsyncConfig{10});
    CHECK(async_result.system.client.params == original);
}

TEST_CASE("async with interval one is step-identical to sync") {
    RandomStream stream(33);
    const DiscreteWorld world = l2h::testing::random_world(stream, 8, 4);
    const Dataset data = sample_from_world(world, 250, 17);
    ScoreModel client = init_model(Architecture::Linear, data.dim, data.num_classes, 0, 18);
    client.frozen = true;

    const HybridSystem system = fresh_system(data, client, 19);
    const SgdConfig cfg{0.05, 0.05, 2, true, 6};
    const TrainResult sync_result = train_sync(system, data, CostParams{0.25, 1.25}, cfg);
    const TrainResult async_result =
        train_async(system, data, CostParams{0.25, 1.25}, cfg, AsyncConfig{1});
    CHECK(async_result.trace.l1 == sync_result.trace.l1);
    CHECK(async_result.trace.l2 == sync_result.trace.l2);
    CHECK(async_result.system.server.params == sync_result.system.server.params);
    CHECK(async_result.system.rejector.params == sync_result.system.rejector.params);
}

TEST_CASE("a stale snapshot changes the rejector stage but not the server stage") {
    RandomStream stream(34);
    const DiscreteWorld world = l2h::testing::random_world(stream, 8, 4);
    const Dataset data = sample_from_world(world, 400, 20);
    ScoreModel client = init_model(Architecture::Linear, data.dim, data.num_classes, 0, 21);
    client.frozen = true;

    const HybridSystem system = fresh_system(data, client, 22);
    const SgdConfig cfg{0.2, 0.2, 1, false, 0};
    const TrainResult sync_result = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    const TrainResult stale_result =
        train_async(system, data, CostParams{0.25, 1.0}, cfg, AsyncConfig{400});
    // the server stage is oblivious to the snapshot
    CHECK(stale_result.trace.l1 == sync_result.trace.l1);
    CHECK(stale_result.system.server.params == sync_result.system.server.params);
    // with the snapshot frozen at t=1, the rejector sees different weights
    CHECK(stale_result.trace.l2 != sync_result.trace.l2);
}

TEST_CASE("epoch-mean rejector loss is non-increasing on a convex linear instance") {
    // ce = 0.2, c1 = 0 gives a = 0.8 on every sample regardless of the server
    RandomStream stream(35);
    const DiscreteWorld world = l2h::testing::random_world(stream, 6, 3);
    const Dataset data = sample_from_world(world, 300, 23);
    ScoreModel client = init_model(Architecture::Linear, data.dim, data.num_classes, 0, 24);
    client.frozen = true;

    HybridSystem system = fresh_system(data, client, 25, Architecture::Linear);
    const SgdConfig cfg{0.01, 0.01, 6, false, 0};
    const TrainResult result = train_sync(system, data, CostParams{0.2, 0.0}, cfg);
    for (std::size_t e = 1; e < result.trace.epoch_mean_l2.size(); ++e) {
        CHECK(result.trace.epoch_mean_l2[e] <= result.trace.epoch_mean_l2[e - 1] + 1e-12);
    }
}

TEST_CASE("an always-correct client with costly deferral drives the reject rate down") {
    // deterministic world: every label matches the client
    DiscreteWorld world;
    world.support = {{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    world.prior = {0.4, 0.4, 0.2};
    world.eta = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
    ScoreModel client;
    client.architecture = Architecture::Linear;
    client.input_dim = 2;
    client.output_dim = 2;
    // class-0 score favored left and top, class-1 right
    client.params = {-1.0, 1.0, 1.0, -1.0, 0.0, 0.0};
    client.frozen = true;

    const Dataset data = sample_from_world(world, 500, 26);
    HybridSystem system = fresh_system(data, client, 27);
    const double initial = reject_rate(system.rejector, data);
    const SgdConfig cfg{0.05, 0.05, 4, true, 9};
    const TrainResult result = train_sync(system, data, CostParams{0.25, 1.0}, cfg);
    const double final_rate = reject_rate(result.system.rejector, data);
    CHECK(final_rate < initial);
    CHECK(final_rate < 0.05);
}

TEST_CASE("with free deferral the rejector goes remote where the server wins") {
    // two clear points: client hopeless on the first, decent on the second
    DiscreteWorld world;
    world.support = {{-2.0, 0.0}, {2.0, 0.0}};
    world.prior = {0.5, 0.5};
    world.eta = {{0.1, 0.9}, {0.9, 0.1}};
    const auto client_behavior = ClientBehavior::deterministic({Label{0}, Label{0}});

    ScoreModel client;
    client.architecture = Architecture::Linear;
    client.input_dim = 2;
    client.output_dim = 2;
    client.params = {0.0, 0.0, 0.0, 0.0, 1.0, 0.0};  // always predicts class 0
    client.frozen = true;

    const Dataset data = sample_from_world(world, 1500, 28);
    HybridSystem system = fresh_system(data, client, 29);
    const SgdConfig cfg{0.05, 0.05, 6, true, 10};
    const TrainResult result = train_sync(system, data, CostParams{0.0, 0.0}, cfg);

    // oracle: with free costs every point is remote; the margin is widest
    // where the client is almost surely wrong
    const auto oracle_routes = bayes_rejector(world, client_behavior, CostParams{0.0, 0.0});
    CHECK(oracle_routes[0] == Route::Remote);
    CHECK(route(result.system.rejector, world.support[0]) == Route::Remote);
}

TEST_CASE("trace records carry the additive per-step losses") {
    Dataset data;
    data.num_classes = 2;
    data.dim = 1;
    for (int i = 0; i < 5; ++i) {
        data.examples.push_back({{static_cast<double>(i)}, Label{i % 2}});
    }
    ScoreModel client = init_model(Architecture::Linear, 1, 2, 0, 30);
    client.frozen = true;
    HybridSystem system = fresh_system(data, client, 31, Architecture::Linear);
    const TrainResult result =
        train_sync(system, data, CostParams{0.25, 1.0}, SgdConfig{0.05, 0.05, 1, false, 0});

    std::ostringstream records;
    result.trace.export_records(records);
    std::string line;
    std::istringstream lines(records.str());
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto key = line.find("\"l_s\":");
        REQUIRE(key != std::string::npos);
        const double exported = std::stod(line.substr(key + 6));
        CHECK(exported == result.trace.l1[count] + result.trace.l2[count]);
        ++count;
    }
    CHECK(count == result.trace.steps());
}

TEST_CASE("training rejects an empty dataset") {
    Dataset data;
    data.num_classes = 2;
    data.dim = 1;
    ScoreModel client = init_model(Architecture::Linear, 1, 2, 0, 32);
    client.frozen = true;
    HybridSystem system;
    system.client = client;
    system.rejector = init_model(Architecture::Linear, 1, 2, 0, 33);
    system.server = init_model(Architecture::Linear, 1, 2, 0, 34);
    CHECK_THROWS_AS(
        train_sync(system, data, CostParams{0.25, 1.0}, SgdConfig{0.05, 0.05, 1, false, 0}),
        std::invalid_argument);
}

TEST_CASE("invalid configs are rejected") {
    CHECK_THROWS_AS((SgdConfig{0.0, 0.05, 1, false, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SgdConfig{0.05, 0.05, 0, false, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS(AsyncConfig{0}.validate(), std::invalid_argument);
}
