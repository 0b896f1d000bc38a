#pragma once

#include <vector>

#include "l2h/core.hpp"
#include "l2h/oracle.hpp"
#include "l2h/rng.hpp"

namespace l2h::testing {

// Random finite world with normalized uniform prior and posterior rows.
inline DiscreteWorld random_world(RandomStream& stream, int max_points = 20,
                                  int max_classes = 5) {
    const int s_count = 1 + static_cast<int>(stream.below(max_points));
    const int k = 2 + static_cast<int>(stream.below(max_classes - 1));
    DiscreteWorld world;
    auto random_simplex = [&stream](int n) {
        std::vector<double> row(n);
        double sum = 0.0;
        for (double& v : row) {
            v = 0.01 + stream.uniform();  // bounded away from zero mass
            sum += v;
        }
        for (double& v : row) v /= sum;
        return row;
    };
    for (int s = 0; s < s_count; ++s) {
        world.support.push_back({stream.uniform(-1.0, 1.0), stream.uniform(-1.0, 1.0)});
        world.eta.push_back(random_simplex(k));
    }
    world.prior = random_simplex(s_count);
    return world;
}

inline ClientBehavior random_deterministic_client(RandomStream& stream,
                                                  const DiscreteWorld& world) {
    std::vector<Label> predictions;
    predictions.reserve(world.size());
    for (int s = 0; s < world.size(); ++s) {
        predictions.push_back(Label{static_cast<int>(stream.below(world.num_classes()))});
    }
    return ClientBehavior::deterministic(std::move(predictions));
}

inline ClientBehavior random_stochastic_client(RandomStream& stream,
                                               const DiscreteWorld& world) {
    std::vector<std::vector<double>> rows;
    rows.reserve(world.size());
    for (int s = 0; s < world.size(); ++s) {
        std::vector<double> row(world.num_classes());
        double sum = 0.0;
        for (double& v : row) {
            v = 0.01 + stream.uniform();
            sum += v;
        }
        for (double& v : row) v /= sum;
        rows.push_back(std::move(row));
    }
    return ClientBehavior::stochastic(std::move(rows));
}

}  // namespace l2h::testing
