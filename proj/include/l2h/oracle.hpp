#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "l2h/core.hpp"

namespace l2h {

// A finite ground-truth distribution: S support points with a prior over
// them and a row-stochastic class-posterior matrix eta[s][i] = P(Y=i | X=x_s).
// Everything downstream of it (risks, Bayes maps) is computed exactly.
struct DiscreteWorld {
    std::vector<FeatureVector> support;
    std::vector<double> prior;
    std::vector<std::vector<double>> eta;

    int size() const { return static_cast<int>(support.size()); }
    int num_classes() const { return eta.empty() ? 0 : static_cast<int>(eta[0].size()); }
    void validate() const;
};

// Fixed client on a discrete world: either one label per support point or a
// row-stochastic matrix P(M=i | X=x_s).
class ClientBehavior {
public:
    static ClientBehavior deterministic(std::vector<Label> predictions);
    static ClientBehavior stochastic(std::vector<std::vector<double>> rows);

    bool is_deterministic() const { return !predictions_.empty(); }
    int size() const;
    Label predicted(int point) const;  // deterministic only
    double prob(int point, int label) const;
    // P(M = Y | X = x_s), the chance the client labels the point correctly.
    double correct_prob(int point, const DiscreteWorld& world) const;
    void validate(const DiscreteWorld& world) const;

private:
    std::vector<Label> predictions_;
    std::vector<std::vector<double>> rows_;
};

// argmax_i eta[s][i] per point, lowest index on ties.
std::vector<Label> bayes_server(const DiscreteWorld& world);

// Local iff eta_{j*} > (1 - c_e - c_1) + c_1 * max_i eta_i, where j* is the
// client's predicted label. Deterministic clients only; for stochastic
// clients use posterior_enumeration, which works from P(M != Y | x).
std::vector<Route> bayes_rejector(const DiscreteWorld& world, const ClientBehavior& client,
                                  const CostParams& costs);

// Brute force over all 2K decisions (route, server label) at one point. Each
// risk is a direct expectation of the generalized loss over (Y, M), not the
// closed-form algebra, so this is an independent check of the Bayes maps.
struct PosteriorVerdict {
    Route best_route = Route::Remote;
    Label best_server_label{0};
    double best_risk = 0.0;
    double local_risk = 0.0;                // same for every server label
    std::vector<double> remote_risks;       // one per server label
};
PosteriorVerdict posterior_enumeration(const DiscreteWorld& world, const ClientBehavior& client,
                                       const CostParams& costs, int point);

// Expected generalized loss of fixed (rejector map, server map) under the
// world's joint distribution of (X, Y, M).
double exact_risk(const DiscreteWorld& world, const ClientBehavior& client,
                  const std::vector<Route>& rejector_map, const std::vector<Label>& server_map,
                  const CostParams& costs);

// Pointwise minimizer of the expected rejector loss with the server at its
// cross-entropy optimum (softmax = eta). When the remote weight
// A = (1 - c_e - c_1) + c_1 max_i eta_i is positive the optimum is the finite
// score ratio exp(r1* - r2*) = P(M=Y|x) / A; when A <= 0 both loss terms
// reward the local score without bound and the minimizing sequence routes
// local.
struct SurrogateMinimizer {
    bool divergent = false;        // A <= 0: no finite minimizer, local in the limit
    double ratio = 0.0;            // exp(r1* - r2*) when finite
    Route implied_route = Route::Remote;
};
SurrogateMinimizer surrogate_pointwise_minimizer(const DiscreteWorld& world,
                                                 const ClientBehavior& client,
                                                 const CostParams& costs, int point);

// Per-point agreement between the surrogate minimizer and the Bayes route,
// by the closed form and by plain gradient descent on the expected rejector
// loss (2000 steps, step 0.1, from the origin). Points within
// boundary_tolerance of the decision boundary are reported, not judged.
struct ConsistencyReport {
    int points_checked = 0;
    int boundary_points = 0;
    int closed_form_disagreements = 0;
    int numeric_disagreements = 0;
    bool passed() const {
        return closed_form_disagreements == 0 && numeric_disagreements == 0;
    }
};
ConsistencyReport consistency_check(const DiscreteWorld& world, const ClientBehavior& client,
                                    const CostParams& costs,
                                    double boundary_tolerance = 1e-9);

// Checks the closed-form Bayes maps against the brute-force enumeration at
// every support point: routes must match exactly (both sides break ties
// remote), the closed-form server label must attain the enumeration's best
// remote risk, and the achieved risks must agree to 1e-12.
struct BayesEquivalence {
    int points = 0;
    int route_mismatches = 0;
    int server_label_mismatches = 0;
    int risk_mismatches = 0;
    bool passed() const {
        return route_mismatches == 0 && server_label_mismatches == 0 && risk_mismatches == 0;
    }
};
BayesEquivalence verify_bayes_maps(const DiscreteWorld& world, const ClientBehavior& client,
                                   const CostParams& costs);

struct WorldFile {
    DiscreteWorld world;
    ClientBehavior client;
};
void save_world(const WorldFile& file, const std::filesystem::path& path);
WorldFile load_world(const std::filesystem::path& path);

}  // namespace l2h
