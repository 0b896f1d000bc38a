#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace l2h {

using RngSeed = std::uint64_t;

// Class label. Stored 0-based; user-facing I/O (feature files, world files,
// CLI flags) is 1-based and converted at the parsing boundary.
struct Label {
    int index = 0;
    constexpr bool operator==(const Label&) const = default;
};

using FeatureVector = std::vector<double>;

struct LabeledExample {
    FeatureVector x;
    Label y;
};

struct Dataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;
    int dim = 0;

    std::size_t size() const { return examples.size(); }
    // Throws std::invalid_argument on empty data, label out of range, or
    // inconsistent feature dimensions.
    void validate() const;
};

// Where a sample gets predicted: on the client (local) or the server (remote).
enum class Route { Local, Remote };

inline const char* to_string(Route r) { return r == Route::Local ? "local" : "remote"; }

// Costs of the generalized 0-1 loss: deferring costs reject_cost regardless
// of outcome, and a wrong server prediction adds inaccuracy_cost on top.
struct CostParams {
    double reject_cost = 0.0;      // c_e
    double inaccuracy_cost = 0.0;  // c_1

    void validate() const;  // both must be >= 0
};

// Four-outcome cost table: {local,remote} x {correct,error}.
struct GeneralCosts {
    double local_correct = 0.0;
    double local_error = 0.0;
    double remote_correct = 0.0;
    double remote_error = 0.0;

    static GeneralCosts from(const CostParams& c) {
        return {0.0, 1.0, c.reject_cost, c.reject_cost + c.inaccuracy_cost};
    }
    // Enforces local_correct <= local_error, remote_correct <= remote_error,
    // local_correct <= remote_correct, local_error <= remote_error.
    void validate() const;
};

// Lowest index attaining the maximum. Throws std::invalid_argument on an
// empty vector.
Label argmax_label(std::span<const double> scores);

// Local iff the local score strictly beats the remote score; ties go remote.
Route route_from_scores(double local_score, double remote_score);

double generalized_loss(Route route, Label local_pred, Label remote_pred, Label y,
                        const CostParams& costs);

double general_loss(Route route, Label local_pred, Label remote_pred, Label y,
                    const GeneralCosts& costs);

// Shortest text that parses back to the identical double (%.17g).
std::string format_double(double value);

}  // namespace l2h
