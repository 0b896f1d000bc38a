#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "l2h/core.hpp"
#include "l2h/deployment.hpp"
#include "l2h/models.hpp"
#include "l2h/training.hpp"

namespace l2h {

// Synthetic classification task: isotropic Gaussian blobs with a shared
// variance. Classes are drawn uniformly; each class owns one or more
// component means, picked uniformly within the class. With several
// interleaved components per class the Bayes boundary is not linear, which
// leaves a linear client genuinely below a capable server.
struct GaussianMixtureSpec {
    int num_classes = 2;
    int dim = 2;
    std::vector<FeatureVector> component_means;
    std::vector<Label> component_labels;
    std::vector<double> component_weights;  // relative within a class; empty = uniform
    double variance = 1.0;
    int train_n = 0;
    int cali_n = 0;
    int test_n = 0;

    void validate() const;
    // blobs_per_class * num_classes components evenly spaced on a circle of
    // the given radius (on a line for dim 1), class labels interleaved so
    // adjacent components always belong to different classes. Each class puts
    // satellite_share of its mass in the components beyond its first.
    static GaussianMixtureSpec circular(int num_classes, int dim, double radius, double variance,
                                        int train_n, int cali_n, int test_n,
                                        int blobs_per_class = 1, double satellite_share = 0.5);
};

struct DataSplits {
    Dataset train;
    Dataset cali;
    Dataset test;
};

// Deterministic given the seed; each split uses its own derived stream, so
// the splits are disjoint draws by construction.
DataSplits gen_data(const GaussianMixtureSpec& spec, RngSeed seed);

// How much to weaken the client before freezing it: train on a fraction of
// the data, optionally with one class removed entirely.
struct ClientHandicap {
    double subset_fraction = 1.0;
    std::optional<Label> drop_class;
};

// Cross-entropy SGD on the (possibly handicapped) subset; the returned model
// is frozen.
ScoreModel train_client(const Dataset& data, Architecture arch, const ClientHandicap& handicap,
                        const SgdConfig& cfg, int hidden_dim = 32);

struct BranchStats {
    double ratio = 0.0;          // fraction of the test set on this branch
    std::int64_t count = 0;
    bool has_accuracy = false;   // false when the branch is empty
    double client_accuracy = 0.0;
    double server_accuracy = 0.0;
    double difference = 0.0;     // server - client
};

struct MetricsReport {
    double joint_accuracy = 0.0;
    double reject_ratio = 0.0;
    double mean_generalized_loss = 0.0;
    double client_only_accuracy = 0.0;
    double server_only_accuracy = 0.0;
    BranchStats local_branch;
    BranchStats remote_branch;
    UsageLedger ledger;

    // Fixed-format table; identical inputs give identical bytes.
    std::string human_table() const;
    // One-line JSON record with the same numbers.
    std::string record() const;
};

// Routes the test set, scores both branches against both models, and
// accumulates the pay-per-request ledger.
MetricsReport evaluate(const HybridSystem& system, const Dataset& test, const CostParams& costs);

struct SweepPoint {
    double reject_cost = 0.0;
    double inaccuracy_cost = 0.0;
    int sync_interval = 0;  // 0 = synchronous
};

struct SweepConfig {
    Dataset train;
    Dataset test;
    ScoreModel client;                 // frozen
    std::vector<double> ce_grid;
    std::vector<double> c1_grid;
    std::vector<int> s_grid;           // empty = synchronous only
    std::vector<double> q_grid;        // bounded-reject-rate probes, needs cali
    std::optional<Dataset> cali;
    Architecture server_arch = Architecture::Mlp1;
    Architecture rejector_arch = Architecture::Mlp1;
    int hidden_dim = 32;
    SgdConfig sgd;
    RngSeed master_seed = 0;
};

struct SweepResult {
    SweepPoint point;
    MetricsReport report;
    std::vector<BrrEvaluation> brr;
};

// One full train + evaluate per grid point. Model initialization seeds are
// derived once from the master seed, so every grid point starts from the
// same parameters and sees the same data order.
std::vector<SweepResult> sweep(const SweepConfig& config);
std::string sweep_record(const SweepResult& result);

// Feature file: first line "K=<int> L=<int>", then one sample per line as
// L comma-separated floats followed by the 1-based integer label.
Dataset ingest_features(const std::filesystem::path& path);
void save_features(const Dataset& data, const std::filesystem::path& path);

// Flat key=value text, '#' comments. Duplicate keys keep the last value.
std::vector<std::pair<std::string, std::string>> parse_key_value_file(
    const std::filesystem::path& path);

}  // namespace l2h
