#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "l2h/core.hpp"

namespace l2h {

enum class Architecture { Linear, Mlp1 };

const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& name);

// A parametric score function with one flat parameter vector.
//
// Parameter layout:
//   Linear: W (output_dim x input_dim, row-major), then bias (output_dim).
//   Mlp1:   W1 (hidden_dim x input_dim), b1 (hidden_dim),
//           W2 (output_dim x hidden_dim), b2 (output_dim); rectifier hidden
//           activation.
struct ScoreModel {
    Architecture architecture = Architecture::Linear;
    int input_dim = 0;
    int output_dim = 0;
    int hidden_dim = 0;  // 0 for Linear
    bool frozen = false;
    std::vector<double> params;

    std::size_t expected_param_count() const;
    void validate() const;
};

// Intermediate values kept for backpropagation.
struct ForwardCache {
    std::vector<double> hidden_pre;
    std::vector<double> hidden_act;
    std::vector<double> scores;
};

std::vector<double> forward(const ScoreModel& model, const FeatureVector& x);
ForwardCache forward_cached(const ScoreModel& model, const FeatureVector& x);

Label predict(const ScoreModel& model, const FeatureVector& x);

// Rejector output index 0 is the local score, index 1 the remote score.
Route route(const ScoreModel& rejector, const FeatureVector& x);

// Parameters drawn uniform in [-s, s] with s = 1/sqrt(fan_in of the layer).
ScoreModel init_model(Architecture arch, int input_dim, int output_dim, int hidden_dim,
                      RngSeed seed);

// The client m, rejector r and server e. The client is frozen for good once
// the system is assembled; only r and e ever train.
struct HybridSystem {
    ScoreModel client;
    ScoreModel rejector;
    ScoreModel server;

    void validate() const;
};

// Routed prediction: the rejector picks a side, that side's model labels x.
std::pair<Label, Route> infer(const HybridSystem& system, const FeatureVector& x);

struct Checkpoint {
    int format_version = 1;
    ScoreModel model;
    RngSeed seed = 0;          // init-seed provenance
    CostParams costs{};        // costs the model was trained under, if any

    static constexpr int kFormatVersion = 1;
};

// Plain-text persistence; floats are written with 17 significant digits so a
// round trip reproduces bit-identical forward outputs.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_checkpoint_block(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint_block(std::istream& in);

void save_system(const HybridSystem& system, const CostParams& costs, RngSeed seed,
                 const std::filesystem::path& path);
struct SystemFile {
    HybridSystem system;
    CostParams costs{};
    RngSeed seed = 0;
};
SystemFile load_system(const std::filesystem::path& path);

}  // namespace l2h
