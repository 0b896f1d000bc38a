#include "l2h/models.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "l2h/rng.hpp"

namespace l2h {

const char* to_string(Architecture a) {
    return a == Architecture::Linear ? "linear" : "mlp1";
}

Architecture architecture_from_string(const std::string& name) {
    if (name == "linear") return Architecture::Linear;
    if (name == "mlp1") return Architecture::Mlp1;
    throw std::invalid_argument("unknown architecture: " + name);
}

std::size_t ScoreModel::expected_param_count() const {
    const auto in = static_cast<std::size_t>(input_dim);
    const auto out = static_cast<std::size_t>(output_dim);
    const auto hid = static_cast<std::size_t>(hidden_dim);
    if (architecture == Architecture::Linear) {
        return out * in + out;
    }
    return hid * in + hid + out * hid + out;
}

void ScoreModel::validate() const {
    if (input_dim < 1 || output_dim < 1) {
        throw std::invalid_argument("model dimensions must be positive");
    }
    if (architecture == Architecture::Mlp1 && hidden_dim < 1) {
        throw std::invalid_argument("mlp1 needs a positive hidden width");
    }
    if (architecture == Architecture::Linear && hidden_dim != 0) {
        throw std::invalid_argument("linear model must have hidden_dim 0");
    }
    if (params.size() != expected_param_count()) {
        throw std::invalid_argument("parameter count inconsistent with dimensions");
    }
}

ForwardCache forward_cached(const ScoreModel& model, const FeatureVector& x) {
    if (static_cast<int>(x.size()) != model.input_dim) {
        throw std::invalid_argument("input dimension mismatch");
    }
    ForwardCache cache;
    const double* p = model.params.data();
    const int in = model.input_dim;
    const int out = model.output_dim;

    if (model.architecture == Architecture::Linear) {
        cache.scores.resize(out);
        const double* bias = p + static_cast<std::size_t>(out) * in;
        for (int o = 0; o < out; ++o) {
            double acc = bias[o];
            const double* row = p + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += row[i] * x[i];
            cache.scores[o] = acc;
        }
        return cache;
    }

    const int hid = model.hidden_dim;
    const double* w1 = p;
    const double* b1 = w1 + static_cast<std::size_t>(hid) * in;
    const double* w2 = b1 + hid;
    const double* b2 = w2 + static_cast<std::size_t>(out) * hid;

    cache.hidden_pre.resize(hid);
    cache.hidden_act.resize(hid);
    for (int h = 0; h < hid; ++h) {
        double acc = b1[h];
        const double* row = w1 + static_cast<std::size_t>(h) * in;
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        cache.hidden_pre[h] = acc;
        cache.hidden_act[h] = acc > 0.0 ? acc : 0.0;
    }
    cache.scores.resize(out);
    for (int o = 0; o < out; ++o) {
        double acc = b2[o];
        const double* row = w2 + static_cast<std::size_t>(o) * hid;
        for (int h = 0; h < hid; ++h) acc += row[h] * cache.hidden_act[h];
        cache.scores[o] = acc;
    }
    return cache;
}

std::vector<double> forward(const ScoreModel& model, const FeatureVector& x) {
    return forward_cached(model, x).scores;
}

Label predict(const ScoreModel& model, const FeatureVector& x) {
    return argmax_label(forward(model, x));
}

Route route(const ScoreModel& rejector, const FeatureVector& x) {
    if (rejector.output_dim != 2) {
        throw std::invalid_argument("rejector must have exactly two outputs");
    }
    const auto scores = forward(rejector, x);
    return route_from_scores(scores[0], scores[1]);
}

ScoreModel init_model(Architecture arch, int input_dim, int output_dim, int hidden_dim,
                      RngSeed seed) {
    ScoreModel model;
    model.architecture = arch;
    model.input_dim = input_dim;
    model.output_dim = output_dim;
    model.hidden_dim = arch == Architecture::Linear ? 0 : hidden_dim;
    model.params.resize(model.expected_param_count());
    model.validate();

    RandomStream stream(seed);
    auto fill = [&stream](double* begin, std::size_t n, int fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) begin[i] = stream.uniform(-s, s);
    };
    double* p = model.params.data();
    if (arch == Architecture::Linear) {
        fill(p, model.params.size(), input_dim);
    } else {
        const std::size_t layer1 = static_cast<std::size_t>(hidden_dim) * input_dim + hidden_dim;
        fill(p, layer1, input_dim);
        fill(p + layer1, model.params.size() - layer1, hidden_dim);
    }
    return model;
}

void HybridSystem::validate() const {
    client.validate();
    rejector.validate();
    server.validate();
    if (!client.frozen) {
        throw std::invalid_argument("client model must be frozen");
    }
    if (rejector.output_dim != 2) {
        throw std::invalid_argument("rejector must have exactly two outputs");
    }
    if (client.output_dim != server.output_dim) {
        throw std::invalid_argument("client and server must score the same classes");
    }
}

std::pair<Label, Route> infer(const HybridSystem& system, const FeatureVector& x) {
    const Route r = route(system.rejector, x);
    const Label y = r == Route::Local ? predict(system.client, x) : predict(system.server, x);
    return {y, r};
}

namespace {

constexpr const char* kCheckpointMagic = "l2h-checkpoint";
constexpr const char* kSystemMagic = "l2h-system";

double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("malformed number: " + token);
    }
    return v;
}

long parse_long(const std::string& token) {
    char* end = nullptr;
    const long v = std::strtol(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("malformed integer: " + token);
    }
    return v;
}

std::pair<std::string, std::string> read_field(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("truncated checkpoint: missing field " + key);
    }
    const auto space = line.find(' ');
    const std::string name = line.substr(0, space);
    if (name != key) {
        throw std::runtime_error("expected field " + key + ", found: " + line);
    }
    return {name, space == std::string::npos ? std::string{} : line.substr(space + 1)};
}

}  // namespace

void write_checkpoint_block(std::ostream& out, const Checkpoint& ckpt) {
    ckpt.model.validate();
    out << "format_version " << Checkpoint::kFormatVersion << '\n'
        << "architecture " << to_string(ckpt.model.architecture) << '\n'
        << "input_dim " << ckpt.model.input_dim << '\n'
        << "output_dim " << ckpt.model.output_dim << '\n'
        << "hidden_dim " << ckpt.model.hidden_dim << '\n'
        << "frozen " << (ckpt.model.frozen ? 1 : 0) << '\n'
        << "seed " << ckpt.seed << '\n'
        << "cost_ce " << format_double(ckpt.costs.reject_cost) << '\n'
        << "cost_c1 " << format_double(ckpt.costs.inaccuracy_cost) << '\n'
        << "param_count " << ckpt.model.params.size() << '\n';
    for (const double v : ckpt.model.params) {
        out << format_double(v) << '\n';
    }
}

Checkpoint read_checkpoint_block(std::istream& in) {
    Checkpoint ckpt;
    const auto version = parse_long(read_field(in, "format_version").second);
    if (version != Checkpoint::kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint format version " +
                                 std::to_string(version));
    }
    ckpt.model.architecture = architecture_from_string(read_field(in, "architecture").second);
    ckpt.model.input_dim = static_cast<int>(parse_long(read_field(in, "input_dim").second));
    ckpt.model.output_dim = static_cast<int>(parse_long(read_field(in, "output_dim").second));
    ckpt.model.hidden_dim = static_cast<int>(parse_long(read_field(in, "hidden_dim").second));
    ckpt.model.frozen = parse_long(read_field(in, "frozen").second) != 0;
    ckpt.seed = static_cast<RngSeed>(std::stoull(read_field(in, "seed").second));
    ckpt.costs.reject_cost = parse_double(read_field(in, "cost_ce").second);
    ckpt.costs.inaccuracy_cost = parse_double(read_field(in, "cost_c1").second);
    const auto count = parse_long(read_field(in, "param_count").second);
    if (count < 0) {
        throw std::runtime_error("negative parameter count");
    }
    ckpt.model.params.reserve(static_cast<std::size_t>(count));
    std::string line;
    for (long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("truncated checkpoint parameter list");
        }
        ckpt.model.params.push_back(parse_double(line));
    }
    try {
        ckpt.model.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("inconsistent checkpoint: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint: " + path.string());
    }
    out << kCheckpointMagic << '\n';
    write_checkpoint_block(out, ckpt);
    if (!out) {
        throw std::runtime_error("failed writing checkpoint: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read checkpoint: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) {
        throw std::runtime_error("not a checkpoint file: " + path.string());
    }
    return read_checkpoint_block(in);
}

void save_system(const HybridSystem& system, const CostParams& costs, RngSeed seed,
                 const std::filesystem::path& path) {
    system.validate();
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write system file: " + path.string());
    }
    out << kSystemMagic << '\n';
    out << "cost_ce " << format_double(costs.reject_cost) << '\n'
        << "cost_c1 " << format_double(costs.inaccuracy_cost) << '\n'
        << "seed " << seed << '\n';
    for (const auto& [role, model] :
         {std::pair<const char*, const ScoreModel*>{"client", &system.client},
          {"rejector", &system.rejector},
          {"server", &system.server}}) {
        out << "model " << role << '\n';
        write_checkpoint_block(out, Checkpoint{1, *model, seed, costs});
    }
    if (!out) {
        throw std::runtime_error("failed writing system file: " + path.string());
    }
}

SystemFile load_system(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read system file: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != kSystemMagic) {
        throw std::runtime_error("not a system file: " + path.string());
    }
    SystemFile file;
    file.costs.reject_cost = parse_double(read_field(in, "cost_ce").second);
    file.costs.inaccuracy_cost = parse_double(read_field(in, "cost_c1").second);
    file.seed = static_cast<RngSeed>(std::stoull(read_field(in, "seed").second));
    for (const char* role : {"client", "rejector", "server"}) {
        const auto field = read_field(in, "model");
        if (field.second != role) {
            throw std::runtime_error("system file: expected model " + std::string(role) +
                                     ", found " + field.second);
        }
        Checkpoint ckpt = read_checkpoint_block(in);
        if (std::string(role) == "client") {
            file.system.client = std::move(ckpt.model);
        } else if (std::string(role) == "rejector") {
            file.system.rejector = std::move(ckpt.model);
        } else {
            file.system.server = std::move(ckpt.model);
        }
    }
    file.system.validate();
    return file;
}

}  // namespace l2h
