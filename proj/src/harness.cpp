#include "l2h/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "l2h/losses.hpp"
#include "l2h/rng.hpp"

namespace l2h {

void GaussianMixtureSpec::validate() const {
    if (num_classes < 2) {
        throw std::invalid_argument("mixture needs at least two classes");
    }
    if (dim < 1) {
        throw std::invalid_argument("mixture dimension must be positive");
    }
    if (variance <= 0.0) {
        throw std::invalid_argument("mixture variance must be positive");
    }
    if (component_means.empty() || component_means.size() != component_labels.size()) {
        throw std::invalid_argument("component means and labels must match");
    }
    if (!component_weights.empty() && component_weights.size() != component_means.size()) {
        throw std::invalid_argument("component weights must match the components");
    }
    for (const double w : component_weights) {
        if (w < 0.0) throw std::invalid_argument("component weights must be non-negative");
    }
    std::vector<bool> covered(num_classes, false);
    for (std::size_t i = 0; i < component_means.size(); ++i) {
        if (static_cast<int>(component_means[i].size()) != dim) {
            throw std::invalid_argument("mean dimension mismatch");
        }
        const int label = component_labels[i].index;
        if (label < 0 || label >= num_classes) {
            throw std::invalid_argument("component label out of range");
        }
        if (component_weights.empty() || component_weights[i] > 0.0) {
            covered[label] = true;
        }
    }
    for (const bool c : covered) {
        if (!c) throw std::invalid_argument("every class needs at least one weighted component");
    }
    if (train_n < 1 || cali_n < 0 || test_n < 0) {
        throw std::invalid_argument("sample counts must be positive");
    }
}

GaussianMixtureSpec GaussianMixtureSpec::circular(int num_classes, int dim, double radius,
                                                  double variance, int train_n, int cali_n,
                                                  int test_n, int blobs_per_class,
                                                  double satellite_share) {
    if (blobs_per_class < 1) {
        throw std::invalid_argument("blobs_per_class must be at least 1");
    }
    if (satellite_share < 0.0 || satellite_share >= 1.0) {
        throw std::invalid_argument("satellite_share must lie in [0, 1)");
    }
    GaussianMixtureSpec spec;
    spec.num_classes = num_classes;
    spec.dim = dim;
    spec.variance = variance;
    spec.train_n = train_n;
    spec.cali_n = cali_n;
    spec.test_n = test_n;
    const int total = num_classes * blobs_per_class;
    for (int i = 0; i < total; ++i) {
        FeatureVector mean(dim, 0.0);
        if (dim == 1) {
            mean[0] = radius * (2.0 * i / std::max(1, total - 1) - 1.0);
        } else {
            const double angle = 2.0 * std::numbers::pi * i / total;
            mean[0] = radius * std::cos(angle);
            mean[1] = radius * std::sin(angle);
        }
        spec.component_means.push_back(std::move(mean));
        spec.component_labels.push_back(Label{i % num_classes});
        const bool primary = i < num_classes;  // first ring pass
        spec.component_weights.push_back(
            blobs_per_class == 1 ? 1.0
            : primary            ? 1.0 - satellite_share
                                 : satellite_share / (blobs_per_class - 1));
    }
    spec.validate();
    return spec;
}

namespace {

Dataset sample_split(const GaussianMixtureSpec& spec, int n, RandomStream& stream) {
    // Per-class component pools with cumulative weights; class draws stay
    // uniform, component draws follow the in-class weights.
    std::vector<std::vector<std::size_t>> by_class(spec.num_classes);
    std::vector<std::vector<double>> cumulative(spec.num_classes);
    for (std::size_t i = 0; i < spec.component_labels.size(); ++i) {
        const int k = spec.component_labels[i].index;
        const double w = spec.component_weights.empty() ? 1.0 : spec.component_weights[i];
        if (w == 0.0) continue;
        by_class[k].push_back(i);
        cumulative[k].push_back((cumulative[k].empty() ? 0.0 : cumulative[k].back()) + w);
    }
    Dataset data;
    data.num_classes = spec.num_classes;
    data.dim = spec.dim;
    data.examples.reserve(n);
    const double sigma = std::sqrt(spec.variance);
    for (int i = 0; i < n; ++i) {
        const int k = static_cast<int>(stream.below(spec.num_classes));
        const auto& cum = cumulative[k];
        const double pick = stream.uniform() * cum.back();
        std::size_t slot = 0;
        while (slot + 1 < cum.size() && pick >= cum[slot]) ++slot;
        const std::size_t component = by_class[k][slot];
        FeatureVector x(spec.dim);
        for (int d = 0; d < spec.dim; ++d) {
            x[d] = spec.component_means[component][d] + sigma * stream.gaussian();
        }
        data.examples.push_back({std::move(x), Label{k}});
    }
    return data;
}

}  // namespace

DataSplits gen_data(const GaussianMixtureSpec& spec, RngSeed seed) {
    spec.validate();
    if (spec.train_n < 1 || spec.cali_n < 1 || spec.test_n < 1) {
        throw std::invalid_argument("every split needs at least one sample");
    }
    DataSplits splits;
    RandomStream train_stream(derive_seed(seed, "data-train"));
    RandomStream cali_stream(derive_seed(seed, "data-cali"));
    RandomStream test_stream(derive_seed(seed, "data-test"));
    splits.train = sample_split(spec, spec.train_n, train_stream);
    splits.cali = sample_split(spec, spec.cali_n, cali_stream);
    splits.test = sample_split(spec, spec.test_n, test_stream);
    return splits;
}

ScoreModel train_client(const Dataset& data, Architecture arch, const ClientHandicap& handicap,
                        const SgdConfig& cfg, int hidden_dim) {
    data.validate();
    cfg.validate();
    if (handicap.subset_fraction <= 0.0 || handicap.subset_fraction > 1.0) {
        throw std::invalid_argument("subset fraction must lie in (0, 1]");
    }
    if (handicap.drop_class &&
        (handicap.drop_class->index < 0 || handicap.drop_class->index >= data.num_classes)) {
        throw std::invalid_argument("drop class out of range");
    }

    std::vector<std::size_t> pool;
    pool.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (handicap.drop_class && data.examples[i].y == *handicap.drop_class) {
            continue;
        }
        pool.push_back(i);
    }
    if (pool.empty()) {
        throw std::invalid_argument("handicap removed every training sample");
    }

    RandomStream subset_stream(derive_seed(cfg.seed, "client-subset"));
    subset_stream.shuffle(pool);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(handicap.subset_fraction * pool.size())));
    pool.resize(std::min(keep, pool.size()));

    ScoreModel model = init_model(arch, data.dim, data.num_classes, hidden_dim,
                                  derive_seed(cfg.seed, "client-init"));
    RandomStream shuffle_stream(derive_seed(cfg.seed, "client-shuffle"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            shuffle_stream.shuffle(pool);
        }
        for (const std::size_t idx : pool) {
            const auto& [x, y] = data.examples[idx];
            const GradReport grad = backprop_l1(model, x, y);
            model = sgd_step(model, grad, cfg.lr_server);
        }
    }
    model.frozen = true;
    return model;
}

namespace {

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * fraction);
    return buf;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void append_branch_row(std::string& out, const char* name, const BranchStats& branch) {
    out += name;
    out += "  ratio=";
    out += percent(branch.ratio);
    if (branch.has_accuracy) {
        out += "  m=";
        out += percent(branch.client_accuracy);
        out += "  e=";
        out += percent(branch.server_accuracy);
        out += "  differ=";
        out += percent(branch.difference);
    } else {
        out += "  m=N/A  e=N/A  differ=N/A";
    }
    out += '\n';
}

std::string branch_json(const BranchStats& branch) {
    std::string out = "{\"ratio\":" + format_double(branch.ratio);
    if (branch.has_accuracy) {
        out += ",\"m\":" + format_double(branch.client_accuracy);
        out += ",\"e\":" + format_double(branch.server_accuracy);
        out += ",\"differ\":" + format_double(branch.difference);
    } else {
        out += ",\"m\":null,\"e\":null,\"differ\":null";
    }
    out += '}';
    return out;
}

}  // namespace

std::string MetricsReport::human_table() const {
    std::string out;
    out += "joint accuracy        : " + percent(joint_accuracy) + "%\n";
    out += "reject ratio          : " + percent(reject_ratio) + "%\n";
    out += "mean generalized loss : " + fixed4(mean_generalized_loss) + "\n";
    out += "client-only accuracy  : " + percent(client_only_accuracy) + "%\n";
    out += "server-only accuracy  : " + percent(server_only_accuracy) + "%\n";
    append_branch_row(out, "r(x)=local ", local_branch);
    append_branch_row(out, "r(x)=remote", remote_branch);
    out += "ledger: total=" + std::to_string(ledger.total_queries) +
           " remote=" + std::to_string(ledger.remote_queries) +
           " remote_errors=" + std::to_string(ledger.remote_errors) +
           " cost=" + fixed4(ledger.accumulated_cost) + "\n";
    return out;
}

std::string MetricsReport::record() const {
    std::string out = "{";
    out += "\"joint_accuracy\":" + format_double(joint_accuracy);
    out += ",\"reject_ratio\":" + format_double(reject_ratio);
    out += ",\"mean_generalized_loss\":" + format_double(mean_generalized_loss);
    out += ",\"client_only_accuracy\":" + format_double(client_only_accuracy);
    out += ",\"server_only_accuracy\":" + format_double(server_only_accuracy);
    out += ",\"local\":" + branch_json(local_branch);
    out += ",\"remote\":" + branch_json(remote_branch);
    out += ",\"ledger\":{\"total\":" + std::to_string(ledger.total_queries) +
           ",\"remote\":" + std::to_string(ledger.remote_queries) +
           ",\"remote_errors\":" + std::to_string(ledger.remote_errors) +
           ",\"cost\":" + format_double(ledger.accumulated_cost) + "}";
    out += "}";
    return out;
}

MetricsReport evaluate(const HybridSystem& system, const Dataset& test, const CostParams& costs) {
    system.validate();
    test.validate();
    costs.validate();

    MetricsReport report;
    std::int64_t joint_correct = 0;
    std::int64_t client_correct = 0;
    std::int64_t server_correct = 0;
    std::int64_t local_count = 0;
    std::int64_t local_client_correct = 0;
    std::int64_t local_server_correct = 0;
    std::int64_t remote_count = 0;
    std::int64_t remote_client_correct = 0;
    std::int64_t remote_server_correct = 0;
    double loss_sum = 0.0;

    for (const auto& ex : test.examples) {
        const Label from_client = predict(system.client, ex.x);
        const Label from_server = predict(system.server, ex.x);
        const Route r = route(system.rejector, ex.x);
        const Label used = ppr_infer(system, ex.x, costs, report.ledger, ex.y);

        loss_sum += generalized_loss(r, from_client, from_server, ex.y, costs);
        if (used == ex.y) ++joint_correct;
        if (from_client == ex.y) ++client_correct;
        if (from_server == ex.y) ++server_correct;
        if (r == Route::Local) {
            ++local_count;
            if (from_client == ex.y) ++local_client_correct;
            if (from_server == ex.y) ++local_server_correct;
        } else {
            ++remote_count;
            if (from_client == ex.y) ++remote_client_correct;
            if (from_server == ex.y) ++remote_server_correct;
        }
    }

    const double n = static_cast<double>(test.size());
    report.joint_accuracy = joint_correct / n;
    report.reject_ratio = remote_count / n;
    report.mean_generalized_loss = loss_sum / n;
    report.client_only_accuracy = client_correct / n;
    report.server_only_accuracy = server_correct / n;

    report.local_branch.count = local_count;
    report.local_branch.ratio = local_count / n;
    if (local_count > 0) {
        report.local_branch.has_accuracy = true;
        report.local_branch.client_accuracy = static_cast<double>(local_client_correct) / local_count;
        report.local_branch.server_accuracy = static_cast<double>(local_server_correct) / local_count;
        report.local_branch.difference =
            report.local_branch.server_accuracy - report.local_branch.client_accuracy;
    }
    report.remote_branch.count = remote_count;
    report.remote_branch.ratio = remote_count / n;
    if (remote_count > 0) {
        report.remote_branch.has_accuracy = true;
        report.remote_branch.client_accuracy =
            static_cast<double>(remote_client_correct) / remote_count;
        report.remote_branch.server_accuracy =
            static_cast<double>(remote_server_correct) / remote_count;
        report.remote_branch.difference =
            report.remote_branch.server_accuracy - report.remote_branch.client_accuracy;
    }
    return report;
}

std::vector<SweepResult> sweep(const SweepConfig& config) {
    config.train.validate();
    config.test.validate();
    config.sgd.validate();
    if (!config.client.frozen) {
        throw std::invalid_argument("sweep needs a frozen client");
    }
    if (config.ce_grid.empty() || config.c1_grid.empty()) {
        throw std::invalid_argument("cost grids must be non-empty");
    }
    if (!config.q_grid.empty() && !config.cali) {
        throw std::invalid_argument("a q grid needs a calibration split");
    }

    // Fixed starting points for every grid point: only the costs (and the
    // sync interval) vary across the sweep.
    const ScoreModel server0 =
        init_model(config.server_arch, config.train.dim, config.train.num_classes,
                   config.hidden_dim, derive_seed(config.master_seed, "server-init"));
    const ScoreModel rejector0 =
        init_model(config.rejector_arch, config.train.dim, 2, config.hidden_dim,
                   derive_seed(config.master_seed, "rejector-init"));

    std::vector<int> s_values = config.s_grid;
    if (s_values.empty()) {
        s_values.push_back(0);
    }

    std::vector<SweepResult> results;
    for (const double ce : config.ce_grid) {
        for (const double c1 : config.c1_grid) {
            for (const int s : s_values) {
                const CostParams costs{ce, c1};
                costs.validate();
                HybridSystem system{config.client, rejector0, server0};
                SgdConfig sgd = config.sgd;
                sgd.seed = derive_seed(config.master_seed, "train-loop");
                TrainResult trained =
                    s == 0 ? train_sync(system, config.train, costs, sgd)
                           : train_async(system, config.train, costs, sgd, AsyncConfig{s});
                MetricsReport report = evaluate(trained.system, config.test, costs);
                std::vector<BrrEvaluation> brr;
                for (const double q : config.q_grid) {
                    brr.push_back(brr_evaluate(trained.system, *config.cali, config.test, q,
                                               derive_seed(config.master_seed, "brr-eval")));
                }
                results.push_back({SweepPoint{ce, c1, s}, std::move(report), std::move(brr)});
            }
        }
    }
    return results;
}

std::string sweep_record(const SweepResult& result) {
    const SweepPoint& point = result.point;
    std::string out = "{\"ce\":" + format_double(point.reject_cost);
    out += ",\"c1\":" + format_double(point.inaccuracy_cost);
    out += ",\"algo\":\"";
    out += point.sync_interval == 0 ? "sync" : "async";
    out += "\"";
    if (point.sync_interval != 0) {
        out += ",\"sync_interval\":" + std::to_string(point.sync_interval);
    }
    out += ",\"report\":" + result.report.record();
    if (!result.brr.empty()) {
        out += ",\"brr\":[";
        for (std::size_t i = 0; i < result.brr.size(); ++i) {
            const BrrEvaluation& b = result.brr[i];
            if (i) out += ',';
            out += "{\"q\":" + format_double(b.q);
            out += ",\"q1\":" + format_double(b.q1);
            out += ",\"mode\":\"";
            out += b.mode == BrrPolicy::Mode::Under ? "under" : "over";
            out += "\",\"realized_remote_fraction\":" + format_double(b.realized_remote_fraction);
            out += ",\"accuracy\":" + format_double(b.accuracy);
            out += ",\"baseline_accuracy\":" + format_double(b.baseline_accuracy_at_budget);
            out += "}";
        }
        out += "]";
    }
    out += "}";
    return out;
}

namespace {

double parse_strict_double(const std::string& token, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error(std::string("malformed ") + what + ": " + token);
    }
    return v;
}

}  // namespace

Dataset ingest_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read feature file: " + path.string());
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw std::runtime_error("empty feature file: " + path.string());
    }
    int k = 0;
    int dim = 0;
    if (std::sscanf(header.c_str(), "K=%d L=%d", &k, &dim) != 2 || k < 1 || dim < 1) {
        throw std::runtime_error("feature file header must be 'K=<int> L=<int>'");
    }

    Dataset data;
    data.num_classes = k;
    data.dim = dim;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string token;
        while (std::getline(ss, token, ',')) fields.push_back(token);
        if (static_cast<int>(fields.size()) != dim + 1) {
            throw std::runtime_error("feature file line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(dim + 1) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        FeatureVector x(dim);
        for (int d = 0; d < dim; ++d) {
            x[d] = parse_strict_double(fields[d], "feature value");
        }
        char* end = nullptr;
        const long label = std::strtol(fields.back().c_str(), &end, 10);
        if (end == fields.back().c_str() || *end != '\0') {
            throw std::runtime_error("feature file line " + std::to_string(line_no) +
                                     ": malformed label: " + fields.back());
        }
        if (label < 1 || label > k) {
            throw std::runtime_error("feature file line " + std::to_string(line_no) +
                                     ": label out of range [1, " + std::to_string(k) + "]");
        }
        data.examples.push_back({std::move(x), Label{static_cast<int>(label - 1)}});
    }
    data.validate();
    return data;
}

void save_features(const Dataset& data, const std::filesystem::path& path) {
    data.validate();
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write feature file: " + path.string());
    }
    out << "K=" << data.num_classes << " L=" << data.dim << '\n';
    for (const auto& ex : data.examples) {
        for (const double v : ex.x) {
            out << format_double(v) << ',';
        }
        out << ex.y.index + 1 << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing feature file: " + path.string());
    }
}

std::vector<std::pair<std::string, std::string>> parse_key_value_file(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read config file: " + path.string());
    }
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line without '=': " + line);
        }
        entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return entries;
}

}  // namespace l2h
