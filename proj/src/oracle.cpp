#include "l2h/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace l2h {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

void check_distribution(const std::vector<double>& row, const char* what) {
    double sum = 0.0;
    for (const double p : row) {
        if (p < 0.0) {
            throw std::invalid_argument(std::string(what) + " has a negative entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        throw std::invalid_argument(std::string(what) + " does not sum to 1");
    }
}

// Remote weight of the expected rejector loss at one point; also the Bayes
// rejector threshold against P(M=Y|x).
double remote_weight(const DiscreteWorld& world, const CostParams& costs, int point) {
    const double max_eta =
        *std::max_element(world.eta[point].begin(), world.eta[point].end());
    return (1.0 - costs.reject_cost - costs.inaccuracy_cost) +
           costs.inaccuracy_cost * max_eta;
}

}  // namespace

void DiscreteWorld::validate() const {
    if (support.empty()) {
        throw std::invalid_argument("world has no support points");
    }
    if (prior.size() != support.size() || eta.size() != support.size()) {
        throw std::invalid_argument("world field sizes disagree");
    }
    check_distribution(prior, "prior");
    const auto k = eta[0].size();
    if (k == 0) {
        throw std::invalid_argument("world has no classes");
    }
    for (const auto& row : eta) {
        if (row.size() != k) {
            throw std::invalid_argument("ragged eta matrix");
        }
        check_distribution(row, "eta row");
    }
}

ClientBehavior ClientBehavior::deterministic(std::vector<Label> predictions) {
    if (predictions.empty()) {
        throw std::invalid_argument("deterministic client needs predictions");
    }
    ClientBehavior c;
    c.predictions_ = std::move(predictions);
    return c;
}

ClientBehavior ClientBehavior::stochastic(std::vector<std::vector<double>> rows) {
    if (rows.empty()) {
        throw std::invalid_argument("stochastic client needs rows");
    }
    ClientBehavior c;
    c.rows_ = std::move(rows);
    return c;
}

int ClientBehavior::size() const {
    return static_cast<int>(is_deterministic() ? predictions_.size() : rows_.size());
}

Label ClientBehavior::predicted(int point) const {
    if (!is_deterministic()) {
        throw std::logic_error("stochastic client has no single prediction");
    }
    return predictions_[point];
}

double ClientBehavior::prob(int point, int label) const {
    if (is_deterministic()) {
        return predictions_[point].index == label ? 1.0 : 0.0;
    }
    return rows_[point][label];
}

double ClientBehavior::correct_prob(int point, const DiscreteWorld& world) const {
    if (is_deterministic()) {
        return world.eta[point][predictions_[point].index];
    }
    double p = 0.0;
    for (int i = 0; i < world.num_classes(); ++i) {
        p += rows_[point][i] * world.eta[point][i];
    }
    return p;
}

void ClientBehavior::validate(const DiscreteWorld& world) const {
    if (size() != world.size()) {
        throw std::invalid_argument("client size does not match world support");
    }
    if (is_deterministic()) {
        for (const Label l : predictions_) {
            if (l.index < 0 || l.index >= world.num_classes()) {
                throw std::invalid_argument("client prediction out of range");
            }
        }
        return;
    }
    for (const auto& row : rows_) {
        if (static_cast<int>(row.size()) != world.num_classes()) {
            throw std::invalid_argument("ragged client matrix");
        }
        check_distribution(row, "client row");
    }
}

std::vector<Label> bayes_server(const DiscreteWorld& world) {
    std::vector<Label> map;
    map.reserve(world.size());
    for (const auto& row : world.eta) {
        map.push_back(argmax_label(row));
    }
    return map;
}

std::vector<Route> bayes_rejector(const DiscreteWorld& world, const ClientBehavior& client,
                                  const CostParams& costs) {
    if (!client.is_deterministic()) {
        throw std::invalid_argument(
            "bayes_rejector requires a deterministic client; "
            "use posterior_enumeration for stochastic clients");
    }
    std::vector<Route> map;
    map.reserve(world.size());
    for (int s = 0; s < world.size(); ++s) {
        const double eta_client = world.eta[s][client.predicted(s).index];
        map.push_back(eta_client > remote_weight(world, costs, s) ? Route::Local
                                                                  : Route::Remote);
    }
    return map;
}

PosteriorVerdict posterior_enumeration(const DiscreteWorld& world, const ClientBehavior& client,
                                       const CostParams& costs, int point) {
    const int k = world.num_classes();
    PosteriorVerdict verdict;
    verdict.remote_risks.resize(k);

    // Direct expectation of the generalized loss over (Y, M) for each of the
    // 2K decisions.
    for (int route_idx = 0; route_idx < 2; ++route_idx) {
        const Route r = route_idx == 0 ? Route::Local : Route::Remote;
        for (int server_label = 0; server_label < k; ++server_label) {
            double risk = 0.0;
            for (int y = 0; y < k; ++y) {
                const double p_y = world.eta[point][y];
                if (p_y == 0.0) continue;
                for (int m = 0; m < k; ++m) {
                    const double p_m = client.prob(point, m);
                    if (p_m == 0.0) continue;
                    risk += p_y * p_m *
                            generalized_loss(r, Label{m}, Label{server_label}, Label{y}, costs);
                }
            }
            if (r == Route::Local) {
                verdict.local_risk = risk;  // identical for every server label
            } else {
                verdict.remote_risks[server_label] = risk;
            }
        }
    }

    int best_remote = 0;
    for (int i = 1; i < k; ++i) {
        if (verdict.remote_risks[i] < verdict.remote_risks[best_remote]) {
            best_remote = i;
        }
    }
    verdict.best_server_label = Label{best_remote};
    // Ties route remote, matching the strict inequality in the closed form.
    if (verdict.remote_risks[best_remote] <= verdict.local_risk) {
        verdict.best_route = Route::Remote;
        verdict.best_risk = verdict.remote_risks[best_remote];
    } else {
        verdict.best_route = Route::Local;
        verdict.best_risk = verdict.local_risk;
    }
    return verdict;
}

double exact_risk(const DiscreteWorld& world, const ClientBehavior& client,
                  const std::vector<Route>& rejector_map, const std::vector<Label>& server_map,
                  const CostParams& costs) {
    if (static_cast<int>(rejector_map.size()) != world.size() ||
        static_cast<int>(server_map.size()) != world.size()) {
        throw std::invalid_argument("decision maps do not cover the support");
    }
    const int k = world.num_classes();
    double risk = 0.0;
    for (int s = 0; s < world.size(); ++s) {
        double point_risk = 0.0;
        for (int y = 0; y < k; ++y) {
            const double p_y = world.eta[s][y];
            if (p_y == 0.0) continue;
            for (int m = 0; m < k; ++m) {
                const double p_m = client.prob(s, m);
                if (p_m == 0.0) continue;
                point_risk += p_y * p_m *
                              generalized_loss(rejector_map[s], Label{m}, server_map[s],
                                               Label{y}, costs);
            }
        }
        risk += world.prior[s] * point_risk;
    }
    return risk;
}

SurrogateMinimizer surrogate_pointwise_minimizer(const DiscreteWorld& world,
                                                 const ClientBehavior& client,
                                                 const CostParams& costs, int point) {
    SurrogateMinimizer result;
    const double remote_w = remote_weight(world, costs, point);
    const double local_w = client.correct_prob(point, world);
    if (remote_w <= 0.0) {
        // Both loss terms are non-increasing in r1 - r2: the minimizing
        // sequence pushes the local score up without bound.
        result.divergent = true;
        result.implied_route = Route::Local;
        return result;
    }
    result.ratio = local_w / remote_w;
    result.implied_route = result.ratio > 1.0 ? Route::Local : Route::Remote;
    return result;
}

namespace {

// Gradient descent on the expected rejector loss
//   E[L2 | x] = -A log softmax(r2) - B log softmax(r1)
// from the origin. Returns the final route and whether the iterates kept
// drifting (no finite minimizer).
struct NumericMinimization {
    Route route;
    bool diverged;
};

NumericMinimization minimize_expected_l2(double remote_w, double local_w) {
    constexpr int kSteps = 2000;
    constexpr double kStep = 0.1;
    double r1 = 0.0;
    double r2 = 0.0;
    double last_margin = 0.0;
    bool margin_monotone = true;
    double grad = 0.0;
    for (int i = 0; i < kSteps; ++i) {
        const double m = std::max(r1, r2);
        const double e1 = std::exp(r1 - m);
        const double e2 = std::exp(r2 - m);
        grad = (remote_w * e1 - local_w * e2) / (e1 + e2);
        r1 -= kStep * grad;
        r2 += kStep * grad;
        const double margin = r1 - r2;
        if (std::abs(margin) < std::abs(last_margin)) {
            margin_monotone = false;
        }
        last_margin = margin;
    }
    NumericMinimization result;
    result.route = route_from_scores(r1, r2);
    result.diverged = margin_monotone && std::abs(grad) > 1e-6;
    return result;
}

}  // namespace

ConsistencyReport consistency_check(const DiscreteWorld& world, const ClientBehavior& client,
                                    const CostParams& costs, double boundary_tolerance) {
    ConsistencyReport report;
    for (int s = 0; s < world.size(); ++s) {
        const double remote_w = remote_weight(world, costs, s);
        const double local_w = client.correct_prob(s, world);
        if (std::abs(local_w - remote_w) <= boundary_tolerance) {
            ++report.boundary_points;
            continue;
        }
        ++report.points_checked;
        const Route bayes = local_w > remote_w ? Route::Local : Route::Remote;
        const SurrogateMinimizer mini = surrogate_pointwise_minimizer(world, client, costs, s);
        if (mini.implied_route != bayes) {
            ++report.closed_form_disagreements;
        }
        const NumericMinimization numeric = minimize_expected_l2(remote_w, local_w);
        if (numeric.route != bayes) {
            ++report.numeric_disagreements;
        }
    }
    return report;
}

BayesEquivalence verify_bayes_maps(const DiscreteWorld& world, const ClientBehavior& client,
                                   const CostParams& costs) {
    constexpr double kRiskTolerance = 1e-12;
    const std::vector<Label> server_map = bayes_server(world);
    BayesEquivalence result;
    for (int s = 0; s < world.size(); ++s) {
        ++result.points;
        const PosteriorVerdict verdict = posterior_enumeration(world, client, costs, s);

        // Theorem-1 route: local iff P(M=Y|x) beats the remote weight.
        const Route closed_route = client.correct_prob(s, world) > remote_weight(world, costs, s)
                                       ? Route::Local
                                       : Route::Remote;
        if (closed_route != verdict.best_route) {
            ++result.route_mismatches;
        }

        const double min_remote =
            *std::min_element(verdict.remote_risks.begin(), verdict.remote_risks.end());
        if (verdict.remote_risks[server_map[s].index] > min_remote + kRiskTolerance) {
            ++result.server_label_mismatches;
        }

        const double closed_risk = closed_route == Route::Local
                                       ? verdict.local_risk
                                       : verdict.remote_risks[server_map[s].index];
        if (std::abs(closed_risk - verdict.best_risk) > kRiskTolerance) {
            ++result.risk_mismatches;
        }
    }
    return result;
}

namespace {

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') {
            throw std::runtime_error("malformed number in world file: " + token);
        }
        values.push_back(v);
    }
    return values;
}

std::pair<std::string, std::string> split_key(const std::string& line) {
    const auto space = line.find(' ');
    if (space == std::string::npos) {
        return {line, ""};
    }
    return {line.substr(0, space), line.substr(space + 1)};
}

std::string expect_line(std::istream& in, const char* key) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(std::string("truncated world file: missing ") + key);
    }
    const auto [k, v] = split_key(line);
    if (k != key) {
        throw std::runtime_error(std::string("world file: expected ") + key + ", found " + line);
    }
    return v;
}

}  // namespace

void save_world(const WorldFile& file, const std::filesystem::path& path) {
    file.world.validate();
    file.client.validate(file.world);
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write world file: " + path.string());
    }
    const int s_count = file.world.size();
    const int k = file.world.num_classes();
    const int dim = static_cast<int>(file.world.support[0].size());
    out << "l2h-world 1\n";
    out << "S " << s_count << "\nK " << k << "\nL " << dim << '\n';
    auto write_row = [&out](const char* key, const std::vector<double>& row) {
        out << key << ' ';
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    };
    for (const auto& x : file.world.support) write_row("support", x);
    write_row("prior", file.world.prior);
    for (const auto& row : file.world.eta) write_row("eta", row);
    if (file.client.is_deterministic()) {
        out << "client deterministic ";
        for (int s = 0; s < s_count; ++s) {
            if (s) out << ',';
            out << file.client.predicted(s).index + 1;  // 1-based on disk
        }
        out << '\n';
    } else {
        out << "client stochastic\n";
        for (int s = 0; s < s_count; ++s) {
            std::vector<double> row(k);
            for (int i = 0; i < k; ++i) row[i] = file.client.prob(s, i);
            write_row("crow", row);
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing world file: " + path.string());
    }
}

WorldFile load_world(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read world file: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != "l2h-world 1") {
        throw std::runtime_error("not a world file (or unsupported version): " + path.string());
    }
    const int s_count = std::stoi(expect_line(in, "S"));
    const int k = std::stoi(expect_line(in, "K"));
    const int dim = std::stoi(expect_line(in, "L"));
    if (s_count < 1 || k < 1 || dim < 0) {
        throw std::runtime_error("world file has invalid sizes");
    }

    WorldFile file;
    for (int s = 0; s < s_count; ++s) {
        auto row = parse_csv_doubles(expect_line(in, "support"));
        if (static_cast<int>(row.size()) != dim) {
            throw std::runtime_error("support row has wrong dimension");
        }
        file.world.support.push_back(std::move(row));
    }
    file.world.prior = parse_csv_doubles(expect_line(in, "prior"));
    for (int s = 0; s < s_count; ++s) {
        file.world.eta.push_back(parse_csv_doubles(expect_line(in, "eta")));
    }

    std::string client_line;
    if (!std::getline(in, client_line)) {
        throw std::runtime_error("truncated world file: missing client");
    }
    const auto [key, rest] = split_key(client_line);
    if (key != "client") {
        throw std::runtime_error("world file: expected client line, found " + client_line);
    }
    const auto [kind, payload] = split_key(rest);
    if (kind == "deterministic") {
        std::vector<Label> predictions;
        for (const double v : parse_csv_doubles(payload)) {
            const int one_based = static_cast<int>(v);
            if (one_based < 1 || one_based > k) {
                throw std::runtime_error("client label out of range in world file");
            }
            predictions.push_back(Label{one_based - 1});
        }
        file.client = ClientBehavior::deterministic(std::move(predictions));
    } else if (kind == "stochastic") {
        std::vector<std::vector<double>> rows;
        for (int s = 0; s < s_count; ++s) {
            rows.push_back(parse_csv_doubles(expect_line(in, "crow")));
        }
        file.client = ClientBehavior::stochastic(std::move(rows));
    } else {
        throw std::runtime_error("unknown client kind in world file: " + kind);
    }

    try {
        file.world.validate();
        file.client.validate(file.world);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("invalid world file: ") + e.what());
    }
    return file;
}

}  // namespace l2h
