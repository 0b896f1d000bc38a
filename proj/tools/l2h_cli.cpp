// Command-line front end: data generation, training, evaluation, sweeps,
// bounded-reject-rate deployment, and the exact-oracle self checks.
//
// Exit codes: 0 success, 1 validation/usage failure, 2 oracle or gradient
// check failure.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l2h/core.hpp"
#include "l2h/deployment.hpp"
#include "l2h/gradcheck.hpp"
#include "l2h/harness.hpp"
#include "l2h/models.hpp"
#include "l2h/oracle.hpp"
#include "l2h/rng.hpp"
#include "l2h/training.hpp"

namespace {

using namespace l2h;

double dataset_accuracy(const ScoreModel& model, const Dataset& data) {
    std::int64_t correct = 0;
    for (const auto& ex : data.examples) {
        if (predict(model, ex.x) == ex.y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Expands `--config FILE` into the file's key=value entries as --key=value
// arguments, in place, so a flat config file can stand in for any
// subcommand's flags.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        std::string path;
        if (arg == "--config") {
            if (i + 1 >= argc) {
                throw std::runtime_error("--config needs a file path");
            }
            path = argv[++i];
        } else if (arg.rfind("--config=", 0) == 0) {
            path = arg.substr(9);
        } else {
            args.push_back(arg);
            continue;
        }
        for (const auto& [key, value] : parse_key_value_file(path)) {
            args.push_back("--" + key + "=" + value);
        }
    }
    return args;
}

std::string percent1(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * fraction);
    return buf;
}

struct GenDataOptions {
    int k = 3;
    int dim = 2;
    double radius = 2.0;
    double variance = 1.0;
    int blobs = 1;
    double satellite_share = 0.5;
    int train_n = 6000;
    int cali_n = 1000;
    int test_n = 3000;
    std::uint64_t seed = 0;
    std::string out;
};

int run_gen_data(const GenDataOptions& opt) {
    const auto spec = GaussianMixtureSpec::circular(opt.k, opt.dim, opt.radius, opt.variance,
                                                    opt.train_n, opt.cali_n, opt.test_n,
                                                    opt.blobs, opt.satellite_share);
    const DataSplits splits = gen_data(spec, opt.seed);
    save_features(splits.train, opt.out + ".train.txt");
    save_features(splits.cali, opt.out + ".cali.txt");
    save_features(splits.test, opt.out + ".test.txt");
    std::cout << "wrote " << opt.out << ".train.txt (" << splits.train.size() << "), "
              << opt.out << ".cali.txt (" << splits.cali.size() << "), "
              << opt.out << ".test.txt (" << splits.test.size() << ")\n";
    return 0;
}

struct TrainClientOptions {
    std::string data;
    std::string arch = "linear";
    int hidden = 32;
    double subset_fraction = 1.0;
    int drop_class = 0;  // 1-based, 0 = keep all classes
    int epochs = 1;
    double lr = 0.05;
    bool shuffle = false;
    std::uint64_t seed = 0;
    std::string out;
};

int run_train_client(const TrainClientOptions& opt) {
    const Dataset data = ingest_features(opt.data);
    ClientHandicap handicap;
    handicap.subset_fraction = opt.subset_fraction;
    if (opt.drop_class != 0) {
        if (opt.drop_class < 1 || opt.drop_class > data.num_classes) {
            throw std::invalid_argument("--drop-class out of range");
        }
        handicap.drop_class = Label{opt.drop_class - 1};
    }
    SgdConfig cfg;
    cfg.lr_server = opt.lr;
    cfg.epochs = opt.epochs;
    cfg.shuffle = opt.shuffle;
    cfg.seed = opt.seed;
    const ScoreModel client =
        train_client(data, architecture_from_string(opt.arch), handicap, cfg, opt.hidden);
    save_checkpoint(Checkpoint{1, client, opt.seed, {}}, opt.out);
    std::cout << "client saved to " << opt.out << "; accuracy on full training data "
              << percent1(dataset_accuracy(client, data)) << "%\n";
    return 0;
}

struct TrainOptions {
    std::string data;
    std::string client;
    std::string algo = "sync";
    int sync_interval = 100;
    double ce = 0.25;
    double c1 = 1.0;
    int epochs = 1;
    double lr_server = 0.05;
    double lr_rejector = 0.05;
    bool shuffle = false;
    std::uint64_t seed = 0;
    std::string server_arch = "mlp1";
    std::string rejector_arch = "mlp1";
    int hidden = 32;
    std::string out;
    std::string trace;
};

int run_train(const TrainOptions& opt) {
    if (opt.algo != "sync" && opt.algo != "async") {
        throw std::invalid_argument("--algo must be sync or async");
    }
    const Dataset data = ingest_features(opt.data);
    ScoreModel client = load_checkpoint(opt.client).model;
    client.frozen = true;

    HybridSystem system;
    system.client = std::move(client);
    system.server = init_model(architecture_from_string(opt.server_arch), data.dim,
                               data.num_classes, opt.hidden, derive_seed(opt.seed, "server-init"));
    system.rejector = init_model(architecture_from_string(opt.rejector_arch), data.dim, 2,
                                 opt.hidden, derive_seed(opt.seed, "rejector-init"));

    const CostParams costs{opt.ce, opt.c1};
    costs.validate();
    SgdConfig cfg;
    cfg.lr_server = opt.lr_server;
    cfg.lr_rejector = opt.lr_rejector;
    cfg.epochs = opt.epochs;
    cfg.shuffle = opt.shuffle;
    cfg.seed = derive_seed(opt.seed, "train-loop");

    const TrainResult result =
        opt.algo == "sync"
            ? train_sync(system, data, costs, cfg)
            : train_async(system, data, costs, cfg, AsyncConfig{opt.sync_interval});

    save_system(result.system, costs, opt.seed, opt.out);
    if (!opt.trace.empty()) {
        std::ofstream trace_out(opt.trace);
        if (!trace_out) {
            throw std::runtime_error("cannot write trace file: " + opt.trace);
        }
        result.trace.export_records(trace_out);
    }
    std::cout << "system saved to " << opt.out << "; steps " << result.trace.steps()
              << "; final epoch mean l1 " << format_double(result.trace.epoch_mean_l1.back())
              << ", l2 " << format_double(result.trace.epoch_mean_l2.back()) << "\n";
    return 0;
}

struct EvaluateOptions {
    std::string system;
    std::string data;
    double ce = -1.0;  // negative = use the costs stored in the system file
    double c1 = -1.0;
    std::string records;
};

int run_evaluate(const EvaluateOptions& opt) {
    const SystemFile file = load_system(opt.system);
    const Dataset test = ingest_features(opt.data);
    CostParams costs = file.costs;
    if (opt.ce >= 0.0) costs.reject_cost = opt.ce;
    if (opt.c1 >= 0.0) costs.inaccuracy_cost = opt.c1;
    const MetricsReport report = evaluate(file.system, test, costs);
    std::cout << report.human_table();
    if (!opt.records.empty()) {
        std::ofstream out(opt.records);
        if (!out) {
            throw std::runtime_error("cannot write records file: " + opt.records);
        }
        out << report.record() << '\n';
    }
    return 0;
}

struct SweepOptions {
    std::string train;
    std::string test;
    std::string cali;
    std::string client;
    std::vector<double> ce{0.25};
    std::vector<double> c1{1.0};
    std::vector<int> sync_intervals;
    std::vector<double> q;
    int epochs = 1;
    double lr_server = 0.05;
    double lr_rejector = 0.05;
    bool shuffle = false;
    std::uint64_t seed = 0;
    std::string server_arch = "mlp1";
    std::string rejector_arch = "mlp1";
    int hidden = 32;
    std::string records;
};

int run_sweep(const SweepOptions& opt) {
    SweepConfig config;
    config.train = ingest_features(opt.train);
    config.test = ingest_features(opt.test);
    config.client = load_checkpoint(opt.client).model;
    config.client.frozen = true;
    config.ce_grid = opt.ce;
    config.c1_grid = opt.c1;
    config.s_grid = opt.sync_intervals;
    config.q_grid = opt.q;
    if (!opt.cali.empty()) {
        config.cali = ingest_features(opt.cali);
    }
    config.server_arch = architecture_from_string(opt.server_arch);
    config.rejector_arch = architecture_from_string(opt.rejector_arch);
    config.hidden_dim = opt.hidden;
    config.sgd.lr_server = opt.lr_server;
    config.sgd.lr_rejector = opt.lr_rejector;
    config.sgd.epochs = opt.epochs;
    config.sgd.shuffle = opt.shuffle;
    config.master_seed = opt.seed;

    const auto results = sweep(config);
    std::optional<std::ofstream> records_out;
    if (!opt.records.empty()) {
        records_out.emplace(opt.records);
        if (!*records_out) {
            throw std::runtime_error("cannot write records file: " + opt.records);
        }
    }
    for (const auto& result : results) {
        const std::string line = sweep_record(result);
        std::cout << line << '\n';
        if (records_out) *records_out << line << '\n';
    }
    return 0;
}

struct BrrCalibrateOptions {
    std::string system;
    std::string data;
};

int run_brr_calibrate(const BrrCalibrateOptions& opt) {
    const SystemFile file = load_system(opt.system);
    const Dataset cali = ingest_features(opt.data);
    std::cout << "q1 " << format_double(calibrate(file.system, cali)) << '\n';
    return 0;
}

struct BrrEvalOptions {
    std::string system;
    std::string cali;
    std::string test;
    double q = 0.3;
    std::uint64_t seed = 0;
};

int run_brr_eval(const BrrEvalOptions& opt) {
    const SystemFile file = load_system(opt.system);
    const Dataset cali = ingest_features(opt.cali);
    const Dataset test = ingest_features(opt.test);
    const BrrEvaluation eval = brr_evaluate(file.system, cali, test, opt.q, opt.seed);
    std::cout << "q " << format_double(eval.q) << "\nq1 " << format_double(eval.q1) << "\nmode "
              << (eval.mode == BrrPolicy::Mode::Under ? "under" : "over") << "\np "
              << format_double(eval.p) << "\nrealized_remote_fraction "
              << format_double(eval.realized_remote_fraction) << "\naccuracy "
              << percent1(eval.accuracy) << "%\nbaseline_accuracy_at_budget "
              << percent1(eval.baseline_accuracy_at_budget) << "%\n";
    return 0;
}

struct OracleCheckOptions {
    std::string world;
    std::vector<double> ce{0.0, 0.1, 0.25, 0.5, 1.0};
    std::vector<double> c1{0.0, 0.5, 1.0, 1.25, 2.0};
    double boundary_tolerance = 1e-9;
};

int run_oracle_check(const OracleCheckOptions& opt) {
    const WorldFile file = load_world(opt.world);
    bool all_ok = true;
    for (const double ce : opt.ce) {
        for (const double c1 : opt.c1) {
            const CostParams costs{ce, c1};
            costs.validate();
            const BayesEquivalence equivalence =
                verify_bayes_maps(file.world, file.client, costs);
            const ConsistencyReport consistency =
                consistency_check(file.world, file.client, costs, opt.boundary_tolerance);
            const bool ok = equivalence.passed() && consistency.passed();
            all_ok = all_ok && ok;
            std::cout << "ce=" << format_double(ce) << " c1=" << format_double(c1)
                      << " bayes=" << (equivalence.passed() ? "ok" : "MISMATCH")
                      << " consistency=" << (consistency.passed() ? "ok" : "MISMATCH")
                      << " checked=" << consistency.points_checked
                      << " boundary=" << consistency.boundary_points << '\n';
        }
    }
    std::cout << (all_ok ? "oracle-check passed\n" : "oracle-check FAILED\n");
    return all_ok ? 0 : 2;
}

struct GradCheckOptions {
    int cases = 100;
    std::uint64_t seed = 20240915;
    double h = 1e-5;
    double tolerance = 1e-4;
};

int run_gradcheck(const GradCheckOptions& opt) {
    const GradCheckSummary summary = run_gradient_checks(opt.cases, opt.seed, opt.h, opt.tolerance);
    for (const auto& suite : summary.suites) {
        std::cout << suite.name << ": cases=" << suite.cases
                  << " max_rel_error=" << format_double(suite.max_rel_error)
                  << (suite.max_rel_error < summary.tolerance ? " ok" : " FAIL") << '\n';
    }
    std::cout << (summary.passed() ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return summary.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Hybrid client/server classification with a trained rejector.\n"
        "Every subcommand also accepts --config FILE, a flat key=value file whose\n"
        "entries stand in for the equally named flags."};
    app.require_subcommand(1);
    int rc = 0;

    GenDataOptions gen_opt;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic Gaussian-mixture dataset");
    gen->add_option("--k", gen_opt.k, "Number of classes");
    gen->add_option("--dim", gen_opt.dim, "Feature dimension");
    gen->add_option("--radius", gen_opt.radius, "Circle radius of the class means");
    gen->add_option("--variance", gen_opt.variance, "Shared isotropic variance");
    gen->add_option("--blobs", gen_opt.blobs, "Gaussian components per class");
    gen->add_option("--satellite-share", gen_opt.satellite_share,
                    "Class mass in the components beyond the first");
    gen->add_option("--train-n", gen_opt.train_n, "Training samples");
    gen->add_option("--cali-n", gen_opt.cali_n, "Calibration samples");
    gen->add_option("--test-n", gen_opt.test_n, "Test samples");
    gen->add_option("--seed", gen_opt.seed, "Master seed");
    gen->add_option("--out", gen_opt.out, "Output path prefix")->required();
    gen->callback([&] { rc = run_gen_data(gen_opt); });

    TrainClientOptions client_opt;
    auto* train_client_cmd =
        app.add_subcommand("train-client", "Train and freeze the client classifier");
    train_client_cmd->add_option("--data", client_opt.data, "Training feature file")->required();
    train_client_cmd->add_option("--arch", client_opt.arch, "linear or mlp1");
    train_client_cmd->add_option("--hidden", client_opt.hidden, "Hidden width for mlp1");
    train_client_cmd->add_option("--subset-fraction", client_opt.subset_fraction,
                                 "Fraction of the training data the client sees");
    train_client_cmd->add_option("--drop-class", client_opt.drop_class,
                                 "1-based class withheld from the client (0 = none)");
    train_client_cmd->add_option("--epochs", client_opt.epochs, "Training epochs");
    train_client_cmd->add_option("--lr", client_opt.lr, "Learning rate");
    train_client_cmd->add_flag("--shuffle", client_opt.shuffle, "Shuffle each epoch");
    train_client_cmd->add_option("--seed", client_opt.seed, "Seed");
    train_client_cmd->add_option("--out", client_opt.out, "Checkpoint path")->required();
    train_client_cmd->callback([&] { rc = run_train_client(client_opt); });

    TrainOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "Train the server and rejector");
    train_cmd->add_option("--data", train_opt.data, "Training feature file")->required();
    train_cmd->add_option("--client", train_opt.client, "Frozen client checkpoint")->required();
    train_cmd->add_option("--algo", train_opt.algo, "sync or async");
    train_cmd->add_option("--sync-interval", train_opt.sync_interval,
                          "Snapshot refresh interval for async");
    train_cmd->add_option("--ce", train_opt.ce, "Reject cost");
    train_cmd->add_option("--c1", train_opt.c1, "Inaccuracy cost");
    train_cmd->add_option("--epochs", train_opt.epochs, "Training epochs");
    train_cmd->add_option("--lr-server", train_opt.lr_server, "Server learning rate");
    train_cmd->add_option("--lr-rejector", train_opt.lr_rejector, "Rejector learning rate");
    train_cmd->add_flag("--shuffle", train_opt.shuffle, "Shuffle each epoch");
    train_cmd->add_option("--seed", train_opt.seed, "Master seed");
    train_cmd->add_option("--server-arch", train_opt.server_arch, "linear or mlp1");
    train_cmd->add_option("--rejector-arch", train_opt.rejector_arch, "linear or mlp1");
    train_cmd->add_option("--hidden", train_opt.hidden, "Hidden width for mlp1");
    train_cmd->add_option("--out", train_opt.out, "System file path")->required();
    train_cmd->add_option("--trace", train_opt.trace, "Per-step trace records path");
    train_cmd->callback([&] { rc = run_train(train_opt); });

    EvaluateOptions eval_opt;
    auto* eval_cmd = app.add_subcommand("evaluate", "Contrastive evaluation of a trained system");
    eval_cmd->add_option("--system", eval_opt.system, "System file")->required();
    eval_cmd->add_option("--data", eval_opt.data, "Test feature file")->required();
    eval_cmd->add_option("--ce", eval_opt.ce, "Reject cost override");
    eval_cmd->add_option("--c1", eval_opt.c1, "Inaccuracy cost override");
    eval_cmd->add_option("--records", eval_opt.records, "Record output path");
    eval_cmd->callback([&] { rc = run_evaluate(eval_opt); });

    SweepOptions sweep_opt;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a cost grid");
    sweep_cmd->add_option("--train", sweep_opt.train, "Training feature file")->required();
    sweep_cmd->add_option("--test", sweep_opt.test, "Test feature file")->required();
    sweep_cmd->add_option("--cali", sweep_opt.cali, "Calibration feature file (for --q)");
    sweep_cmd->add_option("--client", sweep_opt.client, "Frozen client checkpoint")->required();
    sweep_cmd->add_option("--ce", sweep_opt.ce, "Reject cost grid")->delimiter(',');
    sweep_cmd->add_option("--c1", sweep_opt.c1, "Inaccuracy cost grid")->delimiter(',');
    sweep_cmd->add_option("--sync-interval", sweep_opt.sync_intervals,
                          "Async interval grid (0 = sync)")
        ->delimiter(',');
    sweep_cmd->add_option("--q", sweep_opt.q, "Bounded reject rate grid")->delimiter(',');
    sweep_cmd->add_option("--epochs", sweep_opt.epochs, "Training epochs");
    sweep_cmd->add_option("--lr-server", sweep_opt.lr_server, "Server learning rate");
    sweep_cmd->add_option("--lr-rejector", sweep_opt.lr_rejector, "Rejector learning rate");
    sweep_cmd->add_flag("--shuffle", sweep_opt.shuffle, "Shuffle each epoch");
    sweep_cmd->add_option("--seed", sweep_opt.seed, "Master seed");
    sweep_cmd->add_option("--server-arch", sweep_opt.server_arch, "linear or mlp1");
    sweep_cmd->add_option("--rejector-arch", sweep_opt.rejector_arch, "linear or mlp1");
    sweep_cmd->add_option("--hidden", sweep_opt.hidden, "Hidden width for mlp1");
    sweep_cmd->add_option("--records", sweep_opt.records, "Record output path");
    sweep_cmd->callback([&] { rc = run_sweep(sweep_opt); });

    BrrCalibrateOptions cal_opt;
    auto* cal_cmd = app.add_subcommand("brr-calibrate", "Empirical reject rate on a holdout");
    cal_cmd->add_option("--system", cal_opt.system, "System file")->required();
    cal_cmd->add_option("--data", cal_opt.data, "Calibration feature file")->required();
    cal_cmd->callback([&] { rc = run_brr_calibrate(cal_opt); });

    BrrEvalOptions brr_opt;
    auto* brr_cmd =
        app.add_subcommand("brr-eval", "Bounded-reject-rate inference against the baseline");
    brr_cmd->add_option("--system", brr_opt.system, "System file")->required();
    brr_cmd->add_option("--cali", brr_opt.cali, "Calibration feature file")->required();
    brr_cmd->add_option("--test", brr_opt.test, "Test feature file")->required();
    brr_cmd->add_option("--q", brr_opt.q, "Reject rate bound")->required();
    brr_cmd->add_option("--seed", brr_opt.seed, "Draw seed");
    brr_cmd->callback([&] { rc = run_brr_eval(brr_opt); });

    OracleCheckOptions oracle_opt;
    auto* oracle_cmd =
        app.add_subcommand("oracle-check", "Verify Bayes maps and surrogate consistency");
    oracle_cmd->add_option("--world", oracle_opt.world, "World file")->required();
    oracle_cmd->add_option("--ce", oracle_opt.ce, "Reject cost grid")->delimiter(',');
    oracle_cmd->add_option("--c1", oracle_opt.c1, "Inaccuracy cost grid")->delimiter(',');
    oracle_cmd->add_option("--boundary-tolerance", oracle_opt.boundary_tolerance,
                           "Decision-boundary exclusion band");
    oracle_cmd->callback([&] { rc = run_oracle_check(oracle_opt); });

    GradCheckOptions grad_opt;
    auto* grad_cmd =
        app.add_subcommand("gradcheck", "Analytic gradients vs central finite differences");
    grad_cmd->add_option("--cases", grad_opt.cases, "Random configurations per suite");
    grad_cmd->add_option("--seed", grad_opt.seed, "Seed");
    grad_cmd->add_option("--fd-step", grad_opt.h, "Finite-difference step");
    grad_cmd->add_option("--tolerance", grad_opt.tolerance, "Relative error tolerance");
    grad_cmd->callback([&] { rc = run_gradcheck(grad_opt); });

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return rc;
}
