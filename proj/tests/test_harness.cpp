#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "l2h/harness.hpp"
#include "l2h/rng.hpp"
#include "l2h/training.hpp"

using namespace l2h;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

double dataset_accuracy(const ScoreModel& model, const Dataset& data) {
    int correct = 0;
    for (const auto& ex : data.examples) {
        if (predict(model, ex.x) == ex.y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("gen_data is deterministic and validates sample counts") {
    const auto spec = GaussianMixtureSpec::circular(3, 2, 2.0, 1.0, 100, 50, 80);
    const DataSplits a = gen_data(spec, 5);
    const DataSplits b = gen_data(spec, 5);
    CHECK(a.train.size() == 100);
    CHECK(a.cali.size() == 50);
    CHECK(a.test.size() == 80);
    CHECK(a.train.examples[0].x == b.train.examples[0].x);
    CHECK(a.test.examples[79].x == b.test.examples[79].x);

    const DataSplits c = gen_data(spec, 6);
    CHECK(a.train.examples[0].x != c.train.examples[0].x);

    auto empty = spec;
    empty.test_n = 0;
    CHECK_THROWS_AS(gen_data(empty, 5), std::invalid_argument);
    CHECK_THROWS_AS(GaussianMixtureSpec::circular(3, 2, 2.0, -1.0, 10, 10, 10),
                    std::invalid_argument);
}

TEST_CASE("well-separated classes train a near-perfect linear client") {
    GaussianMixtureSpec spec;
    spec.num_classes = 2;
    spec.dim = 2;
    spec.component_means = {{-10.0, 0.0}, {10.0, 0.0}};
    spec.component_labels = {Label{0}, Label{1}};
    spec.variance = 1.0;
    spec.train_n = 400;
    spec.cali_n = 50;
    spec.test_n = 400;
    const DataSplits splits = gen_data(spec, 9);
    const ScoreModel client = train_client(splits.train, Architecture::Linear, {}, {0.05, 0.05, 2, true, 3});
    CHECK(client.frozen);
    CHECK(dataset_accuracy(client, splits.test) >= 0.99);
}

TEST_CASE("a trained server approaches the mixture's Bayes accuracy") {
    const auto spec = GaussianMixtureSpec::circular(3, 2, 2.5, 0.35, 4000, 500, 2000, 2, 0.25);
    const DataSplits splits = gen_data(spec, 11);

    // reference rule built straight from the mixture densities
    auto bayes_label = [&spec](const FeatureVector& x) {
        std::vector<double> class_density(spec.num_classes, 0.0);
        for (std::size_t c = 0; c < spec.component_means.size(); ++c) {
            double sq = 0.0;
            for (int d = 0; d < spec.dim; ++d) {
                const double diff = x[d] - spec.component_means[c][d];
                sq += diff * diff;
            }
            class_density[spec.component_labels[c].index] +=
                spec.component_weights[c] * std::exp(-sq / (2.0 * spec.variance));
        }
        return argmax_label(class_density);
    };
    int bayes_correct = 0;
    for (const auto& ex : splits.test.examples) {
        if (bayes_label(ex.x) == ex.y) ++bayes_correct;
    }
    const double bayes_accuracy = bayes_correct / static_cast<double>(splits.test.size());

    const ScoreModel server = train_client(splits.train, Architecture::Mlp1, {},
                                           {0.05, 0.05, 8, true, derive_seed(11, "train")});
    const double server_accuracy = dataset_accuracy(server, splits.test);
    CHECK(server_accuracy >= bayes_accuracy - 0.05);
    CHECK(server_accuracy <= bayes_accuracy + 0.02);
}

TEST_CASE("client handicaps") {
    const auto spec = GaussianMixtureSpec::circular(3, 2, 2.5, 0.35, 1000, 100, 500);
    const DataSplits splits = gen_data(spec, 13);

    // subset fraction 1.0 without dropout is plain training
    const ScoreModel full = train_client(splits.train, Architecture::Linear, {1.0, std::nullopt},
                                         {0.01, 0.01, 6, true, 7});
    const ScoreModel plain = train_client(splits.train, Architecture::Linear, {},
                                          {0.01, 0.01, 6, true, 7});
    CHECK(full.params == plain.params);

    CHECK_THROWS_AS(train_client(splits.train, Architecture::Linear, {0.0, std::nullopt},
                                 {0.01, 0.01, 1, false, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_client(splits.train, Architecture::Linear, {1.0, Label{7}},
                                 {0.01, 0.01, 1, false, 0}),
                    std::invalid_argument);

    // dropping the only represented class leaves nothing to train on
    Dataset single;
    single.num_classes = 2;
    single.dim = 1;
    single.examples = {{{0.0}, Label{0}}, {{1.0}, Label{0}}};
    CHECK_THROWS_AS(train_client(single, Architecture::Linear, {1.0, Label{0}},
                                 {0.01, 0.01, 1, false, 0}),
                    std::invalid_argument);
}

TEST_CASE("a dropped class is invisible to the client") {
    GaussianMixtureSpec spec;
    spec.num_classes = 3;
    spec.dim = 2;
    spec.component_means = {{-2.5, 0.0}, {2.5, 0.0}, {-1.5, 1.5}};
    spec.component_labels = {Label{0}, Label{1}, Label{2}};
    spec.variance = 0.35;
    spec.train_n = 2000;
    spec.cali_n = 200;
    spec.test_n = 900;
    const DataSplits splits = gen_data(spec, 15);
    const ScoreModel client = train_client(splits.train, Architecture::Linear, {1.0, Label{2}},
                                           {0.01, 0.01, 10, true, 8});
    int dropped_total = 0;
    int dropped_correct = 0;
    for (const auto& ex : splits.test.examples) {
        if (ex.y == Label{2}) {
            ++dropped_total;
            if (predict(client, ex.x) == ex.y) ++dropped_correct;
        }
    }
    REQUIRE(dropped_total > 0);
    CHECK(dropped_correct <= dropped_total / 50);  // essentially zero
}

TEST_CASE("evaluation handles one-sided rejectors") {
    ScoreModel client;
    client.architecture = Architecture::Linear;
    client.input_dim = 1;
    client.output_dim = 2;
    client.params = {0.0, 0.0, 1.0, 0.0};  // always class 0
    client.frozen = true;
    ScoreModel server = client;
    server.frozen = false;
    server.params = {2.0, 0.0, 0.0, 1.0};  // class 0 iff x > 0.5

    Dataset test;
    test.num_classes = 2;
    test.dim = 1;
    for (int i = 0; i < 10; ++i) {
        test.examples.push_back({{i < 5 ? 1.0 : -1.0}, Label{i < 5 ? 0 : 1}});
    }

    ScoreModel always_local;
    always_local.architecture = Architecture::Linear;
    always_local.input_dim = 1;
    always_local.output_dim = 2;
    always_local.params = {0.0, 0.0, 1.0, 0.0};

    const MetricsReport local_report =
        evaluate({client, always_local, server}, test, CostParams{0.25, 1.0});
    CHECK(local_report.reject_ratio == 0.0);
    CHECK(local_report.remote_branch.count == 0);
    CHECK_FALSE(local_report.remote_branch.has_accuracy);
    CHECK(local_report.human_table().find("N/A") != std::string::npos);
    CHECK(local_report.joint_accuracy == local_report.client_only_accuracy);

    ScoreModel always_remote = always_local;
    always_remote.params = {0.0, 0.0, 0.0, 1.0};
    const MetricsReport remote_report =
        evaluate({client, always_remote, server}, test, CostParams{0.25, 1.0});
    CHECK(remote_report.reject_ratio == 1.0);
    CHECK(remote_report.joint_accuracy == 1.0);  // the server is perfect here
    CHECK(remote_report.ledger.remote_queries == 10);

    // branch bookkeeping stays coherent
    CHECK(remote_report.local_branch.ratio + remote_report.remote_branch.ratio ==
          doctest::Approx(1.0).epsilon(1e-9));
    if (remote_report.remote_branch.has_accuracy) {
        CHECK(remote_report.remote_branch.difference ==
              doctest::Approx(remote_report.remote_branch.server_accuracy -
                              remote_report.remote_branch.client_accuracy)
                  .epsilon(1e-12));
    }
}

TEST_CASE("feature files round-trip and reject malformed input") {
    const auto spec = GaussianMixtureSpec::circular(3, 2, 2.0, 0.5, 50, 10, 10);
    const DataSplits splits = gen_data(spec, 17);
    const auto path = temp_file("l2h_test_features.txt");
    save_features(splits.train, path);
    const Dataset loaded = ingest_features(path);
    CHECK(loaded.num_classes == splits.train.num_classes);
    CHECK(loaded.dim == splits.train.dim);
    REQUIRE(loaded.size() == splits.train.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded.examples[i].x == splits.train.examples[i].x);
        CHECK(loaded.examples[i].y == splits.train.examples[i].y);
    }

    auto write = [&path](const char* text) {
        std::ofstream out(path);
        out << text;
    };
    write("K=2 L=2\n0.5,1\n");  // ragged row
    CHECK_THROWS_AS(ingest_features(path), std::runtime_error);
    write("K=2 L=2\n0.5,abc,1\n");  // non-numeric field
    CHECK_THROWS_AS(ingest_features(path), std::runtime_error);
    write("K=2 L=2\n0.5,0.5,3\n");  // label out of range
    CHECK_THROWS_AS(ingest_features(path), std::runtime_error);
    write("K=2 L=2\n0.5,0.5,0\n");  // labels are 1-based on disk
    CHECK_THROWS_AS(ingest_features(path), std::runtime_error);
    write("bad header\n");
    CHECK_THROWS_AS(ingest_features(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("key=value config files parse with comments") {
    const auto path = temp_file("l2h_test_config.txt");
    {
        std::ofstream out(path);
        out << "# comment line\n"
               "epochs=10\n"
               "  lr-server=0.05  # trailing comment\n"
               "\n"
               "algo=sync\n";
    }
    const auto entries = parse_key_value_file(path);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0] == std::pair<std::string, std::string>{"epochs", "10"});
    CHECK(entries[1].first == "lr-server");
    CHECK(entries[2].second == "sync");

    {
        std::ofstream out(path);
        out << "no equals sign\n";
    }
    CHECK_THROWS_AS(parse_key_value_file(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("a single-point sweep yields a single report") {
    const auto spec = GaussianMixtureSpec::circular(3, 2, 2.5, 0.35, 600, 100, 300, 2, 0.25);
    const DataSplits splits = gen_data(spec, 19);
    SweepConfig config;
    config.train = splits.train;
    config.test = splits.test;
    config.client = train_client(splits.train, Architecture::Linear, {0.5, std::nullopt},
                                 {0.01, 0.01, 4, true, 21});
    config.ce_grid = {0.25};
    config.c1_grid = {1.0};
    config.sgd = {0.05, 0.01, 2, true, 0};
    config.master_seed = 23;
    const auto results = sweep(config);
    REQUIRE(results.size() == 1);
    CHECK(results[0].point.reject_cost == 0.25);
    CHECK(results[0].brr.empty());
    const std::string record = sweep_record(results[0]);
    CHECK(record.find("\"algo\":\"sync\"") != std::string::npos);

    // a q grid without a calibration split is refused
    config.q_grid = {0.2};
    CHECK_THROWS_AS(sweep(config), std::invalid_argument);
    config.cali = splits.cali;
    const auto with_brr = sweep(config);
    REQUIRE(with_brr.size() == 1);
    REQUIRE(with_brr[0].brr.size() == 1);
    CHECK(sweep_record(with_brr[0]).find("\"brr\":[") != std::string::npos);
}

TEST_CASE("identical seeds reproduce identical report bytes end to end") {
    auto run_once = [] {
        const auto spec = GaussianMixtureSpec::circular(3, 2, 2.5, 0.35, 800, 100, 400, 2, 0.25);
        const DataSplits splits = gen_data(spec, 29);
        const ScoreModel client = train_client(splits.train, Architecture::Linear,
                                               {0.5, std::nullopt}, {0.01, 0.01, 4, true, 31});
        HybridSystem system;
        system.client = client;
        system.rejector = init_model(Architecture::Mlp1, 2, 2, 32, derive_seed(31, "rejector"));
        system.server = init_model(Architecture::Mlp1, 2, 3, 32, derive_seed(31, "server"));
        const TrainResult trained = train_sync(system, splits.train, CostParams{0.25, 1.0},
                                               {0.05, 0.01, 3, true, derive_seed(31, "loop")});
        const MetricsReport report = evaluate(trained.system, splits.test, CostParams{0.25, 1.0});
        return report.human_table() + report.record();
    };
    CHECK(run_once() == run_once());
}
