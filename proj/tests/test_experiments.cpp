#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>

#include "qcnn/experiments.hpp"

using namespace qcnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("qcnn_experiments_test_" + name);
    fs::remove_all(p);
    return p;
}

DatasetConfig tiny_binary() {
    DatasetConfig c;
    c.experiment = ExperimentKind::binary;
    c.binary.train_points = 8;
    c.binary.grid_side = 4;
    return c;
}

DatasetConfig tiny_ternary() {
    DatasetConfig c;
    c.experiment = ExperimentKind::ternary;
    c.seed = 3;
    c.ternary.per_class = 3;
    return c;
}

TrainingRequest request(ExperimentKind k, const fs::path& root, std::vector<ModelVariant> models) {
    TrainingRequest r;
    r.experiment = k;
    r.models = std::move(models);
    r.seeds = {1, 2};
    r.config.epochs = 4;
    r.config.test_eval_every = 2;
    r.data_root = root / "data";
    r.out_root = root / "out";
    r.threads = 2;
    return r;
}

}  // namespace

TEST(Seeds, ParsesRangesAndLists) {
    EXPECT_EQ(parse_seed_list("1..4"), (std::vector<std::uint64_t>{1, 2, 3, 4}));
    EXPECT_EQ(parse_seed_list("7"), (std::vector<std::uint64_t>{7}));
    EXPECT_EQ(parse_seed_list("3,1,9"), (std::vector<std::uint64_t>{3, 1, 9}));
    EXPECT_THROW(parse_seed_list("4..1"), ContractError);
    EXPECT_THROW(parse_seed_list("a"), ContractError);
    EXPECT_THROW(parse_seed_list("1,,2"), ContractError);
    EXPECT_THROW(parse_seed_list(""), ContractError);
}

TEST(Variants, NamesRoundTrip) {
    for (auto k : {ExperimentKind::binary, ExperimentKind::ternary})
        for (const auto& v : default_variants(k)) EXPECT_EQ(ModelVariant::from_name(v.name()), v);
    EXPECT_EQ(default_variants(ExperimentKind::binary).size(), 6u);
    EXPECT_EQ(default_variants(ExperimentKind::ternary).size(), 3u);
    EXPECT_EQ((ModelVariant{HeadKind::attention, 3}).name(), "attention_naq3");
    EXPECT_THROW(ModelVariant::from_name("attention"), ContractError);
    EXPECT_THROW(ModelVariant::from_name("attention_naqx"), ContractError);
    EXPECT_EQ(architecture_for(ExperimentKind::ternary)->target_qubits().size(), 2u);
}

TEST(Aggregation, SampleMeanAndStd) {
    const std::vector<double> x{1, 2, 3, 4};
    const auto m = mean_std(x);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_NEAR(m.std, 1.29099, 1e-5);
    EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(m.n, 4u);
    const std::vector<double> with_nan{1, std::nan(""), 3};
    EXPECT_DOUBLE_EQ(mean_std(with_nan).mean, 2.0);
    EXPECT_EQ(mean_std(with_nan).n, 2u);
    const std::vector<double> one{5};
    EXPECT_TRUE(std::isnan(mean_std(one).std));
    EXPECT_TRUE(std::isnan(mean_std(std::vector<double>{}).mean));
}

TEST(Aggregation, TracesPerEpoch) {
    const double nan = std::nan("");
    std::vector<std::vector<EpochMetrics>> t{{{0, 1.0, 2.0, 0.5, nan}, {1, 0.5, nan, 0.75, nan}},
                                             {{0, 3.0, 4.0, 0.5, nan}, {1, 0.7, nan, 0.25, nan}}};
    const auto rows = aggregate_traces(t);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(rows[0].train_loss.mean, 2.0);
    EXPECT_NEAR(rows[0].train_loss.std, std::sqrt(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(rows[1].train_accuracy.mean, 0.5);
    EXPECT_TRUE(std::isnan(rows[1].test_loss.mean));
    EXPECT_NE(curves_csv(rows).find("1,0.6,"), std::string::npos);
    t[1].pop_back();
    EXPECT_THROW(aggregate_traces(t), ContractError);
}

TEST(WorkQueue, ResultsIndependentOfThreadCount) {
    for (std::size_t threads : {1u, 2u, 4u}) {
        std::vector<std::size_t> out(37, 0);
        run_work_queue(out.size(), threads, [&](std::size_t i) { out[i] = i * i; });
        for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
    }
    std::atomic<int> calls{0};
    run_work_queue(0, 3, [&](std::size_t) { ++calls; });
    EXPECT_EQ(calls, 0);
}

TEST(WorkQueue, PropagatesExceptions) {
    EXPECT_THROW(run_work_queue(10, 3,
                                [](std::size_t i) {
                                    if (i == 4) throw NumericError("job 4");
                                }),
                 NumericError);
}

TEST(FigureData, MatrixCsvAndSlices) {
    const std::vector<double> v{1, 2, 3, 4, 5, 6};
    EXPECT_EQ(matrix_csv(v, 3), "1,2,3\n4,5,6\n");
    GroundStateCache cache;
    const auto b = binary_slice_points(BinaryExperimentPlan{}, cache);
    ASSERT_EQ(b.size(), 64u);
    EXPECT_EQ(b.front().params.g_third, -1.6);
    EXPECT_EQ(b.back().params.g_third, 1.6);
    EXPECT_EQ(b[10].params.g_x, 1.04);
    const auto t = ternary_slice_points(TernaryExperimentPlan{}, cache);
    ASSERT_EQ(t.size(), 61u);
    EXPECT_EQ(t.front().params.g_zxz, 3.0);
    EXPECT_EQ(t.back().params.g_x, 3.0);
    for (const auto& p : t) EXPECT_NEAR(p.params.g_zxz + p.params.g_x + p.params.g_third, 4.0, 1e-9);
}

TEST(FigureData, ZeroChannelWeightsGiveFlatGrid) {
    GroundStateCache cache;
    const auto pts = binary_slice_points(BinaryExperimentPlan{}, cache);
    ModelSpec m = make_model(architecture_for(ExperimentKind::binary), HeadKind::attention, 2, 5);
    for (std::size_t k = m.circuit_param_count(); k < m.params.size(); ++k) m.params[k] = 0.0;
    for (double p : phase_diagram_grid({m}, pts, binary_class::spt)) EXPECT_DOUBLE_EQ(p, 0.5);
    EXPECT_THROW(phase_diagram_grid({}, pts, 0), ContractError);
}

TEST(Pipeline, DatasetManifestIsDeterministic) {
    const auto root = scratch("manifest");
    GroundStateCache cache(root / "cache");
    const auto m1 = generate_dataset_files(tiny_ternary(), root / "a", cache);
    const auto m2 = generate_dataset_files(tiny_ternary(), root / "b", cache);
    EXPECT_EQ(m1.dump(), m2.dump());
    EXPECT_EQ(m1["counts"]["train_per_class"], (std::vector<std::size_t>{2, 2, 2}));
    EXPECT_EQ(m1["config"]["seed"], 3);
    EXPECT_EQ(read_file(root / "a/ternary/manifest.json"), read_file(root / "b/ternary/manifest.json"));
    auto other = tiny_ternary();
    other.seed = 4;
    EXPECT_NE(other.hash(), tiny_ternary().hash());
    fs::remove_all(root);
}

TEST(Pipeline, TrainWithoutDataAsksForGenData) {
    const auto root = scratch("nodata");
    try {
        run_training(request(ExperimentKind::binary, root, {{HeadKind::plain, 0}}));
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("run gen-data first"), std::string::npos);
    }
}

TEST(Pipeline, RejectsInconsistentModels) {
    const auto root = scratch("badmodels");
    GroundStateCache cache;
    generate_dataset_files(tiny_ternary(), root / "data", cache);
    EXPECT_THROW(run_training(request(ExperimentKind::ternary, root, {{HeadKind::attention, 0}})), ContractError);
    EXPECT_THROW(run_training(request(ExperimentKind::ternary, root, {{HeadKind::nn, 2}})), ContractError);
    EXPECT_THROW(run_training(request(ExperimentKind::ternary, root, {{HeadKind::attention, 6}})), ContractError);
    fs::remove_all(root);
}

TEST(Pipeline, BinaryEndToEnd) {
    const auto root = scratch("binary_e2e");
    GroundStateCache cache(root / "cache");
    generate_dataset_files(tiny_binary(), root / "data", cache);
    auto req = request(ExperimentKind::binary, root, {{HeadKind::plain, 0}, {HeadKind::attention, 1}});
    const auto runs = run_training(req);
    ASSERT_EQ(runs.size(), 4u);
    for (const auto& r : runs) {
        EXPECT_FALSE(r.diverged);
        ASSERT_EQ(r.trace.epochs.size(), 4u);
        EXPECT_TRUE(std::isnan(r.trace.epochs[0].test_loss));
        EXPECT_FALSE(std::isnan(r.trace.epochs[1].test_loss));
        EXPECT_FALSE(std::isnan(r.trace.epochs[3].test_loss));
    }
    const auto dir = model_dir(req.out_root, ExperimentKind::binary, {HeadKind::attention, 1});
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    EXPECT_EQ(manifest["head_param_count"], 2);
    EXPECT_EQ(manifest["circuit_param_count"], 174);
    EXPECT_EQ(manifest["runs"].size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "1" / "trace.csv"));

    // Parameters written to disk reproduce the in-memory model.
    const auto pj = json::parse(read_file(dir / "2" / "params.json"));
    const auto m = model_from_params_json(pj, architecture_for(ExperimentKind::binary));
    EXPECT_EQ(m.params, runs[3].trace.final_params);
    EXPECT_EQ(pj["initial_train_loss"].get<double>(), runs[3].trace.initial_train_loss);

    // Rerunning with a different worker count gives identical files.
    const std::string before = read_file(dir / "2" / "trace.csv");
    req.threads = 1;
    run_training(req);
    EXPECT_EQ(read_file(dir / "2" / "trace.csv"), before);

    ReportRequest rep{ExperimentKind::binary, req.out_root, req.data_root, "all"};
    const auto summary = write_report(rep, cache);
    EXPECT_EQ(summary["models"].size(), 2u);
    EXPECT_EQ(summary["models"][1]["head_param_count"], 2);
    EXPECT_EQ(summary["comparison"].size(), 1u);
    EXPECT_TRUE(summary["warnings"].empty());
    const auto report = req.out_root / "binary" / "report";
    for (const char* f : {"summary.json", "curves_plain.csv", "grid_plain.csv", "grid_attention_naq1.csv",
                          "grid_labels.csv", "slice_2d.csv"})
        EXPECT_TRUE(fs::exists(report / f)) << f;
    const auto grid = read_file(report / "grid_plain.csv");
    EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 4);

    rep.figure = "3b";
    EXPECT_THROW(write_report(rep, cache), ContractError);

    // A missing seed makes the report partial, with a warning.
    fs::remove_all(dir / "2");
    const auto partial = write_report({ExperimentKind::binary, req.out_root, req.data_root, "2e"}, cache);
    ASSERT_FALSE(partial["warnings"].empty());
    EXPECT_NE(partial["warnings"][0].get<std::string>().find("missing seeds"), std::string::npos);
    EXPECT_EQ(partial["models"][1]["seeds_used"], (std::vector<int>{1}));
    fs::remove_all(root);
}

TEST(Pipeline, DivergedRunsAreFlaggedAndExcluded) {
    const auto root = scratch("diverge");
    GroundStateCache cache;
    generate_dataset_files(tiny_ternary(), root / "data", cache);
    auto req = request(ExperimentKind::ternary, root, {{HeadKind::nn, 0}});
    req.config.learning_rate = std::numeric_limits<double>::infinity();
    const auto runs = run_training(req);
    for (const auto& r : runs) EXPECT_TRUE(r.diverged);
    const auto dir = model_dir(req.out_root, ExperimentKind::ternary, {HeadKind::nn, 0});
    EXPECT_TRUE(fs::exists(dir / "1" / "diverged.json"));
    EXPECT_FALSE(fs::exists(dir / "1" / "trace.csv"));
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    EXPECT_EQ(manifest["runs"][0]["status"], "diverged");
    const auto summary = write_report({ExperimentKind::ternary, req.out_root, req.data_root, "table1"}, cache);
    ASSERT_FALSE(summary["warnings"].empty());
    EXPECT_NE(summary["warnings"][0].get<std::string>().find("diverged"), std::string::npos);
    fs::remove_all(root);
}

TEST(Pipeline, TernaryReportTable) {
    const auto root = scratch("ternary_report");
    GroundStateCache cache;
    generate_dataset_files(tiny_ternary(), root / "data", cache);
    auto req = request(ExperimentKind::ternary, root, default_variants(ExperimentKind::ternary));
    run_training(req);
    const auto summary = write_report({ExperimentKind::ternary, req.out_root, req.data_root, "all"}, cache);
    ASSERT_EQ(summary["comparison"].size(), 3u);
    EXPECT_EQ(summary["comparison"][0]["model"], "plain");
    EXPECT_EQ(summary["comparison"][1]["additional_params"], 2);
    EXPECT_EQ(summary["comparison"][2]["additional_params"], 20);
    EXPECT_EQ(summary["reference"]["attention_naq1"]["mean"], 0.099);
    const auto report = req.out_root / "ternary" / "report";
    for (const char* f : {"phase_plain.csv", "phase_nn.csv", "slice_3d.csv", "curves_nn.csv"})
        EXPECT_TRUE(fs::exists(report / f)) << f;
    fs::remove_all(root);
}

TEST(Pipeline, EmptyReportIsAnIoError) {
    const auto root = scratch("empty_report");
    GroundStateCache cache;
    try {
        write_report({ExperimentKind::ternary, root, root, "all"}, cache);
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("no trained models"), std::string::npos);
    }
}
