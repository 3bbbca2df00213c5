// End-to-end acceptance run. Prints one "CRITERION k: PASS|FAIL ..." line per
// criterion and exits non-zero if any fails.
//
//   acceptance <work-dir>
//
// The work directory is wiped first. Runtime is dominated by the binary
// pipeline (run twice for the determinism check) and the ternary study.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "qcnn/experiments.hpp"
#include "qcnn/verify.hpp"
#include "support/oracles.hpp"

using namespace qcnn;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int k, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    std::cout << "CRITERION " << k << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

// --- 1 ------------------------------------------------------------------------

void invariant_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    VerifyOptions opt;
    auto results = check_head_invariants(opt);
    results.push_back(check_softmax_shift(opt));
    const double secs = seconds_since(t0);
    bool ok = secs < 60.0;
    std::string detail;
    for (const auto& r : results) {
        ok = ok && r.passed;
        detail += r.name + (r.passed ? " ok; " : " failed (" + r.detail + "); ");
    }
    report(1, ok, detail + "runtime " + fmt(secs, 3) + " s");
}

// --- 2 ------------------------------------------------------------------------

void gradient_correctness() {
    struct Variant {
        std::size_t n_target;
        HeadKind head;
        std::size_t n_aq;
    };
    const Variant variants[] = {{1, HeadKind::plain, 0},     {1, HeadKind::attention, 0}, {1, HeadKind::attention, 1},
                                {1, HeadKind::attention, 2}, {1, HeadKind::nn, 0},        {2, HeadKind::plain, 0},
                                {2, HeadKind::attention, 0}, {2, HeadKind::attention, 1}, {2, HeadKind::attention, 2},
                                {2, HeadKind::nn, 0}};
    const std::size_t per_variant = 11;
    std::mt19937_64 rng(20240601);
    const auto a1 = std::make_shared<const QcnnArchitecture>(build_architecture(9, 1, 5));
    const auto a2 = std::make_shared<const QcnnArchitecture>(build_architecture(9, 2, 5));
    std::size_t configs = 0, failed_configs = 0, coords = 0, failed_coords = 0;
    double worst_rel = 0.0, worst_abs = 0.0;
    for (const auto& v : variants) {
        for (std::size_t t = 0; t < per_variant; ++t) {
            ModelSpec m = make_model(v.n_target == 1 ? a1 : a2, v.head, v.n_aq, rng());
            std::uniform_real_distribution<double> u(-2.0, 2.0);
            for (std::size_t k = m.circuit_param_count(); k < m.params.size(); ++k) m.params[k] = u(rng);
            const std::size_t n_classes = v.n_target == 1 ? 2 : 3;
            const std::vector<LabeledExample> batch{
                {std::make_shared<const Statevector>(random_state(9, rng)), static_cast<std::size_t>(rng() % n_classes)}};
            const auto g = loss_gradient(m, batch);
            const auto ref = oracle::LongDoubleModel(m).fd_gradient(batch);
            const auto cmp = compare_gradients(g, ref);
            ++configs;
            coords += cmp.coordinates;
            failed_coords += cmp.failures;
            failed_configs += cmp.failures > 0 ? 1 : 0;
            worst_rel = std::max(worst_rel, cmp.worst_relative);
            worst_abs = std::max(worst_abs, cmp.worst_absolute);
        }
        progress("gradient check: " + std::to_string(configs) + " configurations done");
    }
    report(2, configs >= 100 && failed_configs == 0,
           std::to_string(configs) + " configurations, " + std::to_string(coords) + " coordinates, " +
               std::to_string(failed_coords) + " outside tolerance; worst relative error " + fmt(worst_rel, 3) +
               ", worst absolute error on |g| < 1e-8 coordinates " + fmt(worst_abs, 3));
}

// --- 3 ------------------------------------------------------------------------

void ed_anchors() {
    const auto results = check_ed_anchors();
    bool ok = results.size() == 4;
    std::string detail;
    for (const auto& r : results) {
        ok = ok && r.passed;
        detail += r.name + ": " + r.detail + "; ";
    }
    report(3, ok, detail);
}

// --- 4, 6, 7 -------------------------------------------------------------------

struct BinaryRun {
    fs::path out_root;
    json summary;
};

TrainingRequest study(ExperimentKind k, const fs::path& data, const fs::path& out) {
    TrainingRequest req;
    req.experiment = k;
    req.models = default_variants(k);
    req.seeds = parse_seed_list("1..10");
    req.config.epochs = 300;
    req.config.test_eval_every = 10;
    req.data_root = data;
    req.out_root = out;
    req.threads = 0;
    return req;
}

BinaryRun binary_pipeline(const fs::path& root) {
    const auto t0 = std::chrono::steady_clock::now();
    GroundStateCache cache(root / "cache");
    DatasetConfig dc;
    dc.experiment = ExperimentKind::binary;
    generate_dataset_files(dc, root / "data", cache);
    progress("binary dataset ready after " + fmt(seconds_since(t0), 3) + " s");
    const auto req = study(ExperimentKind::binary, root / "data", root / "results");
    run_training(req, [](const std::string& m) { progress(m); });
    progress("binary training done after " + fmt(seconds_since(t0), 3) + " s");
    ReportRequest rep{ExperimentKind::binary, req.out_root, req.data_root, "2e"};
    return {req.out_root, write_report(rep, cache)};
}

double final_train_mean(const json& summary, const std::string& model) {
    for (const auto& m : summary.at("models"))
        if (m.at("model") == model) return m.at("final").at("train_loss").at("mean").get<double>();
    throw std::runtime_error("model " + model + " missing from summary");
}

std::size_t seeds_used(const json& summary, const std::string& model) {
    for (const auto& m : summary.at("models"))
        if (m.at("model") == model) return m.at("seeds_used").size();
    return 0;
}

void binary_criterion(const json& summary) {
    const double plain = final_train_mean(summary, "plain");
    const double a1 = final_train_mean(summary, "attention_naq1");
    const double a5 = final_train_mean(summary, "attention_naq5");
    const bool all_seeds = seeds_used(summary, "plain") == 10 && seeds_used(summary, "attention_naq1") == 10 &&
                           seeds_used(summary, "attention_naq5") == 10;
    std::string trend;
    for (std::size_t k = 1; k <= kMaxAttentionQubits; ++k)
        trend += " naq" + std::to_string(k) + "=" + fmt(final_train_mean(summary, "attention_naq" + std::to_string(k)));
    report(4, all_seeds && plain / a1 >= 2.0 && a5 <= a1,
           "mean final train loss plain=" + fmt(plain) + trend + "; plain/naq1=" + fmt(plain / a1, 3) +
               " (need >= 2), naq5 <= naq1: " + (a5 <= a1 ? "yes" : "no"));
}

bool traces_identical(const fs::path& a, const fs::path& b, std::size_t& compared, std::string& first_diff) {
    bool same = true;
    for (const auto& m : default_variants(ExperimentKind::binary))
        for (int s = 1; s <= 10; ++s) {
            const auto rel = fs::path("binary") / m.name() / std::to_string(s) / "trace.csv";
            if (!fs::exists(a / rel) || !fs::exists(b / rel) || read_file(a / rel) != read_file(b / rel)) {
                if (same) first_diff = rel.string();
                same = false;
            }
            ++compared;
        }
    return same;
}

// --- 5 ------------------------------------------------------------------------

json ternary_pipeline(const fs::path& root) {
    const auto t0 = std::chrono::steady_clock::now();
    GroundStateCache cache(root / "cache");
    DatasetConfig dc;
    dc.experiment = ExperimentKind::ternary;
    const auto manifest = generate_dataset_files(dc, root / "data", cache);
    progress("ternary dataset ready after " + fmt(seconds_since(t0), 3) + " s (" +
             manifest.at("counts").at("samples_drawn").dump() + " samples drawn)");
    const auto req = study(ExperimentKind::ternary, root / "data", root / "results");
    run_training(req, [](const std::string& m) { progress(m); });
    progress("ternary training done after " + fmt(seconds_since(t0), 3) + " s");
    return write_report({ExperimentKind::ternary, req.out_root, req.data_root, "table1"}, cache);
}

void ternary_criterion(const json& summary) {
    std::map<std::string, json> row;
    for (const auto& c : summary.at("comparison")) row[c.at("model").get<std::string>()] = c;
    auto mean = [&](const char* m) { return row.at(m).at("test_loss_mean").get<double>(); };
    auto line = [&](const char* m) {
        return std::string(m) + " " + fmt(mean(m)) + " +- " + fmt(row.at(m).at("test_loss_std").get<double>(), 3) +
               " (n=" + row.at(m).at("n_seeds").dump() + ")";
    };
    const double plain = mean("plain"), att = mean("attention_naq1"), nn = mean("nn");
    const bool all_seeds = row.at("plain").at("n_seeds") == 10 && row.at("attention_naq1").at("n_seeds") == 10 &&
                           row.at("nn").at("n_seeds") == 10;
    const bool ok = all_seeds && att < nn && nn < plain && att < 0.3 && att < 0.8 * nn;
    report(5, ok,
           "test loss at epoch 300: " + line("attention_naq1") + ", " + line("nn") + ", " + line("plain") +
               "; reference 0.099 +- 0.033 / 0.165 +- 0.044 / 0.555 +- 0.062");
}

// --- 6 ------------------------------------------------------------------------

std::size_t head_params(const fs::path& out_root, ExperimentKind k, const ModelVariant& m) {
    return json::parse(read_file(model_dir(out_root, k, m) / "manifest.json")).at("head_param_count").get<std::size_t>();
}

void bookkeeping(const fs::path& binary_out, const fs::path& ternary_out) {
    const auto b_plain = head_params(binary_out, ExperimentKind::binary, {HeadKind::plain, 0});
    const auto b_att = head_params(binary_out, ExperimentKind::binary, {HeadKind::attention, 1});
    const auto t_plain = head_params(ternary_out, ExperimentKind::ternary, {HeadKind::plain, 0});
    const auto t_att = head_params(ternary_out, ExperimentKind::ternary, {HeadKind::attention, 1});
    const auto t_nn = head_params(ternary_out, ExperimentKind::ternary, {HeadKind::nn, 0});
    report(6, b_plain == 0 && b_att == 2 && t_plain == 0 && t_att == 2 && t_nn == 20,
           "manifest head_param_count: binary plain " + std::to_string(b_plain) + ", attention_naq1 " +
               std::to_string(b_att) + "; ternary plain " + std::to_string(t_plain) + ", attention_naq1 " +
               std::to_string(t_att) + ", nn " + std::to_string(t_nn));
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: acceptance <work-dir>\n";
        return 1;
    }
    const fs::path work = argv[1];
    fs::remove_all(work);
    fs::create_directories(work);
    const auto t0 = std::chrono::steady_clock::now();

    try {
        invariant_suite();
        gradient_correctness();
        ed_anchors();

        const auto first = binary_pipeline(work / "binary_a");
        binary_criterion(first.summary);
        const auto second = binary_pipeline(work / "binary_b");
        const auto ternary = ternary_pipeline(work / "ternary");
        ternary_criterion(ternary);
        bookkeeping(first.out_root, work / "ternary" / "results");

        std::size_t compared = 0;
        std::string first_diff;
        const bool same = traces_identical(first.out_root, second.out_root, compared, first_diff);
        report(7, same,
               std::to_string(compared) + " trace CSVs compared across two independent pipeline runs" +
                   (same ? std::string(", all byte-identical") : ", first difference in " + first_diff));
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        std::cout << "CRITERION ?: FAIL" << std::endl;
        return 2;
    }
    std::cout << "acceptance finished in " << fmt(seconds_since(t0), 4) << " s, " << failures << " criteria failing"
              << std::endl;
    return failures == 0 ? 0 : 1;
}
