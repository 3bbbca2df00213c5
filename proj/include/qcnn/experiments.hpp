#pragma once

// Experiment orchestration: dataset files with manifests, multi-seed training
// jobs on a work queue, and the report stage (seed aggregates, phase-diagram
// grids, 1-D slices, comparison table).
//
// Results layout:
//   <out>/<experiment>/<model>/manifest.json
//   <out>/<experiment>/<model>/<seed>/trace.csv, params.json  (or diverged.json)
//   <out>/<experiment>/report/summary.json and the figure-data CSVs

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qcnn/circuit.hpp"
#include "qcnn/dataset.hpp"
#include "qcnn/errors.hpp"
#include "qcnn/serialization.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

inline constexpr std::size_t kExperimentQubits = 9;
inline constexpr std::size_t kMaxAttentionQubits = 5;

inline std::size_t target_count(ExperimentKind k) { return k == ExperimentKind::binary ? 1 : 2; }
inline std::size_t class_count(ExperimentKind k) { return k == ExperimentKind::binary ? 2 : 3; }

inline std::shared_ptr<const QcnnArchitecture> architecture_for(ExperimentKind k) {
    return std::make_shared<const QcnnArchitecture>(
        build_architecture(kExperimentQubits, target_count(k), kMaxAttentionQubits));
}

struct ModelVariant {
    HeadKind head = HeadKind::plain;
    std::size_t n_aq = 0;

    std::string name() const { return head == HeadKind::attention ? "attention_naq" + std::to_string(n_aq) : to_string(head); }

    static ModelVariant from_name(const std::string& s) {
        const std::string prefix = "attention_naq";
        if (s.starts_with(prefix)) {
            const std::string digits = s.substr(prefix.size());
            if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
                throw ContractError("unknown model name '" + s + "'");
            return {HeadKind::attention, std::stoul(digits)};
        }
        const HeadKind h = head_kind_from_string(s);
        if (h == HeadKind::attention) throw ContractError("attention model names carry N_aq, e.g. attention_naq1");
        return {h, 0};
    }

    bool operator==(const ModelVariant&) const = default;
};

/// The binary study sweeps N_aq over the plan (N_aq = 0 is the plain QCNN);
/// the ternary study compares plain, attention with one channel qubit, and the dense head.
inline std::vector<ModelVariant> default_variants(ExperimentKind k) {
    if (k == ExperimentKind::binary) {
        std::vector<ModelVariant> v{{HeadKind::plain, 0}};
        for (std::size_t a = 1; a <= kMaxAttentionQubits; ++a) v.push_back({HeadKind::attention, a});
        return v;
    }
    return {{HeadKind::plain, 0}, {HeadKind::attention, 1}, {HeadKind::nn, 0}};
}

/// "1..10", "3", or "1,4,7".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    auto num = [&](const std::string& s) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw ContractError("seed list: '" + text + "' is not of the form a..b or a,b,c");
        return static_cast<std::uint64_t>(std::stoull(s));
    };
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const auto lo = num(text.substr(0, dots));
        const auto hi = num(text.substr(dots + 2));
        if (hi < lo) throw ContractError("seed list: empty range '" + text + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
        return out;
    }
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(num(tok));
    if (out.empty()) throw ContractError("seed list: empty");
    return out;
}

/// Runs job(i) for i in [0, n_jobs) on up to `threads` workers (0 = hardware
/// concurrency). Jobs write only to their own slots, so results do not depend
/// on the worker count. The first exception escaping a job is rethrown.
inline void run_work_queue(std::size_t n_jobs, std::size_t threads, const std::function<void(std::size_t)>& job) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(n_jobs, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_jobs) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n_jobs;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Dataset stage

struct DatasetConfig {
    ExperimentKind experiment = ExperimentKind::binary;
    std::uint64_t seed = 1;  ///< drives ternary sampling and the split
    BinaryExperimentPlan binary;
    TernaryExperimentPlan ternary;

    json to_json() const {
        json j{{"experiment", to_string(experiment)}, {"code_version", kCodeVersion}};
        if (experiment == ExperimentKind::binary) {
            j["plan"] = binary.to_json();
        } else {
            j["plan"] = ternary.to_json();
            j["seed"] = seed;
        }
        return j;
    }
    std::string hash() const { return hex64(fnv1a(to_json().dump())); }
};

inline std::filesystem::path dataset_dir(const std::filesystem::path& data_root, ExperimentKind k) {
    return data_root / to_string(k);
}

/// Generates and writes <data_root>/<experiment>/{train,test}.{jsonl,amps.bin}
/// plus manifest.json, and returns the manifest. Deterministic in the config.
inline json generate_dataset_files(const DatasetConfig& cfg, const std::filesystem::path& data_root,
                                   GroundStateCache& cache, const Logger& log = {}) {
    const auto dir = dataset_dir(data_root, cfg.experiment);
    PhaseDataset ds = cfg.experiment == ExperimentKind::binary ? generate_binary_dataset(cfg.binary, cache, log)
                                                               : generate_ternary_dataset(cfg.ternary, cfg.seed, cache, log);
    write_dataset(dir, ds);
    std::vector<std::size_t> train_counts(class_count(cfg.experiment), 0), test_counts(class_count(cfg.experiment), 0);
    for (const auto& p : ds.train) ++train_counts.at(p.label.class_index);
    for (const auto& p : ds.test) ++test_counts.at(p.label.class_index);
    std::size_t relabeled = 0;
    for (const auto& p : ds.test) relabeled += p.label_source == "nearest_neighbor" ? 1 : 0;
    json files = json::object();
    for (const char* f : {"train.jsonl", "train.amps.bin", "test.jsonl", "test.amps.bin"}) files[f] = file_hash(dir / f);
    json manifest{{"config", cfg.to_json()},
                  {"config_hash", cfg.hash()},
                  {"code_version", kCodeVersion},
                  {"counts",
                   {{"train", ds.train.size()},
                    {"test", ds.test.size()},
                    {"train_per_class", train_counts},
                    {"test_per_class", test_counts},
                    {"excluded_ambiguous", ds.excluded_ambiguous},
                    {"test_relabeled_nearest_neighbor", relabeled},
                    {"samples_drawn", ds.samples_drawn}}},
                  {"files", files}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

struct LoadedDataset {
    PhaseDataset data;
    json manifest;
    std::string manifest_hash;
};

inline LoadedDataset load_dataset(const std::filesystem::path& data_root, ExperimentKind k) {
    const auto dir = dataset_dir(data_root, k);
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw IoError("no " + to_string(k) + " dataset under " + data_root.string() + "; run gen-data first");
    LoadedDataset out;
    const std::string text = read_file(dir / "manifest.json");
    out.manifest = json::parse(text);
    out.manifest_hash = hex64(fnv1a(text));
    out.data = read_dataset(dir, k);
    return out;
}

// ---------------------------------------------------------------------------
// Training stage

struct TrainingRequest {
    ExperimentKind experiment = ExperimentKind::binary;
    std::vector<ModelVariant> models;
    std::vector<std::uint64_t> seeds;
    TrainConfig config;  ///< seed field is overwritten per run
    std::filesystem::path data_root = "data";
    std::filesystem::path out_root = "results";
    std::size_t threads = 0;
};

struct RunRecord {
    ModelVariant model;
    std::uint64_t seed = 0;
    bool diverged = false;
    std::string error;
    TrainingTrace trace;
};

inline std::filesystem::path model_dir(const std::filesystem::path& out_root, ExperimentKind k, const ModelVariant& m) {
    return out_root / to_string(k) / m.name();
}

inline json params_json(const ModelVariant& m, std::uint64_t seed, std::span<const double> params,
                        std::size_t n_circuit) {
    return {{"model", m.name()},
            {"head", to_string(m.head)},
            {"n_aq", m.n_aq},
            {"seed", seed},
            {"circuit_param_count", n_circuit},
            {"params", std::vector<double>(params.begin(), params.end())}};
}

inline ModelSpec model_from_params_json(const json& j, std::shared_ptr<const QcnnArchitecture> arch) {
    ModelSpec m{std::move(arch), head_kind_from_string(j.at("head").get<std::string>()), j.at("n_aq").get<std::size_t>(),
                j.at("params").get<std::vector<double>>()};
    m.validate();
    return m;
}

inline json training_config_json(const TrainingRequest& req, const ModelVariant& m, const std::string& dataset_hash) {
    return {{"experiment", to_string(req.experiment)},
            {"model", m.name()},
            {"head", to_string(m.head)},
            {"n_aq", m.n_aq},
            {"seeds", req.seeds},
            {"epochs", req.config.epochs},
            {"learning_rate", req.config.learning_rate},
            {"adam_beta1", req.config.adam_beta1},
            {"adam_beta2", req.config.adam_beta2},
            {"adam_eps", req.config.adam_eps},
            {"clamp_floor", req.config.clamp_floor},
            {"test_eval_every", req.config.test_eval_every},
            {"dataset_manifest_hash", dataset_hash},
            {"code_version", kCodeVersion}};
}

/// Trains every (model, seed) pair and writes traces, final parameters and a
/// manifest per model. Diverged runs are recorded and do not stop the others.
inline std::vector<RunRecord> run_training(const TrainingRequest& req, const Logger& log = {}) {
    req.config.validate();
    if (req.models.empty()) throw ContractError("train: no models requested");
    if (req.seeds.empty()) throw ContractError("train: no seeds requested");
    const LoadedDataset loaded = load_dataset(req.data_root, req.experiment);
    const auto train_set = labeled_examples(loaded.data.train);
    const auto test_set = labeled_examples(loaded.data.test);
    const auto arch = architecture_for(req.experiment);
    for (const auto& m : req.models) {
        if (m.head != HeadKind::attention && m.n_aq != 0) throw ContractError("train: N_aq applies to the attention head only");
        if (m.head == HeadKind::attention && (m.n_aq < 1 || m.n_aq > kMaxAttentionQubits))
            throw ContractError("train: attention head requires 1 <= N_aq <= " + std::to_string(kMaxAttentionQubits));
    }

    std::vector<RunRecord> runs;
    for (const auto& m : req.models)
        for (auto s : req.seeds) runs.push_back({m, s, false, {}, {}});

    std::mutex log_mutex;
    auto say = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        log(msg);
    };

    run_work_queue(runs.size(), req.threads, [&](std::size_t i) {
        RunRecord& r = runs[i];
        const ModelSpec model = make_model(arch, r.model.head, r.model.n_aq, r.seed);
        TrainConfig cfg = req.config;
        cfg.seed = r.seed;
        const auto dir = model_dir(req.out_root, req.experiment, r.model) / std::to_string(r.seed);
        std::filesystem::remove(dir / "diverged.json");
        try {
            r.trace = train(model, train_set, test_set, cfg);
        } catch (const DivergenceError& e) {
            r.diverged = true;
            r.error = e.what();
            std::filesystem::remove(dir / "trace.csv");
            write_file(dir / "diverged.json", json{{"seed", r.seed}, {"epoch", e.epoch()}, {"message", r.error}}.dump(2) + "\n");
            say("warning: " + r.model.name() + " seed " + std::to_string(r.seed) + " diverged: " + r.error);
            return;
        }
        write_file(dir / "trace.csv", trace_csv(r.trace));
        json pj = params_json(r.model, r.seed, r.trace.final_params, model.circuit_param_count());
        pj["initial_train_loss"] = r.trace.initial_train_loss;
        write_file(dir / "params.json", pj.dump(2) + "\n");
        const auto& last = r.trace.epochs.empty() ? EpochMetrics{} : r.trace.epochs.back();
        say(r.model.name() + " seed " + std::to_string(r.seed) + ": train loss " + format_double(last.train_loss) +
            ", test loss " + format_double(last.test_loss));
    });

    for (const auto& m : req.models) {
        const ModelSpec probe = make_model(arch, m.head, m.n_aq, 0);
        json cfg = training_config_json(req, m, loaded.manifest_hash);
        json status = json::array();
        for (const auto& r : runs)
            if (r.model == m) status.push_back({{"seed", r.seed}, {"status", r.diverged ? "diverged" : "ok"}});
        json manifest{{"config", cfg},
                      {"config_hash", hex64(fnv1a(cfg.dump()))},
                      {"code_version", kCodeVersion},
                      {"circuit_param_count", probe.circuit_param_count()},
                      {"head_param_count", probe.head_param_count()},
                      {"total_param_count", probe.params.size()},
                      {"dataset", {{"dir", dataset_dir(req.data_root, req.experiment).string()},
                                   {"manifest_hash", loaded.manifest_hash},
                                   {"files", loaded.manifest.at("files")}}},
                      {"runs", status}};
        write_file(model_dir(req.out_root, req.experiment, m) / "manifest.json", manifest.dump(2) + "\n");
    }
    return runs;
}

// ---------------------------------------------------------------------------
// Aggregation

struct MeanStd {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    std::size_t n = 0;
};

/// Mean and sample (n - 1) standard deviation of the finite entries; std is NaN for fewer than two.
inline MeanStd mean_std(std::span<const double> xs) {
    MeanStd r;
    double sum = 0.0;
    for (double x : xs)
        if (!std::isnan(x)) {
            sum += x;
            ++r.n;
        }
    if (r.n == 0) return r;
    r.mean = sum / static_cast<double>(r.n);
    if (r.n < 2) return r;
    double ss = 0.0;
    for (double x : xs)
        if (!std::isnan(x)) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
    return r;
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

struct CurveRow {
    std::size_t epoch = 0;
    MeanStd train_loss, test_loss, train_accuracy, test_accuracy;
};

/// Per-epoch mean/std across traces of equal length.
inline std::vector<CurveRow> aggregate_traces(const std::vector<std::vector<EpochMetrics>>& traces) {
    if (traces.empty()) return {};
    const std::size_t len = traces.front().size();
    for (const auto& t : traces)
        if (t.size() != len) throw ContractError("aggregate: traces have different lengths");
    std::vector<CurveRow> out(len);
    std::vector<double> a(traces.size()), b(traces.size()), c(traces.size()), d(traces.size());
    for (std::size_t e = 0; e < len; ++e) {
        for (std::size_t s = 0; s < traces.size(); ++s) {
            a[s] = traces[s][e].train_loss;
            b[s] = traces[s][e].test_loss;
            c[s] = traces[s][e].train_accuracy;
            d[s] = traces[s][e].test_accuracy;
        }
        out[e] = {traces.front()[e].epoch, mean_std(a), mean_std(b), mean_std(c), mean_std(d)};
    }
    return out;
}

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
    std::ostringstream os;
    os << "epoch,train_loss_mean,train_loss_std,test_loss_mean,test_loss_std,train_acc_mean,train_acc_std,test_acc_mean,"
          "test_acc_std,n_seeds\n";
    for (const auto& r : rows)
        os << r.epoch << ',' << format_double(r.train_loss.mean) << ',' << format_double(r.train_loss.std) << ','
           << format_double(r.test_loss.mean) << ',' << format_double(r.test_loss.std) << ','
           << format_double(r.train_accuracy.mean) << ',' << format_double(r.train_accuracy.std) << ','
           << format_double(r.test_accuracy.mean) << ',' << format_double(r.test_accuracy.std) << ','
           << r.train_loss.n << '\n';
    return os.str();
}

struct ModelRuns {
    ModelVariant model;
    json manifest;
    std::vector<std::uint64_t> declared_seeds;
    std::vector<std::uint64_t> used_seeds;
    std::vector<std::uint64_t> diverged_seeds;
    std::vector<std::uint64_t> missing_seeds;
    std::vector<std::vector<EpochMetrics>> traces;  ///< aligned with used_seeds
    std::vector<json> params;                       ///< aligned with used_seeds
    std::vector<double> initial_losses;
};

inline ModelRuns load_model_runs(const std::filesystem::path& dir) {
    ModelRuns r;
    r.manifest = json::parse(read_file(dir / "manifest.json"));
    const auto& cfg = r.manifest.at("config");
    r.model = ModelVariant::from_name(cfg.at("model").get<std::string>());
    r.declared_seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
    for (auto s : r.declared_seeds) {
        const auto sd = dir / std::to_string(s);
        if (std::filesystem::exists(sd / "trace.csv") && std::filesystem::exists(sd / "params.json")) {
            r.used_seeds.push_back(s);
            r.traces.push_back(parse_trace_csv(read_file(sd / "trace.csv")));
            r.params.push_back(json::parse(read_file(sd / "params.json")));
            r.initial_losses.push_back(r.params.back().value("initial_train_loss", std::nan("")));
        } else if (std::filesystem::exists(sd / "diverged.json")) {
            r.diverged_seeds.push_back(s);
        } else {
            r.missing_seeds.push_back(s);
        }
    }
    return r;
}

/// Model directories with a manifest under <out>/<experiment>, in the canonical variant order.
inline std::vector<ModelRuns> load_experiment_runs(const std::filesystem::path& out_root, ExperimentKind k) {
    const auto root = out_root / to_string(k);
    std::vector<ModelRuns> out;
    if (std::filesystem::exists(root))
        for (const auto& e : std::filesystem::directory_iterator(root))
            if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json"))
                out.push_back(load_model_runs(e.path()));
    auto rank = [](const ModelVariant& m) {
        return (m.head == HeadKind::plain ? 0 : m.head == HeadKind::attention ? 1 : 2) * 100 + m.n_aq;
    };
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) { return rank(a.model) < rank(b.model); });
    return out;
}

// ---------------------------------------------------------------------------
// Phase diagrams and slices

/// Probability of `class_index` at every point, averaged over the given trained models.
inline std::vector<double> phase_diagram_grid(const std::vector<ModelSpec>& models, const std::vector<DataPoint>& points,
                                              std::size_t class_index) {
    if (models.empty()) throw ContractError("phase_diagram_grid: no models");
    std::vector<double> out(points.size(), 0.0);
    for (const auto& m : models) {
        const ModelEvaluator ev(m);
        for (std::size_t i = 0; i < points.size(); ++i) out[i] += ev.predict(*points[i].state).probs.at(class_index);
    }
    for (double& v : out) v /= static_cast<double>(models.size());
    return out;
}

/// Per-point class probabilities for each model: result[model][point][class].
inline std::vector<std::vector<std::vector<double>>> predict_points(const std::vector<ModelSpec>& models,
                                                                    const std::vector<DataPoint>& points) {
    std::vector<std::vector<std::vector<double>>> out;
    for (const auto& m : models) {
        const ModelEvaluator ev(m);
        auto& rows = out.emplace_back();
        for (const auto& p : points) rows.push_back(ev.predict(*p.state).probs);
    }
    return out;
}

inline std::string matrix_csv(std::span<const double> values, std::size_t cols) {
    std::ostringstream os;
    for (std::size_t i = 0; i < values.size(); ++i) os << format_double(values[i]) << (i % cols + 1 == cols ? '\n' : ',');
    return os.str();
}

inline constexpr double kBinarySliceGx = 1.04;
inline constexpr std::size_t kBinarySlicePoints = 64;
inline constexpr double kTernarySliceGzz = 1.0;
inline constexpr std::size_t kTernarySlicePoints = 61;

/// Ground states along the binary cut g_x = 1.04 (g_zxz = 1) over the training g_xx range.
inline std::vector<DataPoint> binary_slice_points(const BinaryExperimentPlan& plan, GroundStateCache& cache) {
    std::vector<DataPoint> out;
    for (std::size_t j = 0; j < kBinarySlicePoints; ++j) {
        const double g_xx = plan.g_xx_min + (plan.g_xx_max - plan.g_xx_min) * static_cast<double>(j) /
                                                static_cast<double>(kBinarySlicePoints - 1);
        out.push_back(make_point(cache, {ExperimentKind::binary, 1.0, kBinarySliceGx, g_xx, plan.n_sites}));
    }
    return out;
}

/// Ground states along g_zz = 1, g_x in [0, 3], g_zxz = 3 - g_x.
inline std::vector<DataPoint> ternary_slice_points(const TernaryExperimentPlan& plan, GroundStateCache& cache) {
    std::vector<DataPoint> out;
    const double span = plan.coupling_sum - kTernarySliceGzz;
    for (std::size_t j = 0; j < kTernarySlicePoints; ++j) {
        const double g_x = span * static_cast<double>(j) / static_cast<double>(kTernarySlicePoints - 1);
        out.push_back(make_point(cache, {ExperimentKind::ternary, span - g_x, g_x, kTernarySliceGzz, plan.n_sites}));
    }
    return out;
}

struct SliceCurve {
    std::vector<double> coordinate;
    std::vector<std::vector<MeanStd>> probs;  ///< [point][class], spread over seeds
};

inline SliceCurve slice_curve(const std::vector<ModelSpec>& models, const std::vector<DataPoint>& points,
                              std::span<const double> coordinate, std::size_t n_classes) {
    if (coordinate.size() != points.size()) throw ContractError("slice_curve: coordinate length mismatch");
    const auto preds = predict_points(models, points);
    SliceCurve c;
    c.coordinate.assign(coordinate.begin(), coordinate.end());
    std::vector<double> vals(models.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& row = c.probs.emplace_back();
        for (std::size_t k = 0; k < n_classes; ++k) {
            for (std::size_t m = 0; m < models.size(); ++m) vals[m] = preds[m][i][k];
            row.push_back(mean_std(vals));
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Report stage

struct ReportRequest {
    ExperimentKind experiment = ExperimentKind::binary;
    std::filesystem::path out_root = "results";
    std::filesystem::path data_root = "data";
    std::string figure = "all";
};

inline const std::vector<std::string>& figure_keys(ExperimentKind k) {
    static const std::vector<std::string> binary{"all", "2b", "2c", "2d", "2e"};
    static const std::vector<std::string> ternary{"all", "3b", "3c", "3d", "4c", "table1"};
    return k == ExperimentKind::binary ? binary : ternary;
}

inline json reference_values(ExperimentKind k) {
    if (k == ExperimentKind::binary)
        return {{"source_note", "final training loss of plain QCNN relative to attention"},
                {"plain_over_attention_naq1_approx", 3.0},
                {"plain_over_attention_naq5_approx", 10.0}};
    return {{"source_note", "mean test loss at epoch 300 over 10 seeds"},
            {"plain", {{"mean", 0.555}, {"std", 0.062}}},
            {"attention_naq1", {{"mean", 0.099}, {"std", 0.033}}},
            {"nn", {{"mean", 0.165}, {"std", 0.044}}}};
}

inline std::vector<ModelSpec> trained_models(const ModelRuns& r, const std::shared_ptr<const QcnnArchitecture>& arch) {
    std::vector<ModelSpec> out;
    for (const auto& p : r.params) out.push_back(model_from_params_json(p, arch));
    return out;
}

/// Aggregates all trained models of an experiment and writes the requested figure data.
/// Returns the summary, also written to <out>/<experiment>/report/summary.json.
inline json write_report(const ReportRequest& req, GroundStateCache& cache, const Logger& log = {}) {
    const auto& keys = figure_keys(req.experiment);
    if (std::find(keys.begin(), keys.end(), req.figure) == keys.end())
        throw ContractError("report: figure '" + req.figure + "' does not belong to the " + to_string(req.experiment) +
                            " experiment");
    const auto runs = load_experiment_runs(req.out_root, req.experiment);
    if (runs.empty())
        throw IoError("report: no trained models under " + (req.out_root / to_string(req.experiment)).string() +
                      "; run train first");
    const auto report_dir = req.out_root / to_string(req.experiment) / "report";
    const auto arch = architecture_for(req.experiment);
    const bool binary = req.experiment == ExperimentKind::binary;
    auto wants = [&](const char* f) { return req.figure == "all" || req.figure == f; };

    json warnings = json::array();
    json models = json::array();
    json files = json::array();
    std::map<std::string, MeanStd> final_test, final_train;
    for (const auto& r : runs) {
        const std::string name = r.model.name();
        if (!r.diverged_seeds.empty())
            warnings.push_back(name + ": diverged seeds excluded from aggregates: " + json(r.diverged_seeds).dump());
        if (!r.missing_seeds.empty())
            warnings.push_back(name + ": partial report, missing seeds " + json(r.missing_seeds).dump());
        json entry{{"model", name},
                   {"head", to_string(r.model.head)},
                   {"n_aq", r.model.n_aq},
                   {"circuit_param_count", r.manifest.at("circuit_param_count")},
                   {"head_param_count", r.manifest.at("head_param_count")},
                   {"seeds_declared", r.declared_seeds},
                   {"seeds_used", r.used_seeds},
                   {"seeds_diverged", r.diverged_seeds},
                   {"seeds_missing", r.missing_seeds}};
        if (!r.traces.empty()) {
            const auto curve = aggregate_traces(r.traces);
            if (wants(binary ? "2e" : "4c")) {
                write_file(report_dir / ("curves_" + name + ".csv"), curves_csv(curve));
                files.push_back("curves_" + name + ".csv");
            }
            const CurveRow& last = curve.back();
            final_train[name] = last.train_loss;
            final_test[name] = last.test_loss;
            entry["epochs"] = last.epoch;
            entry["initial_train_loss"] = to_json(mean_std(r.initial_losses));
            entry["final"] = {{"train_loss", to_json(last.train_loss)},
                              {"test_loss", to_json(last.test_loss)},
                              {"train_accuracy", to_json(last.train_accuracy)},
                              {"test_accuracy", to_json(last.test_accuracy)}};
        }
        models.push_back(entry);
    }

    json comparison = json::array();
    if (binary) {
        const auto plain = final_train.find("plain");
        for (const auto& [name, ms] : final_train) {
            if (name == "plain" || plain == final_train.end()) continue;
            comparison.push_back({{"model", name},
                                  {"final_train_loss_mean", ms.mean},
                                  {"plain_final_train_loss_mean", plain->second.mean},
                                  {"plain_over_model", plain->second.mean / ms.mean}});
        }
    } else {
        for (const auto& r : runs) {
            const auto it = final_test.find(r.model.name());
            if (it == final_test.end()) continue;
            comparison.push_back({{"model", r.model.name()},
                                  {"test_loss_mean", it->second.mean},
                                  {"test_loss_std", it->second.std},
                                  {"n_seeds", it->second.n},
                                  {"additional_params", r.manifest.at("head_param_count")}});
        }
    }

    // Figure data that needs the trained parameters and the data points.
    const bool need_grid = binary ? (wants("2b") || wants("2c")) : (wants("3b") || wants("3c"));
    const bool need_slice = wants(binary ? "2d" : "3d");
    if (need_grid || need_slice) {
        std::optional<LoadedDataset> loaded;
        if (need_grid) loaded = load_dataset(req.data_root, req.experiment);
        std::vector<DataPoint> slice;
        std::vector<double> coord;
        if (need_slice) {
            if (binary) {
                slice = binary_slice_points(BinaryExperimentPlan{}, cache);
                for (const auto& p : slice) coord.push_back(p.params.g_third);
            } else {
                slice = ternary_slice_points(TernaryExperimentPlan{}, cache);
                for (const auto& p : slice) coord.push_back(p.params.g_x);
            }
        }
        std::ostringstream slice_csv;
        std::vector<SliceCurve> curves;
        std::vector<std::string> slice_models;
        for (const auto& r : runs) {
            if (r.params.empty()) continue;
            const std::string name = r.model.name();
            const auto trained = trained_models(r, arch);
            const bool grid_for_model =
                need_grid && (req.figure == "all" ||
                              (r.model.head == HeadKind::plain) == (req.figure == "2b" || req.figure == "3b"));
            if (grid_for_model && binary) {
                const auto& pts = loaded->data.test;
                const auto grid = phase_diagram_grid(trained, pts, binary_class::spt);
                const std::size_t side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pts.size()))));
                write_file(report_dir / ("grid_" + name + ".csv"), matrix_csv(grid, side));
                files.push_back("grid_" + name + ".csv");
                if (log) log("wrote SPT-probability grid for " + name);
            } else if (grid_for_model) {
                const auto& pts = loaded->data.test;
                const auto preds = predict_points(trained, pts);
                std::ostringstream os;
                os << "index,g_zxz,g_x,g_zz,label,p_trivial,p_sb,p_spt\n";
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    double p[3] = {0, 0, 0};
                    for (const auto& pm : preds)
                        for (std::size_t k = 0; k < 3; ++k) p[k] += pm[i][k] / static_cast<double>(preds.size());
                    os << i << ',' << format_double(pts[i].params.g_zxz) << ',' << format_double(pts[i].params.g_x) << ','
                       << format_double(pts[i].params.g_third) << ',' << pts[i].label.class_index << ','
                       << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(p[2]) << '\n';
                }
                write_file(report_dir / ("phase_" + name + ".csv"), os.str());
                files.push_back("phase_" + name + ".csv");
            }
            if (need_slice) {
                curves.push_back(slice_curve(trained, slice, coord, class_count(req.experiment)));
                slice_models.push_back(name);
            }
        }
        if (need_grid && binary) {
            std::vector<double> labels;
            for (const auto& p : loaded->data.test) labels.push_back(p.label.class_index == binary_class::spt ? 1.0 : 0.0);
            const std::size_t side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(labels.size()))));
            write_file(report_dir / "grid_labels.csv", matrix_csv(labels, side));
            files.push_back("grid_labels.csv");
        }
        if (need_slice) {
            const std::string file = binary ? "slice_2d.csv" : "slice_3d.csv";
            const std::vector<std::string> cls = binary ? std::vector<std::string>{"spt"}
                                                        : std::vector<std::string>{"trivial", "sb", "spt"};
            slice_csv << (binary ? "g_xx" : "g_x,g_zxz,g_zz") << ",string_order,ferro_order,label";
            for (const auto& m : slice_models)
                for (const auto& c : cls) slice_csv << ',' << m << "_p_" << c << "_mean," << m << "_p_" << c << "_std";
            slice_csv << '\n';
            for (std::size_t i = 0; i < slice.size(); ++i) {
                const auto& p = slice[i];
                if (binary)
                    slice_csv << format_double(p.params.g_third);
                else
                    slice_csv << format_double(p.params.g_x) << ',' << format_double(p.params.g_zxz) << ','
                              << format_double(p.params.g_third);
                slice_csv << ',' << format_double(p.string_value) << ',' << format_double(p.ferro_value) << ','
                          << (p.label.ambiguous ? std::string("ambiguous") : std::to_string(p.label.class_index));
                for (const auto& c : curves) {
                    if (binary) {
                        const auto& ms = c.probs[i][binary_class::spt];
                        slice_csv << ',' << format_double(ms.mean) << ',' << format_double(ms.std);
                    } else {
                        for (std::size_t k = 0; k < 3; ++k)
                            slice_csv << ',' << format_double(c.probs[i][k].mean) << ',' << format_double(c.probs[i][k].std);
                    }
                }
                slice_csv << '\n';
            }
            write_file(report_dir / file, slice_csv.str());
            files.push_back(file);
        }
    }

    json summary{{"experiment", to_string(req.experiment)},
                 {"code_version", kCodeVersion},
                 {"figure", req.figure},
                 {"std_convention", "sample standard deviation (n - 1) over the seeds used"},
                 {"models", models},
                 {"comparison", comparison},
                 {"reference", reference_values(req.experiment)},
                 {"warnings", warnings},
                 {"files", files}};
    if (binary) summary["grid_layout"] = "rows: g_x/g_zxz ascending over [0, 1.6]; columns: g_xx/g_zxz ascending over [-1.6, 1.6]";
    write_file(report_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace qcnn
