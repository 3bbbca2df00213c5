// qcnn: dataset generation, training, reporting and self-checks.
//
// Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qcnn/dataset.hpp"
#include "qcnn/errors.hpp"
#include "qcnn/experiments.hpp"
#include "qcnn/serialization.hpp"
#include "qcnn/verify.hpp"

namespace {

using namespace qcnn;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kValidation = 1, kNumeric = 2, kIo = 3 };

struct RunConfig {
    std::string experiment = "binary";
    std::string head = "attention";
    std::size_t n_aq = 1;
    std::string seeds = "1..10";
    std::uint64_t dataset_seed = 1;
    std::size_t epochs = 300;
    double learning_rate = 0.01;
    std::optional<std::size_t> test_eval_every;
    std::string data_dir = "data";
    std::string out = "results";
    std::string cache_dir;
    std::string figure = "all";
    std::size_t threads = 0;
    bool inject_fault = false;
};

/// Keys mirror the long flag names with dashes replaced by underscores.
void apply_config_file(RunConfig& c, const std::string& path) {
    const json j = json::parse(read_file(path));
    if (!j.is_object()) throw ContractError("config file " + path + " must hold a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "experiment") c.experiment = v.get<std::string>();
        else if (key == "head") c.head = v.get<std::string>();
        else if (key == "n_aq") c.n_aq = v.get<std::size_t>();
        else if (key == "seeds") c.seeds = v.is_string() ? v.get<std::string>() : [&] {
            std::string s;
            for (const auto& x : v) s += (s.empty() ? "" : ",") + std::to_string(x.get<std::uint64_t>());
            return s;
        }();
        else if (key == "seed") c.dataset_seed = v.get<std::uint64_t>();
        else if (key == "epochs") c.epochs = v.get<std::size_t>();
        else if (key == "lr" || key == "learning_rate") c.learning_rate = v.get<double>();
        else if (key == "test_eval_every") c.test_eval_every = v.get<std::size_t>();
        else if (key == "data_dir") c.data_dir = v.get<std::string>();
        else if (key == "out") c.out = v.get<std::string>();
        else if (key == "cache_dir") c.cache_dir = v.get<std::string>();
        else if (key == "figure") c.figure = v.get<std::string>();
        else if (key == "threads") c.threads = v.get<std::size_t>();
        else throw ContractError("config file: unknown key '" + key + "'");
    }
}

/// --cache-dir, then QCNN_CACHE_DIR, then the config file, then <data-dir>/cache.
fs::path resolve_cache_dir(const RunConfig& c, bool flag_given) {
    if (flag_given) return c.cache_dir;
    if (const char* env = std::getenv("QCNN_CACHE_DIR"); env && *env) return env;
    if (!c.cache_dir.empty()) return c.cache_dir;
    return fs::path(c.data_dir) / "cache";
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

int cmd_gen_data(const RunConfig& c, const fs::path& cache_dir) {
    DatasetConfig dc;
    dc.experiment = experiment_from_string(c.experiment);
    dc.seed = c.dataset_seed;
    GroundStateCache cache(cache_dir);
    const json manifest = generate_dataset_files(dc, c.data_dir, cache, log_line);
    const auto& counts = manifest.at("counts");
    std::cout << "wrote " << dataset_dir(c.data_dir, dc.experiment).string() << ": " << counts.at("train") << " train, "
              << counts.at("test") << " test points (" << counts.at("excluded_ambiguous")
              << " ambiguous excluded); config hash " << manifest.at("config_hash").get<std::string>() << "; cache "
              << cache.hits() << " hits, " << cache.misses() << " solved\n";
    return kOk;
}

int cmd_train(const RunConfig& c) {
    TrainingRequest req;
    req.experiment = experiment_from_string(c.experiment);
    if (c.head == "all") {
        req.models = default_variants(req.experiment);
    } else {
        const HeadKind h = head_kind_from_string(c.head);
        if (h == HeadKind::attention && c.n_aq < 1) throw ContractError("--head attention requires --n-aq >= 1");
        if (h != HeadKind::attention && c.n_aq != 0) throw ContractError("--n-aq applies to --head attention only");
        req.models = {{h, c.n_aq}};
    }
    req.seeds = parse_seed_list(c.seeds);
    if (req.seeds.size() > 10) throw ContractError("--seeds: at most 10 seeds");
    req.config.epochs = c.epochs;
    req.config.learning_rate = c.learning_rate;
    req.config.test_eval_every = c.test_eval_every.value_or(req.experiment == ExperimentKind::binary ? 10 : 1);
    if (req.config.epochs == 0) throw ContractError("--epochs must be positive");
    req.data_root = c.data_dir;
    req.out_root = c.out;
    req.threads = c.threads;
    const auto runs = run_training(req, log_line);
    std::size_t diverged = 0;
    for (const auto& r : runs) diverged += r.diverged ? 1 : 0;
    std::cout << "trained " << runs.size() << " runs under " << (fs::path(c.out) / c.experiment).string();
    if (diverged) std::cout << "; " << diverged << " diverged";
    std::cout << '\n';
    return diverged ? kNumeric : kOk;
}

int cmd_report(const RunConfig& c, const fs::path& cache_dir) {
    ReportRequest req;
    req.experiment = experiment_from_string(c.experiment);
    req.out_root = c.out;
    req.data_root = c.data_dir;
    req.figure = c.figure;
    GroundStateCache cache(cache_dir);
    const json summary = write_report(req, cache, log_line);
    for (const auto& w : summary.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
    std::cout << "report written to " << (fs::path(c.out) / c.experiment / "report").string() << '\n';
    for (const auto& m : summary.at("models")) {
        if (!m.contains("final")) continue;
        const auto& f = m.at("final");
        std::cout << "  " << m.at("model").get<std::string>() << ": train loss "
                  << format_double(f.at("train_loss").at("mean").get<double>()) << ", test loss "
                  << format_double(f.at("test_loss").at("mean").is_number() ? f.at("test_loss").at("mean").get<double>()
                                                                           : std::nan(""))
                  << " (+" << m.at("head_param_count") << " head parameters)\n";
    }
    return kOk;
}

int cmd_verify(const RunConfig& c, const fs::path& cache_dir) {
    VerifyOptions opt;
    opt.inject_fault = c.inject_fault;
    opt.cache_dir = cache_dir;
    bool ok = true;
    for (const auto& r : run_invariant_suite(opt)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"QCNN phase classification with a channel-attention head"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string config_path;

    auto* gen = app.add_subcommand("gen-data", "compute ground states and write a labeled dataset");
    auto* train = app.add_subcommand("train", "train models over a seed set and write traces");
    auto* report = app.add_subcommand("report", "aggregate traces into summary and figure data");
    auto* verify = app.add_subcommand("verify", "run the fast invariant suite");

    // Flags captured here are applied over the config file after parsing.
    RunConfig flags;
    std::size_t flag_test_eval = 0;
    struct Opts {
        CLI::Option *experiment{}, *head{}, *n_aq{}, *seeds{}, *seed{}, *epochs{}, *lr{}, *data{}, *out{}, *cache{},
            *figure{}, *threads{}, *test_eval{};
    };
    std::vector<std::pair<CLI::App*, Opts>> subs;
    for (CLI::App* sub : {gen, train, report, verify}) {
        Opts o;
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        o.cache = sub->add_option("--cache-dir", flags.cache_dir, "ground-state cache directory");
        o.data = sub->add_option("--data-dir", flags.data_dir, "dataset root (default data)");
        if (sub != verify)
            o.experiment = sub->add_option("--experiment", flags.experiment, "binary or ternary")
                               ->check(CLI::IsMember({"binary", "ternary"}));
        if (sub == gen) o.seed = sub->add_option("--seed", flags.dataset_seed, "sampling seed (ternary)");
        if (sub == train) {
            o.head = sub->add_option("--head", flags.head, "plain, attention, nn, or all")
                         ->check(CLI::IsMember({"plain", "attention", "nn", "all"}));
            o.n_aq = sub->add_option("--n-aq", flags.n_aq, "attention qubits (attention head, 1..5)");
            o.seeds = sub->add_option("--seeds", flags.seeds, "seed list: a..b or a,b,c (default 1..10)");
            o.epochs = sub->add_option("--epochs", flags.epochs, "training epochs (default 300)");
            o.lr = sub->add_option("--lr", flags.learning_rate, "Adam learning rate (default 0.01)");
            o.test_eval = sub->add_option("--test-eval-every", flag_test_eval,
                                          "evaluate the test set every k epochs (default 10 binary, 1 ternary)");
            o.threads = sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
        }
        if (sub == train || sub == report) o.out = sub->add_option("--out", flags.out, "results root (default results)");
        if (sub == report) o.figure = sub->add_option("--figure", flags.figure, "all, 2b, 2c, 2d, 2e, 3b, 3c, 3d, 4c, table1");
        if (sub == verify) sub->add_flag("--inject-fault", flags.inject_fault, "perturb the analytic gradient (self-test)");
        subs.emplace_back(sub, o);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        Opts given;
        for (auto& [sub, o] : subs)
            if (sub->parsed()) given = o;
        auto set = [](CLI::Option* o) { return o != nullptr && o->count() > 0; };
        if (set(given.experiment)) cfg.experiment = flags.experiment;
        if (set(given.head)) cfg.head = flags.head;
        if (set(given.n_aq)) cfg.n_aq = flags.n_aq;
        if (set(given.seeds)) cfg.seeds = flags.seeds;
        if (set(given.seed)) cfg.dataset_seed = flags.dataset_seed;
        if (set(given.epochs)) cfg.epochs = flags.epochs;
        if (set(given.lr)) cfg.learning_rate = flags.learning_rate;
        if (set(given.test_eval)) cfg.test_eval_every = flag_test_eval;
        if (set(given.data)) cfg.data_dir = flags.data_dir;
        if (set(given.out)) cfg.out = flags.out;
        if (set(given.cache)) cfg.cache_dir = flags.cache_dir;
        if (set(given.figure)) cfg.figure = flags.figure;
        if (set(given.threads)) cfg.threads = flags.threads;
        cfg.inject_fault = flags.inject_fault;
        if (cfg.head != "attention" && !set(given.n_aq)) cfg.n_aq = 0;
        const fs::path cache_dir = resolve_cache_dir(cfg, set(given.cache));

        if (gen->parsed()) return cmd_gen_data(cfg, cache_dir);
        if (train->parsed()) return cmd_train(cfg);
        if (report->parsed()) return cmd_report(cfg, cache_dir);
        return cmd_verify(cfg, cache_dir);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const ResourceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
}
