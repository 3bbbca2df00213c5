#pragma once

// Phase-classification datasets: ground-state cache, the binary (cluster-Ising)
// and ternary (Z2 x Z2^T) sampling plans, and the JSON-lines + amplitude
// sidecar file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcnn/errors.hpp"
#include "qcnn/serialization.hpp"
#include "qcnn/spinmodels.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

enum class ExperimentKind { binary, ternary };

inline std::string to_string(ExperimentKind k) { return k == ExperimentKind::binary ? "binary" : "ternary"; }

inline ExperimentKind experiment_from_string(const std::string& s) {
    if (s == "binary") return ExperimentKind::binary;
    if (s == "ternary") return ExperimentKind::ternary;
    throw ContractError("unknown experiment '" + s + "' (expected binary or ternary)");
}

using Logger = std::function<void(const std::string&)>;

/// Point in either coupling space. `g_third` is g_xx for model A and g_zz for model B.
struct HamiltonianSpec {
    ExperimentKind model = ExperimentKind::binary;
    double g_zxz = 0.0;
    double g_x = 0.0;
    double g_third = 0.0;
    std::size_t n_sites = 9;

    const char* third_name() const { return model == ExperimentKind::binary ? "g_xx" : "g_zz"; }
};

namespace detail {

inline std::string fixed12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12f", v);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos) s = "0.000000000000";
    return s;
}

}  // namespace detail

/// Couplings rounded to 12 decimals; the cache key and the solved problem both use these values.
inline HamiltonianSpec canonical(HamiltonianSpec s) {
    s.g_zxz = std::stod(detail::fixed12(s.g_zxz));
    s.g_x = std::stod(detail::fixed12(s.g_x));
    s.g_third = std::stod(detail::fixed12(s.g_third));
    return s;
}

inline GroundStateResult solve_ground_state(const HamiltonianSpec& s) {
    if (s.model == ExperimentKind::binary) return ground_state(build_hamiltonian_a({s.g_zxz, s.g_x, s.g_third, s.n_sites}));
    return ground_state(build_hamiltonian_b({s.g_zxz, s.g_x, s.g_third, s.n_sites}));
}

/// On-disk memo of ground states, one file per (Hamiltonian, rounded couplings, size, pinning) key.
class GroundStateCache {
public:
    GroundStateCache() = default;
    explicit GroundStateCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(dir_, ec);
            if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
        }
    }

    static std::string key(const HamiltonianSpec& s) {
        return std::string(s.model == ExperimentKind::binary ? "A" : "B") + "|n=" + std::to_string(s.n_sites) +
               "|pin=1|g_zxz=" + detail::fixed12(s.g_zxz) + "|g_x=" + detail::fixed12(s.g_x) + "|" + s.third_name() +
               "=" + detail::fixed12(s.g_third);
    }

    std::filesystem::path path_for(const std::string& key) const { return dir_ / ("gs_" + hex64(fnv1a(key)) + ".bin"); }

    bool enabled() const { return !dir_.empty(); }
    const std::filesystem::path& dir() const { return dir_; }

    GroundStateResult solve(const HamiltonianSpec& spec) {
        const HamiltonianSpec s = canonical(spec);
        const std::string k = key(s);
        if (enabled()) {
            if (auto hit = load(k)) {
                ++hits_;
                return std::move(hit->second);
            }
        }
        ++misses_;
        GroundStateResult gs = solve_ground_state(s);
        if (enabled()) store(k, s, gs);
        return gs;
    }

    /// Stored entry; nullopt when missing. Malformed files raise IoError.
    std::optional<std::pair<HamiltonianSpec, GroundStateResult>> load(const std::string& k) const {
        const auto p = path_for(k);
        if (!std::filesystem::exists(p)) return std::nullopt;
        auto entry = read_entry(p);
        if (key(entry.first) != k) return std::nullopt;  // hash collision
        return entry;
    }

    static std::pair<HamiltonianSpec, GroundStateResult> read_entry(const std::filesystem::path& p) {
        const std::string data = read_file(p);
        ByteReader r(data);
        if (r.remaining() < 4 || r.bytes(4) != "QCGS") throw IoError("ground-state cache: bad magic in " + p.string());
        if (r.u32() != 1) throw IoError("ground-state cache: unsupported version in " + p.string());
        HamiltonianSpec s;
        s.model = r.u8() == 0 ? ExperimentKind::binary : ExperimentKind::ternary;
        s.n_sites = r.u32();
        if (s.n_sites < 3 || s.n_sites > kMaxDenseSites) throw IoError("ground-state cache: bad size in " + p.string());
        s.g_zxz = r.f64();
        s.g_x = r.f64();
        s.g_third = r.f64();
        GroundStateResult gs;
        gs.pinned = r.u8() != 0;
        gs.energy = r.f64();
        gs.gap = r.f64();
        gs.state = read_amplitudes(r, s.n_sites);
        if (r.remaining() != 0) throw IoError("ground-state cache: trailing bytes in " + p.string());
        return {s, std::move(gs)};
    }

    std::vector<std::filesystem::path> entries() const {
        std::vector<std::filesystem::path> out;
        if (!enabled() || !std::filesystem::exists(dir_)) return out;
        for (const auto& e : std::filesystem::directory_iterator(dir_))
            if (e.is_regular_file() && e.path().extension() == ".bin" && e.path().filename().string().starts_with("gs_"))
                out.push_back(e.path());
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    void store(const std::string& k, const HamiltonianSpec& s, const GroundStateResult& gs) const {
        ByteWriter w;
        w.bytes("QCGS");
        w.u32(1);
        w.u8(s.model == ExperimentKind::binary ? 0 : 1);
        w.u32(static_cast<std::uint32_t>(s.n_sites));
        w.f64(s.g_zxz);
        w.f64(s.g_x);
        w.f64(s.g_third);
        w.u8(gs.pinned ? 1 : 0);
        w.f64(gs.energy);
        w.f64(gs.gap);
        write_amplitudes(w, gs.state);
        // Write-then-rename so concurrent readers never observe a partial file.
        const auto target = path_for(k);
        const auto tmp = target.string() + ".tmp";
        write_file(tmp, w.str());
        std::filesystem::rename(tmp, target);
    }

    std::filesystem::path dir_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

struct DataPoint {
    HamiltonianSpec params;
    double energy = 0.0;
    double gap = 0.0;
    bool pinned = false;
    PhaseLabel label;
    std::string label_source = "order_parameter";
    double string_value = 0.0;
    double ferro_value = 0.0;
    std::shared_ptr<const Statevector> state;
};

struct PhaseDataset {
    ExperimentKind kind = ExperimentKind::binary;
    std::vector<DataPoint> train;
    std::vector<DataPoint> test;
    std::size_t excluded_ambiguous = 0;
    std::size_t samples_drawn = 0;  ///< ternary rejection sampling only
};

inline std::vector<LabeledExample> labeled_examples(const std::vector<DataPoint>& points) {
    std::vector<LabeledExample> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p.state, p.label.class_index});
    return out;
}

inline DataPoint make_point(GroundStateCache& cache, const HamiltonianSpec& spec) {
    DataPoint d;
    d.params = canonical(spec);
    GroundStateResult gs = cache.solve(d.params);
    d.energy = gs.energy;
    d.gap = gs.gap;
    d.pinned = gs.pinned;
    d.string_value = string_order(gs.state);
    d.ferro_value = ferro_order(gs.state);
    d.label = d.params.model == ExperimentKind::binary ? label_binary_from_order(d.string_value)
                                                       : label_ternary_from_order(d.string_value, d.ferro_value);
    d.state = std::make_shared<const Statevector>(std::move(gs.state));
    return d;
}

// ---------------------------------------------------------------------------
// Binary plan: cluster-Ising model with g_zxz = 1.

struct BinaryExperimentPlan {
    std::size_t n_sites = 9;
    std::size_t train_points = 40;
    double train_g_x = 0.8;
    double g_xx_min = -1.6;
    double g_xx_max = 1.6;
    std::size_t grid_side = 64;
    double g_x_min = 0.0;
    double g_x_max = 1.6;
    std::vector<std::size_t> n_aq_list{0, 1, 2, 3, 4, 5};

    double train_g_xx(std::size_t j) const {
        return g_xx_min + (g_xx_max - g_xx_min) * static_cast<double>(j) / static_cast<double>(train_points - 1);
    }
    double grid_g_x(std::size_t row) const {
        return g_x_min + (g_x_max - g_x_min) * static_cast<double>(row) / static_cast<double>(grid_side - 1);
    }
    double grid_g_xx(std::size_t col) const {
        return g_xx_min + (g_xx_max - g_xx_min) * static_cast<double>(col) / static_cast<double>(grid_side - 1);
    }

    json to_json() const {
        return {{"n_sites", n_sites},   {"train_points", train_points}, {"train_g_x", train_g_x},
                {"g_xx_min", g_xx_min}, {"g_xx_max", g_xx_max},         {"grid_side", grid_side},
                {"g_x_min", g_x_min},   {"g_x_max", g_x_max},           {"n_aq_list", n_aq_list}};
    }
};

/// Training line (ambiguous points dropped) and the full test grid, row-major
/// over (g_x, g_xx). Ambiguous grid points take the label of the nearest
/// unambiguous grid point (ties to the lowest index).
inline PhaseDataset generate_binary_dataset(const BinaryExperimentPlan& plan, GroundStateCache& cache,
                                            const Logger& log = {}) {
    if (plan.train_points < 2 || plan.grid_side < 2) throw ContractError("binary plan: need at least two points per axis");
    PhaseDataset ds;
    ds.kind = ExperimentKind::binary;
    for (std::size_t j = 0; j < plan.train_points; ++j) {
        DataPoint d = make_point(cache, {ExperimentKind::binary, 1.0, plan.train_g_x, plan.train_g_xx(j), plan.n_sites});
        if (d.label.ambiguous) {
            ++ds.excluded_ambiguous;
            if (log)
                log("warning: excluding ambiguous training point g_xx=" + format_double(d.params.g_third) +
                    " (string order " + format_double(d.string_value) + ")");
            continue;
        }
        ds.train.push_back(std::move(d));
    }
    const std::size_t side = plan.grid_side;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c)
            ds.test.push_back(make_point(cache, {ExperimentKind::binary, 1.0, plan.grid_g_x(r), plan.grid_g_xx(c), plan.n_sites}));
        if (log && (r + 1) % 8 == 0) log("test grid rows " + std::to_string(r + 1) + "/" + std::to_string(side));
    }
    std::vector<PhaseLabel> resolved(ds.test.size());
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        resolved[i] = ds.test[i].label;
        if (!ds.test[i].label.ambiguous) continue;
        const auto ri = static_cast<long>(i / side);
        const auto ci = static_cast<long>(i % side);
        long best = -1;
        long best_d = 0;
        for (std::size_t j = 0; j < ds.test.size(); ++j) {
            if (ds.test[j].label.ambiguous) continue;
            const long dr = static_cast<long>(j / side) - ri;
            const long dc = static_cast<long>(j % side) - ci;
            const long d2 = dr * dr + dc * dc;
            if (best < 0 || d2 < best_d) {
                best = static_cast<long>(j);
                best_d = d2;
            }
        }
        if (best >= 0) {
            resolved[i] = ds.test[static_cast<std::size_t>(best)].label;
            resolved[i].ambiguous = true;
        }
    }
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        if (ds.test[i].label.ambiguous) ds.test[i].label_source = "nearest_neighbor";
        ds.test[i].label = resolved[i];
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Ternary plan: Z2 x Z2^T model on the simplex g_zxz + g_x + g_zz = 4.

struct TernaryExperimentPlan {
    std::size_t n_sites = 9;
    std::size_t per_class = 300;
    double coupling_sum = 4.0;
    double train_fraction = 0.7;
    std::size_t max_samples = 50000;

    json to_json() const {
        return {{"n_sites", n_sites},
                {"per_class", per_class},
                {"coupling_sum", coupling_sum},
                {"train_fraction", train_fraction},
                {"max_samples", max_samples}};
    }
};

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Fisher-Yates with 53-bit uniforms; std::shuffle's sequence is implementation-defined.
template <class T>
void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
        std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
}

}  // namespace detail

/// Uniform rejection sampling on the simplex until every class holds
/// `per_class` unambiguous points, then a stratified train/test split.
inline PhaseDataset generate_ternary_dataset(const TernaryExperimentPlan& plan, std::uint64_t seed,
                                             GroundStateCache& cache, const Logger& log = {}) {
    PhaseDataset ds;
    ds.kind = ExperimentKind::ternary;
    std::mt19937_64 rng(seed);
    std::vector<std::vector<DataPoint>> by_class(3);
    auto full = [&] {
        return std::all_of(by_class.begin(), by_class.end(), [&](const auto& v) { return v.size() >= plan.per_class; });
    };
    while (!full()) {
        if (ds.samples_drawn >= plan.max_samples)
            throw ResourceError("ternary sampling: class quota not reached after " + std::to_string(plan.max_samples) +
                                " samples (counts " + std::to_string(by_class[0].size()) + "/" +
                                std::to_string(by_class[1].size()) + "/" + std::to_string(by_class[2].size()) + ")");
        ++ds.samples_drawn;
        double u1 = detail::unit_uniform(rng);
        double u2 = detail::unit_uniform(rng);
        if (u1 > u2) std::swap(u1, u2);
        const double s = plan.coupling_sum;
        const double g_zxz = std::stod(detail::fixed12(s * u1));
        const double g_x = std::stod(detail::fixed12(s * (u2 - u1)));
        const double g_zz = s - g_zxz - g_x;
        DataPoint d = make_point(cache, {ExperimentKind::ternary, g_zxz, g_x, g_zz, plan.n_sites});
        if (d.label.ambiguous) {
            ++ds.excluded_ambiguous;
            continue;
        }
        const std::size_t cls = d.label.class_index == ternary_class::spt ? 2 : d.label.class_index;
        if (by_class[cls].size() < plan.per_class) by_class[cls].push_back(std::move(d));
        if (log && ds.samples_drawn % 250 == 0)
            log("sampled " + std::to_string(ds.samples_drawn) + " points, class counts " +
                std::to_string(by_class[0].size()) + "/" + std::to_string(by_class[1].size()) + "/" +
                std::to_string(by_class[2].size()));
    }
    std::mt19937_64 split_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const auto n_train = static_cast<std::size_t>(std::llround(plan.train_fraction * static_cast<double>(plan.per_class)));
    for (auto& cls : by_class) {
        std::vector<std::size_t> order(cls.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        detail::portable_shuffle(order, split_rng);
        std::vector<bool> is_train(cls.size(), false);
        for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
        for (std::size_t i = 0; i < cls.size(); ++i) (is_train[i] ? ds.train : ds.test).push_back(cls[i]);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset files: <split>.jsonl (one record per point) and <split>.amps.bin
// (2^n little-endian float64 re/im pairs per record, in record order).

inline json point_to_json(const DataPoint& d, std::size_t index) {
    return {{"index", index},
            {"params",
             {{"model", d.params.model == ExperimentKind::binary ? "A" : "B"},
              {"g_zxz", d.params.g_zxz},
              {"g_x", d.params.g_x},
              {d.params.third_name(), d.params.g_third},
              {"n_sites", d.params.n_sites}}},
            {"energy", d.energy},
            {"gap", d.gap},
            {"pinned", d.pinned},
            {"label",
             {{"class", d.label.class_index},
              {"one_hot", d.label.one_hot},
              {"ambiguous", d.label.ambiguous},
              {"source", d.label_source}}},
            {"order_parameters", {{"string", d.string_value}, {"ferro", d.ferro_value}}}};
}

inline void write_split(const std::filesystem::path& dir, const std::string& name, const std::vector<DataPoint>& points) {
    std::string lines;
    ByteWriter amps;
    for (std::size_t i = 0; i < points.size(); ++i) {
        lines += point_to_json(points[i], i).dump();
        lines += '\n';
        write_amplitudes(amps, *points[i].state);
    }
    write_file(dir / (name + ".jsonl"), lines);
    write_file(dir / (name + ".amps.bin"), amps.str());
}

inline std::vector<DataPoint> read_split(const std::filesystem::path& dir, const std::string& name) {
    const auto jl = dir / (name + ".jsonl");
    const auto bin = dir / (name + ".amps.bin");
    if (!std::filesystem::exists(jl) || !std::filesystem::exists(bin))
        throw IoError("dataset file " + jl.string() + " not found; run gen-data first");
    std::istringstream in(read_file(jl));
    const std::string blob = read_file(bin);
    ByteReader r(blob);
    std::vector<DataPoint> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        DataPoint d;
        const auto& p = j.at("params");
        d.params.model = p.at("model").get<std::string>() == "A" ? ExperimentKind::binary : ExperimentKind::ternary;
        d.params.g_zxz = p.at("g_zxz").get<double>();
        d.params.g_x = p.at("g_x").get<double>();
        d.params.g_third = p.at(d.params.third_name()).get<double>();
        d.params.n_sites = p.at("n_sites").get<std::size_t>();
        d.energy = j.at("energy").get<double>();
        d.gap = j.at("gap").get<double>();
        d.pinned = j.at("pinned").get<bool>();
        const auto& l = j.at("label");
        d.label.class_index = l.at("class").get<std::size_t>();
        d.label.one_hot = l.at("one_hot").get<std::vector<int>>();
        d.label.ambiguous = l.at("ambiguous").get<bool>();
        d.label_source = l.at("source").get<std::string>();
        d.string_value = j.at("order_parameters").at("string").get<double>();
        d.ferro_value = j.at("order_parameters").at("ferro").get<double>();
        if (j.at("index").get<std::size_t>() != out.size()) throw IoError(jl.string() + ": records out of order");
        d.state = std::make_shared<const Statevector>(read_amplitudes(r, d.params.n_sites));
        out.push_back(std::move(d));
    }
    if (r.remaining() != 0) throw IoError(bin.string() + ": sidecar longer than the record list");
    return out;
}

inline void write_dataset(const std::filesystem::path& dir, const PhaseDataset& ds) {
    write_split(dir, "train", ds.train);
    write_split(dir, "test", ds.test);
}

inline PhaseDataset read_dataset(const std::filesystem::path& dir, ExperimentKind kind) {
    PhaseDataset ds;
    ds.kind = kind;
    ds.train = read_split(dir, "train");
    ds.test = read_split(dir, "test");
    return ds;
}

}  // namespace qcnn
