#pragma once

// Fast invariant suite behind `qcnn verify`: each check returns a named
// pass/fail record with a one-line detail.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qcnn/circuit.hpp"
#include "qcnn/dataset.hpp"
#include "qcnn/heads.hpp"
#include "qcnn/serialization.hpp"
#include "qcnn/spinmodels.hpp"
#include "qcnn/statevec.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    std::uint64_t seed = 2024;
    std::size_t n_states = 200;
    bool inject_fault = false;        ///< perturb one analytic gradient coordinate
    std::filesystem::path cache_dir;  ///< empty: skip the cache check
    std::size_t cache_samples = 10;
};

/// Haar-like random state: normalized complex Gaussian amplitudes.
inline Statevector random_state(std::size_t n_qubits, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> a(std::size_t{1} << n_qubits);
    double norm = 0.0;
    for (auto& x : a) {
        x = {g(rng), g(rng)};
        norm += std::norm(x);
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (auto& x : a) x *= inv;
    return Statevector(n_qubits, std::move(a));
}

struct GradientComparison {
    std::size_t coordinates = 0;
    std::size_t failures = 0;
    double worst_relative = 0.0;  ///< over coordinates compared relatively
    double worst_absolute = 0.0;  ///< over coordinates compared absolutely
};

/// Coordinate-wise rule: relative error <= rel_tol, except where the reference
/// magnitude is below abs_floor, where the absolute error must be <= abs_floor.
inline GradientComparison compare_gradients(std::span<const double> analytic, std::span<const double> reference,
                                            double rel_tol = 1e-5, double abs_floor = 1e-8) {
    if (analytic.size() != reference.size()) throw ContractError("compare_gradients: length mismatch");
    GradientComparison c;
    c.coordinates = analytic.size();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double err = std::abs(analytic[i] - reference[i]);
        if (std::abs(reference[i]) < abs_floor) {
            c.worst_absolute = std::max(c.worst_absolute, err);
            if (!(err <= abs_floor)) ++c.failures;
        } else {
            const double rel = err / std::abs(reference[i]);
            c.worst_relative = std::max(c.worst_relative, rel);
            if (!(rel <= rel_tol)) ++c.failures;
        }
    }
    return c;
}

namespace detail {

template <class F>
CheckResult timed(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r{name, false, {}, 0.0};
    try {
        f(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace detail

/// Marginalization, channel normalization and unitarity over random 9-qubit
/// inputs pushed through random-angle circuits (both target layouts, N_aq 1..5).
inline std::vector<CheckResult> check_head_invariants(const VerifyOptions& opt) {
    std::vector<CheckResult> out;
    std::mt19937_64 rng(opt.seed);
    const QcnnArchitecture archs[2] = {build_architecture(9, 1, 5), build_architecture(9, 2, 5)};
    double worst_marg = 0.0, worst_norm = 0.0, worst_unit = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < opt.n_states; ++s) {
        const QcnnArchitecture& arch = archs[s % 2];
        const Statevector in = random_state(9, rng);
        const auto params = random_angles(arch.total_params(), rng);
        const Statevector psi = forward(arch, params, in);
        worst_unit = std::max(worst_unit, std::abs(psi.norm_squared() - in.norm_squared()));
        const auto targets = arch.target_qubits();
        const auto plain = plain_head(psi, targets).probs;
        const std::size_t n_aq = 1 + s % 5;
        const auto table = channel_table(psi, arch.attention_qubits(n_aq), targets);
        double branch_total = 0.0;
        for (std::size_t k = 0; k < table.n_branches; ++k) {
            branch_total += table.branch_probs[k];
            double row_total = 0.0;
            for (double v : table.row(k)) row_total += v;
            worst_norm = std::max(worst_norm, std::abs(row_total - 1.0));
        }
        worst_norm = std::max(worst_norm, std::abs(branch_total - 1.0));
        for (std::size_t i = 0; i < table.n_outputs; ++i) {
            double mixed = 0.0;
            for (std::size_t k = 0; k < table.n_branches; ++k) mixed += table.branch_probs[k] * table.output(k, i);
            worst_marg = std::max(worst_marg, std::abs(mixed - plain[i]));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string n = std::to_string(opt.n_states) + " random states";
    out.push_back({"marginalization", worst_marg <= 1e-10, n + ", worst |sum_k p_k f_k - f| = " + detail::sci(worst_marg), secs});
    out.push_back({"channel_normalization", worst_norm <= 1e-10, n + ", worst row/branch sum defect = " + detail::sci(worst_norm), 0.0});
    out.push_back({"forward_unitarity", worst_unit <= 1e-12, n + ", worst norm drift = " + detail::sci(worst_unit), 0.0});
    return out;
}

inline CheckResult check_softmax_shift(const VerifyOptions& opt) {
    return detail::timed("softmax_shift_invariance", [&](CheckResult& r) {
        std::mt19937_64 rng(opt.seed + 1);
        std::uniform_real_distribution<double> u(-30.0, 30.0);
        double worst = 0.0;
        for (int t = 0; t < 1000; ++t) {
            std::vector<double> x(2 + t % 7), y;
            for (double& v : x) v = u(rng);
            const double c = u(rng) * 10.0;
            for (double v : x) y.push_back(v + c);
            const auto a = softmax(x);
            const auto b = softmax(y);
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        }
        r.passed = worst <= 1e-12;
        r.detail = "1000 random logit vectors, worst shift defect = " + detail::sci(worst);
    });
}

/// Adjoint gradient against double-precision central differences on a few
/// seeded models. The tolerance here is a smoke-level bound (relative 1e-5
/// plus absolute 1e-8 per coordinate), loose enough for FD roundoff yet far
/// below the perturbation used by the fault injector.
inline CheckResult check_gradient(const VerifyOptions& opt) {
    return detail::timed("gradient_check", [&](CheckResult& r) {
        std::mt19937_64 rng(opt.seed + 2);
        const auto a1 = std::make_shared<const QcnnArchitecture>(build_architecture(9, 1, 5));
        const auto a2 = std::make_shared<const QcnnArchitecture>(build_architecture(9, 2, 5));
        struct Case {
            std::shared_ptr<const QcnnArchitecture> arch;
            HeadKind head;
            std::size_t n_aq;
        };
        const Case cases[] = {{a1, HeadKind::plain, 0}, {a1, HeadKind::attention, 1}, {a1, HeadKind::attention, 2},
                              {a2, HeadKind::nn, 0},    {a2, HeadKind::attention, 1}};
        std::size_t failures = 0, coords = 0;
        double worst = 0.0;
        for (std::size_t c = 0; c < std::size(cases); ++c) {
            ModelSpec m = make_model(cases[c].arch, cases[c].head, cases[c].n_aq, opt.seed + c);
            if (m.head == HeadKind::attention)
                for (std::size_t k = m.circuit_param_count(); k < m.params.size(); ++k)
                    m.params[k] = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
            const std::vector<LabeledExample> batch{
                {std::make_shared<const Statevector>(random_state(9, rng)), static_cast<std::size_t>(rng() % (c < 3 ? 2 : 3))}};
            auto analytic = loss_gradient(m, batch);
            if (opt.inject_fault) {
                const std::size_t at = std::mt19937_64(opt.seed)() % analytic.size();
                analytic[at] += 1e-4 * (1.0 + std::abs(analytic[at]));
            }
            const auto fd = finite_difference_gradient(m, batch, 1e-5);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                const double err = std::abs(analytic[i] - fd[i]);
                const double bound = 1e-5 * std::abs(fd[i]) + 1e-8;
                worst = std::max(worst, err / bound);
                failures += err <= bound ? 0 : 1;
            }
            coords += fd.size();
        }
        r.passed = failures == 0;
        r.detail = std::to_string(coords) + " coordinates over " + std::to_string(std::size(cases)) +
                   " models, failures " + std::to_string(failures) + ", worst error/bound = " + detail::sci(worst) +
                   (opt.inject_fault ? " (fault injected)" : "");
    });
}

inline std::vector<CheckResult> check_ed_anchors() {
    std::vector<CheckResult> out;
    auto energy = [](const CheckResult& base, double got, double want) {
        CheckResult r = base;
        r.passed = std::abs(got - want) <= 1e-10;
        r.detail = "E0 = " + format_double(got) + ", expected " + format_double(want);
        return r;
    };
    out.push_back(detail::timed("ed_pure_field", [&](CheckResult& r) {
        r = energy(r, ground_state(build_hamiltonian_a({0.0, 1.0, 0.0, 9})).energy, -9.0);
    }));
    GroundStateResult cluster;
    out.push_back(detail::timed("ed_pure_cluster", [&](CheckResult& r) {
        cluster = ground_state(build_hamiltonian_a({1.0, 0.0, 0.0, 9}));
        r = energy(r, cluster.energy, -7.0);
    }));
    out.push_back(detail::timed("ed_pure_ferromagnet", [&](CheckResult& r) {
        r = energy(r, ground_state(build_hamiltonian_b({0.0, 0.0, 1.0, 9})).energy, -8.0);
    }));
    out.push_back(detail::timed("string_order_cluster", [&](CheckResult& r) {
        const double s = string_order(cluster.state);
        r.passed = std::abs(s - 1.0) <= 1e-10;
        r.detail = "string order = " + format_double(s);
    }));
    return out;
}

/// Re-solves a seeded sample of cached ground states and compares them with the stored ones.
inline CheckResult check_cache_integrity(const VerifyOptions& opt) {
    return detail::timed("ed_cache_integrity", [&](CheckResult& r) {
        if (opt.cache_dir.empty() || !std::filesystem::exists(opt.cache_dir)) {
            r.passed = true;
            r.detail = "no cache directory; skipped";
            return;
        }
        const GroundStateCache cache(opt.cache_dir);
        auto entries = cache.entries();
        if (entries.empty()) {
            r.passed = true;
            r.detail = "cache is empty; skipped";
            return;
        }
        std::mt19937_64 rng(opt.seed + 3);
        detail::portable_shuffle(entries, rng);
        if (entries.size() > opt.cache_samples) entries.resize(opt.cache_samples);
        double worst = 0.0;
        for (const auto& path : entries) {
            const auto [spec, stored] = GroundStateCache::read_entry(path);
            if (cache.path_for(GroundStateCache::key(spec)) != path)
                throw IoError("cache file " + path.filename().string() + " does not match its key");
            const GroundStateResult fresh = solve_ground_state(spec);
            worst = std::max(worst, std::abs(fresh.energy - stored.energy));
            const auto a = fresh.state.amplitudes();
            const auto b = stored.state.amplitudes();
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        }
        r.passed = worst <= 1e-10;
        r.detail = std::to_string(entries.size()) + " cached points re-solved, worst deviation = " + detail::sci(worst);
    });
}

inline std::vector<CheckResult> run_invariant_suite(const VerifyOptions& opt) {
    std::vector<CheckResult> out = check_head_invariants(opt);
    out.push_back(check_softmax_shift(opt));
    out.push_back(check_gradient(opt));
    for (auto& r : check_ed_anchors()) out.push_back(std::move(r));
    out.push_back(check_cache_integrity(opt));
    return out;
}

}  // namespace qcnn
