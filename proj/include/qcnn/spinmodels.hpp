#pragma once

// Open-boundary spin-1/2 chains used to generate phase-classification data:
//
//   A (cluster-Ising):  H = -g_zxz sum Z_i X_{i+1} Z_{i+2} - g_x sum X_i - g_xx sum X_i X_{i+1}
//   B (Z2 x Z2^T):      H = +g_zxz sum Z_{i-1} X_i Z_{i+1} - g_x sum X_i - g_zz sum Z_i Z_{i+1}
//
// Site i (1-based) is qubit i-1. Both Hamiltonians are real symmetric in the
// computational basis and are stored as dense Eigen matrices.

#include <complex>

#include <Eigen/Dense>

#ifndef lapack_complex_double
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qcnn/errors.hpp"
#include "qcnn/statevec.hpp"

namespace qcnn {

inline constexpr std::size_t kMaxDenseSites = 14;
inline constexpr double kDegeneracyGap = 1e-10;
inline constexpr double kPinningField = 1e-8;

inline constexpr double kOrderThreshold = 0.5;
inline constexpr double kAmbiguityBand = 0.05;

struct HamiltonianParamsA {
    double g_zxz = 1.0;
    double g_x = 0.0;
    double g_xx = 0.0;
    std::size_t n_sites = 9;
};

struct HamiltonianParamsB {
    double g_zxz = 0.0;
    double g_x = 0.0;
    double g_zz = 0.0;
    std::size_t n_sites = 9;
};

struct GroundStateResult {
    double energy = 0.0;
    Statevector state;
    double gap = 0.0;  ///< E1 - E0 of the unpinned problem
    bool pinned = false;
};

struct PhaseLabel {
    std::size_t class_index = 0;
    std::vector<int> one_hot;
    bool ambiguous = false;
};

namespace detail {

inline void check_sites(std::size_t n) {
    if (n < 3) throw DomainError("hamiltonian: need at least 3 sites");
    if (n > kMaxDenseSites)
        throw ResourceError("hamiltonian: " + std::to_string(n) + " sites exceeds dense cap of " +
                            std::to_string(kMaxDenseSites));
}

inline double zsign(std::size_t index, std::size_t n, std::size_t qubit) {
    return ((index >> bit_of(n, qubit)) & 1U) ? -1.0 : 1.0;
}

inline std::size_t xmask(std::size_t n, std::size_t qubit) { return std::size_t{1} << bit_of(n, qubit); }

/// coeff * (Z_a X_b Z_c) added into h.
inline void add_zxz(Eigen::MatrixXd& h, std::size_t n, std::size_t a, std::size_t b, std::size_t c, double coeff) {
    const std::size_t dim = std::size_t{1} << n;
    const std::size_t flip = xmask(n, b);
    for (std::size_t s = 0; s < dim; ++s) h(s ^ flip, s) += coeff * zsign(s, n, a) * zsign(s, n, c);
}

inline void add_x(Eigen::MatrixXd& h, std::size_t n, std::size_t a, double coeff) {
    const std::size_t dim = std::size_t{1} << n;
    const std::size_t flip = xmask(n, a);
    for (std::size_t s = 0; s < dim; ++s) h(s ^ flip, s) += coeff;
}

inline void add_xx(Eigen::MatrixXd& h, std::size_t n, std::size_t a, std::size_t b, double coeff) {
    const std::size_t dim = std::size_t{1} << n;
    const std::size_t flip = xmask(n, a) | xmask(n, b);
    for (std::size_t s = 0; s < dim; ++s) h(s ^ flip, s) += coeff;
}

inline void add_zz(Eigen::MatrixXd& h, std::size_t n, std::size_t a, std::size_t b, double coeff) {
    const std::size_t dim = std::size_t{1} << n;
    for (std::size_t s = 0; s < dim; ++s) h(s, s) += coeff * zsign(s, n, a) * zsign(s, n, b);
}

}  // namespace detail

inline Eigen::MatrixXd build_hamiltonian_a(const HamiltonianParamsA& p) {
    detail::check_sites(p.n_sites);
    const std::size_t n = p.n_sites;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(1L << n, 1L << n);
    for (std::size_t i = 0; i + 2 < n; ++i) detail::add_zxz(h, n, i, i + 1, i + 2, -p.g_zxz);
    for (std::size_t i = 0; i < n; ++i) detail::add_x(h, n, i, -p.g_x);
    for (std::size_t i = 0; i + 1 < n; ++i) detail::add_xx(h, n, i, i + 1, -p.g_xx);
    return h;
}

inline Eigen::MatrixXd build_hamiltonian_b(const HamiltonianParamsB& p) {
    detail::check_sites(p.n_sites);
    const std::size_t n = p.n_sites;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(1L << n, 1L << n);
    for (std::size_t i = 0; i + 2 < n; ++i) detail::add_zxz(h, n, i, i + 1, i + 2, +p.g_zxz);
    for (std::size_t i = 0; i < n; ++i) detail::add_x(h, n, i, -p.g_x);
    for (std::size_t i = 0; i + 1 < n; ++i) detail::add_zz(h, n, i, i + 1, -p.g_zz);
    return h;
}

namespace detail {

struct LowestPair {
    double e0 = 0.0;
    double e1 = 0.0;
    Eigen::VectorXcd vec;
};

// LAPACK ?syevr/?heevr restricted to the two lowest eigenpairs.
inline LowestPair solve_lowest(Eigen::MatrixXd a) {
    const auto n = static_cast<lapack_int>(a.rows());
    std::vector<double> w(static_cast<std::size_t>(n));
    Eigen::MatrixXd z(n, 2);
    std::vector<lapack_int> support(4);
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, 2, 0.0,
                                           &found, w.data(), z.data(), n, support.data());
    if (info != 0 || found != 2)
        throw NumericError("ground_state: dsyevr failed (info " + std::to_string(info) + ", dimension " +
                           std::to_string(n) + ")");
    return {w[0], w[1], z.col(0).cast<cplx>()};
}

inline LowestPair solve_lowest(Eigen::MatrixXcd a) {
    const auto n = static_cast<lapack_int>(a.rows());
    std::vector<double> w(static_cast<std::size_t>(n));
    Eigen::MatrixXcd z(n, 2);
    std::vector<lapack_int> support(4);
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n,
                       0.0, 0.0, 1, 2, 0.0, &found, w.data(), z.data(), n,
                       support.data());
    if (info != 0 || found != 2)
        throw NumericError("ground_state: zheevr failed (info " + std::to_string(info) + ", dimension " +
                           std::to_string(n) + ")");
    return {w[0], w[1], z.col(0)};
}

}  // namespace detail

/// Lowest eigenpair of a dense Hermitian matrix of dimension 2^n.
///
/// When the two lowest levels are closer than kDegeneracyGap the problem is
/// re-solved with a pinning field -kPinningField * Z on qubit 0, which makes
/// the selected ground state deterministic. The global phase is fixed so that
/// the largest-magnitude amplitude (first one on ties) is real and positive.
template <class Matrix>
GroundStateResult ground_state(const Matrix& h) {
    const Eigen::Index dim = h.rows();
    if (dim != h.cols() || dim < 2 || (dim & (dim - 1)) != 0)
        throw ContractError("ground_state: matrix must be square with power-of-two dimension");
    if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw ContractError("ground_state: matrix is not Hermitian");
    const auto n = static_cast<std::size_t>(std::countr_zero(static_cast<std::size_t>(dim)));

    auto lowest = detail::solve_lowest(h);
    GroundStateResult out;
    out.gap = lowest.e1 - lowest.e0;
    Eigen::VectorXcd vec = std::move(lowest.vec);
    if (out.gap < kDegeneracyGap) {
        Matrix pinned = h;
        for (Eigen::Index s = 0; s < dim; ++s)
            pinned(s, s) -= kPinningField * detail::zsign(static_cast<std::size_t>(s), n, 0);
        vec = detail::solve_lowest(pinned).vec;
        out.pinned = true;
    }

    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < dim; ++i)
        if (std::abs(vec(i)) > std::abs(vec(lead)) + 1e-12) lead = i;
    const cplx lead_val = vec(lead);
    vec *= std::abs(lead_val) / lead_val;
    vec.normalize();

    std::vector<cplx> amps(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) amps[static_cast<std::size_t>(i)] = vec(i);
    out.state = Statevector(n, std::move(amps));

    // Rayleigh quotient with respect to the unpinned matrix.
    out.energy = vec.dot(h.template cast<cplx>() * vec).real();
    return out;
}

/// |<Z_1 X_2 X_4 ... X_{n-1} Z_n>|, a product of cluster stabilizers on odd chains.
inline double string_order(const Statevector& state) {
    const std::size_t n = state.n_qubits();
    if (n < 5) throw DomainError("string_order: need at least 5 sites");
    if (n % 2 == 0) throw DomainError("string_order: defined for odd chain lengths only");
    PauliString p;
    p.ops.emplace_back(0, Pauli::Z);
    for (std::size_t q = 1; q + 1 < n; q += 2) p.ops.emplace_back(q, Pauli::X);
    p.ops.emplace_back(n - 1, Pauli::Z);
    return std::abs(expectation_pauli_string(state, p));
}

/// |<Z_2 Z_{n-1}>|, the long-range ZZ correlation one site in from each end.
///
/// Z_1 and Z_n are edge-mode operators of the cluster phase, so the outermost
/// pair would report spurious order in SPT ground states of open chains.
inline double ferro_order(const Statevector& state) {
    const std::size_t n = state.n_qubits();
    if (n < 4) throw DomainError("ferro_order: need at least 4 sites");
    PauliString p;
    p.ops = {{1, Pauli::Z}, {n - 2, Pauli::Z}};
    return std::abs(expectation_pauli_string(state, p));
}

namespace detail {

inline PhaseLabel make_label(std::size_t cls, std::size_t width, bool ambiguous) {
    PhaseLabel l;
    l.class_index = cls;
    l.one_hot.assign(width, 0);
    l.one_hot[cls] = 1;
    l.ambiguous = ambiguous;
    return l;
}

}  // namespace detail

namespace binary_class {
inline constexpr std::size_t spt = 0;
inline constexpr std::size_t non_spt = 1;
}  // namespace binary_class

namespace ternary_class {
inline constexpr std::size_t trivial = 0;  // |00>
inline constexpr std::size_t sb = 1;       // |01>
inline constexpr std::size_t spt = 2;      // |10>
}  // namespace ternary_class

/// SPT (class 0) iff the string order reaches kOrderThreshold.
inline PhaseLabel label_binary_from_order(double string_value) {
    const bool spt = string_value >= kOrderThreshold;
    const bool ambiguous = std::abs(string_value - kOrderThreshold) < kAmbiguityBand;
    return detail::make_label(spt ? binary_class::spt : binary_class::non_spt, 2, ambiguous);
}

inline PhaseLabel label_binary(const HamiltonianParamsA& p, const GroundStateResult& gs) {
    if (gs.state.n_qubits() != p.n_sites) throw ContractError("label_binary: ground state does not match parameters");
    return label_binary_from_order(string_order(gs.state));
}

/// Trivial unless one of the order parameters reaches kOrderThreshold, in
/// which case the larger of the two decides between SPT and SB.
inline PhaseLabel label_ternary_from_order(double string_value, double ferro_value) {
    const double top = std::max(string_value, ferro_value);
    bool ambiguous = std::abs(top - kOrderThreshold) < kAmbiguityBand;
    std::size_t cls = ternary_class::trivial;
    if (top >= kOrderThreshold) {
        cls = string_value >= ferro_value ? ternary_class::spt : ternary_class::sb;
        if (std::abs(string_value - ferro_value) < kAmbiguityBand) ambiguous = true;
    }
    return detail::make_label(cls, 4, ambiguous);
}

inline PhaseLabel label_ternary(const HamiltonianParamsB& p, const GroundStateResult& gs) {
    if (std::abs(p.g_zxz + p.g_x + p.g_zz - 4.0) > 1e-9)
        throw ContractError("label_ternary: couplings must satisfy g_zxz + g_x + g_zz = 4");
    if (gs.state.n_qubits() != p.n_sites) throw ContractError("label_ternary: ground state does not match parameters");
    return label_ternary_from_order(string_order(gs.state), ferro_order(gs.state));
}

}  // namespace qcnn
