#pragma once

// Dense statevector engine.
//
// Bit convention (shared by every module): qubit 0 is the most significant bit
// of the amplitude index, so on n qubits qubit q lives at bit (n - 1 - q).
// Multi-qubit outcomes and local gate indices follow the same rule: the first
// listed qubit is the most significant bit.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcnn/errors.hpp"

namespace qcnn {

using cplx = std::complex<double>;

/// Squared norm below which a projected branch is treated as dead.
inline constexpr double kDeadBranchEpsilon = 1e-12;

#ifdef NDEBUG
inline constexpr bool kValidateGatesByDefault = false;
#else
inline constexpr bool kValidateGatesByDefault = true;
#endif

namespace detail {

// Plain arithmetic keeps the kernels free of the C99 NaN-recovery path that
// std::complex multiplication takes without -ffast-math.
inline cplx cmul(cplx a, cplx b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline cplx cmul_conj(cplx a, cplx b) {  // conj(a) * b
    return {a.real() * b.real() + a.imag() * b.imag(), a.real() * b.imag() - a.imag() * b.real()};
}

inline std::size_t bit_of(std::size_t n_qubits, std::size_t qubit) { return n_qubits - 1 - qubit; }

/// Insert a zero at bit position `pos` of `value`.
inline std::size_t insert_zero(std::size_t value, std::size_t pos) {
    const std::size_t low = value & ((std::size_t{1} << pos) - 1);
    return ((value >> pos) << (pos + 1)) | low;
}

}  // namespace detail

/// Row-major square matrix acting on `Dim` local basis states.
template <std::size_t Dim>
struct LocalGate {
    std::array<cplx, Dim * Dim> m{};

    cplx& operator()(std::size_t r, std::size_t c) { return m[r * Dim + c]; }
    const cplx& operator()(std::size_t r, std::size_t c) const { return m[r * Dim + c]; }

    static LocalGate identity() {
        LocalGate g;
        for (std::size_t i = 0; i < Dim; ++i) g(i, i) = 1.0;
        return g;
    }

    LocalGate adjoint() const {
        LocalGate g;
        for (std::size_t r = 0; r < Dim; ++r)
            for (std::size_t c = 0; c < Dim; ++c) g(r, c) = std::conj((*this)(c, r));
        return g;
    }

    friend LocalGate operator*(const LocalGate& a, const LocalGate& b) {
        LocalGate g;
        for (std::size_t r = 0; r < Dim; ++r)
            for (std::size_t k = 0; k < Dim; ++k) {
                const cplx ark = a(r, k);
                if (ark == cplx{}) continue;
                for (std::size_t c = 0; c < Dim; ++c) g(r, c) += detail::cmul(ark, b(k, c));
            }
        return g;
    }

    /// Largest entrywise deviation of G^dagger G from the identity.
    double unitarity_defect() const {
        const LocalGate p = adjoint() * (*this);
        double worst = 0.0;
        for (std::size_t r = 0; r < Dim; ++r)
            for (std::size_t c = 0; c < Dim; ++c)
                worst = std::max(worst, std::abs(p(r, c) - (r == c ? cplx{1.0} : cplx{})));
        return worst;
    }
};

using Gate1 = LocalGate<2>;
using Gate2 = LocalGate<4>;

namespace gates {

inline Gate1 make1(cplx a, cplx b, cplx c, cplx d) { return Gate1{{a, b, c, d}}; }

inline Gate1 identity() { return Gate1::identity(); }
inline Gate1 x() { return make1(0, 1, 1, 0); }
inline Gate1 y() { return make1(0, cplx{0, -1}, cplx{0, 1}, 0); }
inline Gate1 z() { return make1(1, 0, 0, -1); }
inline Gate1 h() {
    const double s = 1.0 / std::sqrt(2.0);
    return make1(s, s, s, -s);
}
inline Gate1 rx(double t) { return make1(std::cos(t / 2), cplx{0, -std::sin(t / 2)}, cplx{0, -std::sin(t / 2)}, std::cos(t / 2)); }
inline Gate1 ry(double t) { return make1(std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2)); }
inline Gate1 rz(double t) { return make1(std::polar(1.0, -t / 2), 0, 0, std::polar(1.0, t / 2)); }

inline Gate2 kron(const Gate1& a, const Gate1& b) {
    Gate2 g;
    for (std::size_t r1 = 0; r1 < 2; ++r1)
        for (std::size_t c1 = 0; c1 < 2; ++c1)
            for (std::size_t r2 = 0; r2 < 2; ++r2)
                for (std::size_t c2 = 0; c2 < 2; ++c2) g(2 * r1 + r2, 2 * c1 + c2) = a(r1, c1) * b(r2, c2);
    return g;
}

/// Control on the first (most significant) local qubit.
inline Gate2 controlled(const Gate1& u) {
    Gate2 g = Gate2::identity();
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) g(2 + r, 2 + c) = u(r, c);
    return g;
}

inline Gate2 cnot() { return controlled(x()); }

inline Gate2 swap() {
    Gate2 g;
    g(0, 0) = g(1, 2) = g(2, 1) = g(3, 3) = 1.0;
    return g;
}

}  // namespace gates

/// Complex amplitudes over n qubits.
class Statevector {
public:
    Statevector() = default;

    Statevector(std::size_t n_qubits, std::vector<cplx> amplitudes)
        : n_qubits_(n_qubits), amps_(std::move(amplitudes)) {
        if (n_qubits_ >= 8 * sizeof(std::size_t) - 1 || amps_.size() != (std::size_t{1} << n_qubits_))
            throw ContractError("statevector: expected 2^" + std::to_string(n_qubits_) + " amplitudes, got " +
                                std::to_string(amps_.size()));
    }

    std::size_t n_qubits() const { return n_qubits_; }
    std::size_t dim() const { return amps_.size(); }

    std::span<const cplx> amplitudes() const { return amps_; }
    std::span<cplx> amplitudes() { return amps_; }

    const cplx& operator[](std::size_t i) const { return amps_[i]; }
    cplx& operator[](std::size_t i) { return amps_[i]; }

    double norm_squared() const {
        double s = 0.0;
        for (const cplx& a : amps_) s += std::norm(a);
        return s;
    }

    friend bool operator==(const Statevector&, const Statevector&) = default;

private:
    std::size_t n_qubits_ = 0;
    std::vector<cplx> amps_;
};

// ---------------------------------------------------------------------------
// In-place kernels over raw amplitude spans. The public value-returning API
// below wraps these; the training loop calls them directly.

inline void apply_one_qubit_inplace(std::span<cplx> amps, std::size_t n_qubits, const Gate1& g, std::size_t qubit) {
    const std::size_t b = detail::bit_of(n_qubits, qubit);
    const std::size_t stride = std::size_t{1} << b;
    const std::size_t half = amps.size() >> 1;
    for (std::size_t k = 0; k < half; ++k) {
        const std::size_t i0 = detail::insert_zero(k, b);
        const std::size_t i1 = i0 | stride;
        const cplx a0 = amps[i0];
        const cplx a1 = amps[i1];
        amps[i0] = detail::cmul(g.m[0], a0) + detail::cmul(g.m[1], a1);
        amps[i1] = detail::cmul(g.m[2], a0) + detail::cmul(g.m[3], a1);
    }
}

inline void apply_two_qubit_inplace(std::span<cplx> amps, std::size_t n_qubits, const Gate2& g, std::size_t q1,
                                    std::size_t q2) {
    const std::size_t b1 = detail::bit_of(n_qubits, q1);
    const std::size_t b2 = detail::bit_of(n_qubits, q2);
    const std::size_t lo = std::min(b1, b2);
    const std::size_t hi = std::max(b1, b2);
    const std::size_t m1 = std::size_t{1} << b1;
    const std::size_t m2 = std::size_t{1} << b2;
    const std::size_t quarter = amps.size() >> 2;
    for (std::size_t k = 0; k < quarter; ++k) {
        const std::size_t base = detail::insert_zero(detail::insert_zero(k, lo), hi);
        const std::array<std::size_t, 4> idx{base, base | m2, base | m1, base | m1 | m2};
        const std::array<cplx, 4> in{amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]};
        for (std::size_t r = 0; r < 4; ++r) {
            const cplx* row = &g.m[4 * r];
            amps[idx[r]] = detail::cmul(row[0], in[0]) + detail::cmul(row[1], in[1]) + detail::cmul(row[2], in[2]) +
                           detail::cmul(row[3], in[3]);
        }
    }
}

enum class GateCheck { off, on };

inline constexpr GateCheck kDefaultGateCheck = kValidateGatesByDefault ? GateCheck::on : GateCheck::off;

inline Statevector init_basis_state(std::size_t n_qubits, std::size_t basis_index) {
    if (n_qubits >= 8 * sizeof(std::size_t) - 1) throw DomainError("init_basis_state: too many qubits");
    const std::size_t dim = std::size_t{1} << n_qubits;
    if (basis_index >= dim)
        throw DomainError("init_basis_state: index " + std::to_string(basis_index) + " out of range for " +
                          std::to_string(n_qubits) + " qubits");
    std::vector<cplx> amps(dim);
    amps[basis_index] = 1.0;
    return Statevector(n_qubits, std::move(amps));
}

inline Statevector apply_one_qubit(Statevector state, const Gate1& gate, std::size_t qubit,
                                   GateCheck check = kDefaultGateCheck) {
    if (qubit >= state.n_qubits()) throw DomainError("apply_one_qubit: qubit index out of range");
    if (check == GateCheck::on && gate.unitarity_defect() > 1e-10)
        throw ContractError("apply_one_qubit: gate is not unitary");
    apply_one_qubit_inplace(state.amplitudes(), state.n_qubits(), gate, qubit);
    return state;
}

inline Statevector apply_two_qubit(Statevector state, const Gate2& gate, std::size_t q1, std::size_t q2,
                                   GateCheck check = kDefaultGateCheck) {
    if (q1 == q2) throw DomainError("apply_two_qubit: q1 == q2");
    if (q1 >= state.n_qubits() || q2 >= state.n_qubits()) throw DomainError("apply_two_qubit: qubit index out of range");
    if (check == GateCheck::on && gate.unitarity_defect() > 1e-10)
        throw ContractError("apply_two_qubit: gate is not unitary");
    apply_two_qubit_inplace(state.amplitudes(), state.n_qubits(), gate, q1, q2);
    return state;
}

namespace detail {

inline void check_qubit_list(std::span<const std::size_t> qubits, std::size_t n_qubits, const char* who) {
    for (std::size_t i = 0; i < qubits.size(); ++i) {
        if (qubits[i] >= n_qubits) throw DomainError(std::string(who) + ": qubit index out of range");
        for (std::size_t j = 0; j < i; ++j)
            if (qubits[i] == qubits[j]) throw DomainError(std::string(who) + ": repeated qubit index");
    }
}

/// Value of the listed qubits in basis state `index`, first qubit most significant.
inline std::size_t extract_bits(std::size_t index, std::span<const std::size_t> bit_positions) {
    std::size_t out = 0;
    for (std::size_t pos : bit_positions) out = (out << 1) | ((index >> pos) & 1U);
    return out;
}

inline std::vector<std::size_t> bit_positions(std::span<const std::size_t> qubits, std::size_t n_qubits) {
    std::vector<std::size_t> pos;
    pos.reserve(qubits.size());
    for (std::size_t q : qubits) pos.push_back(bit_of(n_qubits, q));
    return pos;
}

}  // namespace detail

struct Projection {
    Statevector state;  ///< unnormalized
    double probability;
};

/// Zero every amplitude where `qubits` disagree with `outcome`; probability is the squared norm of what remains.
inline Projection project_onto_outcome(const Statevector& state, std::span<const std::size_t> qubits,
                                       std::size_t outcome) {
    detail::check_qubit_list(qubits, state.n_qubits(), "project_onto_outcome");
    if (qubits.size() >= 8 * sizeof(std::size_t) || outcome >= (std::size_t{1} << qubits.size()))
        throw DomainError("project_onto_outcome: outcome out of range");
    const auto pos = detail::bit_positions(qubits, state.n_qubits());
    std::vector<cplx> out(state.dim());
    double p = 0.0;
    for (std::size_t i = 0; i < state.dim(); ++i) {
        if (detail::extract_bits(i, pos) != outcome) continue;
        out[i] = state[i];
        p += std::norm(state[i]);
    }
    return {Statevector(state.n_qubits(), std::move(out)), p};
}

inline Statevector normalize(Statevector state) {
    const double n2 = state.norm_squared();
    if (!(n2 > kDeadBranchEpsilon))
        throw DeadBranchError("normalize: squared norm " + std::to_string(n2) + " at or below dead-branch threshold");
    const double inv = 1.0 / std::sqrt(n2);
    for (cplx& a : state.amplitudes()) a *= inv;
    return state;
}

/// Marginal distribution of the listed qubits; entry i is the probability of outcome i.
inline std::vector<double> readout_probabilities(const Statevector& state, std::span<const std::size_t> target_qubits) {
    detail::check_qubit_list(target_qubits, state.n_qubits(), "readout_probabilities");
    const auto pos = detail::bit_positions(target_qubits, state.n_qubits());
    std::vector<double> probs(std::size_t{1} << target_qubits.size(), 0.0);
    for (std::size_t i = 0; i < state.dim(); ++i) probs[detail::extract_bits(i, pos)] += std::norm(state[i]);
    return probs;
}

// ---------------------------------------------------------------------------
// Pauli strings

enum class Pauli : char { X = 'X', Y = 'Y', Z = 'Z' };

struct PauliString {
    std::vector<std::pair<std::size_t, Pauli>> ops;
    int sign = 1;

    /// Parse a term list such as {{0,'Z'},{1,'X'}}.
    static PauliString from_terms(std::initializer_list<std::pair<std::size_t, char>> terms, int sign = 1) {
        PauliString p;
        p.sign = sign;
        for (auto [q, c] : terms) {
            if (c != 'X' && c != 'Y' && c != 'Z') throw DomainError("PauliString: unknown operator");
            p.ops.emplace_back(q, static_cast<Pauli>(c));
        }
        return p;
    }
};

/// <psi|P|psi>. The imaginary residue of a Hermitian expectation is dropped.
inline double expectation_pauli_string(const Statevector& state, const PauliString& p) {
    const std::size_t n = state.n_qubits();
    std::size_t flip = 0;
    std::size_t zmask = 0;
    int n_y = 0;
    for (auto [q, op] : p.ops) {
        if (q >= n) throw DomainError("expectation_pauli_string: qubit index out of range");
        const std::size_t m = std::size_t{1} << detail::bit_of(n, q);
        if ((flip | zmask) & m) throw DomainError("expectation_pauli_string: repeated qubit index");
        if (op != Pauli::Z) flip |= m;
        if (op != Pauli::X) zmask |= m;
        if (op == Pauli::Y) ++n_y;
    }
    // Y = i X Z, so P|a> = i^{n_y} (-1)^{popcount(a & zmask)} |a ^ flip>.
    static constexpr std::array<cplx, 4> kIPow{cplx{1, 0}, cplx{0, 1}, cplx{-1, 0}, cplx{0, -1}};
    const cplx phase = kIPow[static_cast<std::size_t>(n_y % 4)];
    cplx acc{};
    for (std::size_t a = 0; a < state.dim(); ++a) {
        const double s = (std::popcount(a & zmask) & 1) ? -1.0 : 1.0;
        acc += s * detail::cmul_conj(state[a ^ flip], state[a]);
    }
    return p.sign * (phase * acc).real();
}

}  // namespace qcnn
