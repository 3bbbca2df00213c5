#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qcnn/statevec.hpp"
#include "qcnn/verify.hpp"
#include "support/oracles.hpp"

using namespace qcnn;

namespace {

constexpr double kTol = 1e-12;

void expect_state_near(const Statevector& a, const Eigen::VectorXcd& b, double tol) {
    ASSERT_EQ(static_cast<Eigen::Index>(a.dim()), b.size());
    for (std::size_t i = 0; i < a.dim(); ++i) EXPECT_LT(std::abs(a[i] - b(static_cast<Eigen::Index>(i))), tol) << i;
}

oracle::Mat gate_matrix(const Gate1& g) {
    oracle::Mat m(2, 2);
    m << g.m[0], g.m[1], g.m[2], g.m[3];
    return m;
}

// Embed a one-qubit gate on qubit q of n (qubit 0 leftmost).
oracle::Mat embed1(std::size_t n, const Gate1& g, std::size_t q) {
    oracle::Mat out = oracle::Mat::Identity(1, 1);
    for (std::size_t k = 0; k < n; ++k) out = oracle::kron(out, k == q ? gate_matrix(g) : oracle::pauli('I'));
    return out;
}

// Embed a two-qubit gate by summing over its matrix elements |ab><cd|.
oracle::Mat embed2(std::size_t n, const Gate2& g, std::size_t q1, std::size_t q2) {
    const auto dim = Eigen::Index{1} << n;
    oracle::Mat out = oracle::Mat::Zero(dim, dim);
    for (Eigen::Index col = 0; col < dim; ++col) {
        const std::size_t c1 = (static_cast<std::size_t>(col) >> (n - 1 - q1)) & 1;
        const std::size_t c2 = (static_cast<std::size_t>(col) >> (n - 1 - q2)) & 1;
        for (std::size_t r1 = 0; r1 < 2; ++r1)
            for (std::size_t r2 = 0; r2 < 2; ++r2) {
                std::size_t row = static_cast<std::size_t>(col);
                row = (row & ~(std::size_t{1} << (n - 1 - q1))) | (r1 << (n - 1 - q1));
                row = (row & ~(std::size_t{1} << (n - 1 - q2))) | (r2 << (n - 1 - q2));
                out(static_cast<Eigen::Index>(row), col) += g(2 * r1 + r2, 2 * c1 + c2);
            }
    }
    return out;
}

}  // namespace

TEST(Statevector, BasisStateAndMsbConvention) {
    const auto s = init_basis_state(3, 0b100);
    EXPECT_EQ(s.dim(), 8u);
    EXPECT_EQ(s[4], cplx(1.0));
    // Qubit 0 is the most significant bit: X on qubit 0 maps |000> to |100>.
    const auto t = apply_one_qubit(init_basis_state(3, 0), gates::x(), 0);
    EXPECT_EQ(t[4], cplx(1.0));
    EXPECT_EQ(readout_probabilities(s, std::vector<std::size_t>{0})[1], 1.0);
    EXPECT_THROW(init_basis_state(3, 8), DomainError);
    EXPECT_THROW(Statevector(2, std::vector<cplx>(3)), ContractError);
}

TEST(Statevector, HadamardExample) {
    const auto s = apply_one_qubit(init_basis_state(1, 0), gates::h(), 0);
    EXPECT_NEAR(s[0].real(), std::numbers::sqrt2 / 2, kTol);
    EXPECT_NEAR(s[1].real(), std::numbers::sqrt2 / 2, kTol);
}

TEST(Statevector, BellStateFromCnot) {
    auto s = apply_one_qubit(init_basis_state(2, 0), gates::h(), 0);
    s = apply_two_qubit(s, gates::cnot(), 0, 1);
    EXPECT_NEAR(s[0].real(), std::numbers::sqrt2 / 2, kTol);
    EXPECT_NEAR(std::abs(s[1]), 0.0, kTol);
    EXPECT_NEAR(std::abs(s[2]), 0.0, kTol);
    EXPECT_NEAR(s[3].real(), std::numbers::sqrt2 / 2, kTol);
    EXPECT_NEAR(expectation_pauli_string(s, PauliString::from_terms({{0, 'Z'}, {1, 'Z'}})), 1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(s, PauliString::from_terms({{0, 'X'}, {1, 'X'}})), 1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(s, PauliString::from_terms({{0, 'Y'}, {1, 'Y'}})), -1.0, kTol);
}

TEST(Statevector, CnotControlOrderAndSwap) {
    // Control is the first listed qubit.
    EXPECT_EQ(apply_two_qubit(init_basis_state(3, 0b010), gates::cnot(), 1, 2)[0b011], cplx(1.0));
    EXPECT_EQ(apply_two_qubit(init_basis_state(3, 0b010), gates::cnot(), 2, 1)[0b010], cplx(1.0));
    EXPECT_EQ(apply_two_qubit(init_basis_state(3, 0b100), gates::swap(), 0, 2)[0b001], cplx(1.0));
}

TEST(Statevector, RejectsBadQubits) {
    const auto s = init_basis_state(2, 0);
    EXPECT_THROW(apply_two_qubit(s, gates::cnot(), 1, 1), DomainError);
    EXPECT_THROW(apply_one_qubit(s, gates::x(), 2), DomainError);
    EXPECT_THROW(apply_two_qubit(s, gates::cnot(), 0, 2), DomainError);
    const std::vector<std::size_t> rep{0, 0};
    EXPECT_THROW(readout_probabilities(s, rep), DomainError);
    EXPECT_THROW(expectation_pauli_string(s, PauliString::from_terms({{0, 'Z'}, {0, 'X'}})), DomainError);
}

TEST(Statevector, NonUnitaryGateRejectedWhenChecked) {
    const auto bad = gates::make1(1, 1, 0, 1);
    EXPECT_THROW(apply_one_qubit(init_basis_state(1, 0), bad, 0, GateCheck::on), ContractError);
    EXPECT_NO_THROW(apply_one_qubit(init_basis_state(1, 0), bad, 0, GateCheck::off));
    Gate2 bad2 = gates::cnot();
    bad2(0, 0) = 2.0;
    EXPECT_THROW(apply_two_qubit(init_basis_state(2, 0), bad2, 0, 1, GateCheck::on), ContractError);
}

TEST(Statevector, ProjectionAndNormalize) {
    auto s = apply_one_qubit(init_basis_state(2, 0), gates::ry(2 * std::acos(std::sqrt(0.25))), 0);
    const std::vector<std::size_t> q0{0};
    const auto p1 = project_onto_outcome(s, q0, 1);
    EXPECT_NEAR(p1.probability, 0.75, kTol);
    const auto n1 = normalize(p1.state);
    EXPECT_NEAR(std::abs(n1[0b10]), 1.0, kTol);
    EXPECT_THROW(project_onto_outcome(s, q0, 2), DomainError);
    const auto dead = project_onto_outcome(init_basis_state(2, 0), q0, 1);
    EXPECT_EQ(dead.probability, 0.0);
    EXPECT_THROW(normalize(dead.state), DeadBranchError);
}

TEST(Statevector, RotationExamples) {
    // RY(pi) |0> = |1>, RX(pi)|0> = -i|1>, RZ phases.
    EXPECT_NEAR(apply_one_qubit(init_basis_state(1, 0), gates::ry(std::numbers::pi), 0)[1].real(), 1.0, kTol);
    EXPECT_NEAR(apply_one_qubit(init_basis_state(1, 0), gates::rx(std::numbers::pi), 0)[1].imag(), -1.0, kTol);
    const auto z = apply_one_qubit(init_basis_state(1, 1), gates::rz(std::numbers::pi / 2), 0);
    EXPECT_NEAR(std::arg(z[1]), std::numbers::pi / 4, kTol);
}

TEST(Statevector, PauliExpectationExamples) {
    const auto zero = init_basis_state(3, 0b010);
    EXPECT_NEAR(expectation_pauli_string(zero, PauliString::from_terms({{1, 'Z'}})), -1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(zero, PauliString::from_terms({{0, 'Z'}, {1, 'Z'}}, -1)), 1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(zero, PauliString::from_terms({{0, 'X'}})), 0.0, kTol);
    EXPECT_THROW(PauliString::from_terms({{0, 'Q'}}), DomainError);

    // Three-site cluster state: H on all, CZ on neighbours. Stabilizer Z X Z = +1.
    Statevector c = init_basis_state(3, 0);
    for (std::size_t q = 0; q < 3; ++q) c = apply_one_qubit(c, gates::h(), q);
    const auto cz = gates::controlled(gates::z());
    c = apply_two_qubit(c, cz, 0, 1);
    c = apply_two_qubit(c, cz, 1, 2);
    EXPECT_NEAR(expectation_pauli_string(c, PauliString::from_terms({{0, 'Z'}, {1, 'X'}, {2, 'Z'}})), 1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(c, PauliString::from_terms({{0, 'X'}, {1, 'Z'}})), 1.0, kTol);
    EXPECT_NEAR(expectation_pauli_string(c, PauliString::from_terms({{1, 'X'}})), 0.0, kTol);
}

TEST(Statevector, PauliExpectationMatchesDenseOperator) {
    std::mt19937_64 rng(3);
    const auto s = random_state(4, rng);
    const auto v = oracle::to_vec(s);
    const char ops[] = {'X', 'Y', 'Z'};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::pair<std::size_t, char>> f;
        PauliString p;
        for (std::size_t q = 0; q < 4; ++q) {
            if (rng() % 3 == 0) continue;
            const char c = ops[rng() % 3];
            f.emplace_back(q, c);
            p.ops.emplace_back(q, static_cast<Pauli>(c));
        }
        const double ref = (v.adjoint() * oracle::product_operator(4, f) * v)(0, 0).real();
        EXPECT_NEAR(expectation_pauli_string(s, p), ref, 1e-12);
    }
}

TEST(Statevector, KernelsMatchDenseEmbedding) {
    std::mt19937_64 rng(4);
    const std::size_t n = 4;
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_state(n, rng);
        std::uniform_real_distribution<double> ang(-3, 3);
        const auto g1 = gates::rz(ang(rng)) * gates::ry(ang(rng)) * gates::rx(ang(rng));
        const std::size_t q = rng() % n;
        expect_state_near(apply_one_qubit(s, g1, q), embed1(n, g1, q) * oracle::to_vec(s), 1e-12);

        const auto g2 = gates::controlled(g1) * gates::kron(gates::rx(ang(rng)), gates::ry(ang(rng)));
        const std::size_t a = rng() % n;
        std::size_t b = rng() % n;
        if (b == a) b = (a + 1) % n;
        expect_state_near(apply_two_qubit(s, g2, a, b), embed2(n, g2, a, b) * oracle::to_vec(s), 1e-12);
    }
}

TEST(Statevector, ReadoutMatchesBruteForce) {
    std::mt19937_64 rng(5);
    const auto s = random_state(4, rng);
    const std::vector<std::size_t> targets{3, 1};
    const auto probs = readout_probabilities(s, targets);
    ASSERT_EQ(probs.size(), 4u);
    std::vector<double> ref(4, 0.0);
    for (std::size_t i = 0; i < 16; ++i) {
        const std::size_t b3 = i & 1, b1 = (i >> 2) & 1;
        ref[2 * b3 + b1] += std::norm(s[i]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_NEAR(probs[k], ref[k], 1e-15);
        total += probs[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Statevector, UnitarityPreservesNorm) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_state(6, rng);
        std::uniform_real_distribution<double> ang(-6, 6);
        for (int k = 0; k < 10; ++k) {
            s = apply_one_qubit(s, gates::rx(ang(rng)) * gates::rz(ang(rng)), rng() % 6);
            const std::size_t a = rng() % 6, b = (a + 1 + rng() % 5) % 6;
            s = apply_two_qubit(s, gates::controlled(gates::ry(ang(rng))), a, b);
        }
        EXPECT_NEAR(s.norm_squared(), 1.0, 1e-12);
    }
}

TEST(Statevector, ProjectionCompleteness) {
    std::mt19937_64 rng(7);
    const auto s = random_state(5, rng);
    const std::vector<std::size_t> qs{4, 0, 2};
    double total = 0.0;
    Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(32);
    for (std::size_t o = 0; o < 8; ++o) {
        const auto p = project_onto_outcome(s, qs, o);
        total += p.probability;
        sum += oracle::to_vec(p.state);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    expect_state_near(s, sum, 1e-15);
}

TEST(Statevector, GateCompositionMatchesSequentialApplication) {
    std::mt19937_64 rng(8);
    const auto s = random_state(3, rng);
    const auto a = gates::rx(0.3), b = gates::ry(-1.1);
    const auto seq = apply_one_qubit(apply_one_qubit(s, a, 1), b, 1);
    const auto composed = apply_one_qubit(s, b * a, 1);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_LT(std::abs(seq[i] - composed[i]), 1e-14);
    // Adjoint undoes the gate.
    const auto back = apply_one_qubit(apply_one_qubit(s, a, 2), a.adjoint(), 2);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_LT(std::abs(back[i] - s[i]), 1e-14);
}
