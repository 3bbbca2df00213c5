#pragma once

// Layered QCNN circuit: convolution bricks and controlled-rotation pooling.
//
// Every trainable gate is an elementary rotation exp(-i theta H / 2) whose
// generator satisfies H^2 = Pi for a projector Pi (Pi = I for Pauli products,
// Pi = |1><1| (x) I for controlled rotations). Rotations are grouped into blocks
// acting on one or two qubits; a block is compiled into a single local
// unitary together with the derivative of that unitary for each of its
// parameters, which makes both the forward pass and the adjoint gradient cost
// a handful of statevector sweeps per block.
//
// Pooling never removes qubits from the state. A discarded control stays in
// the register and can later be measured by the attention head.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcnn/errors.hpp"
#include "qcnn/statevec.hpp"

namespace qcnn {

enum class Axis { X, Y, Z, XX, YY, ZZ };

struct Rotation {
    Axis axis = Axis::Z;
    std::size_t local_qubit = 0;  ///< for single-qubit axes inside a two-qubit block
    bool controlled = false;      ///< control on local qubit 0, rotation on local qubit 1
    std::size_t param = 0;        ///< index into the circuit parameter vector
};

struct Block {
    std::vector<std::size_t> qubits;  ///< one or two qubits; qubits[0] is the local MSB
    std::vector<Rotation> rotations;  ///< in time order
};

enum class LayerKind { conv, pool };

struct Layer {
    LayerKind kind = LayerKind::conv;
    std::vector<Block> blocks;
    std::vector<std::size_t> discarded;  ///< pooling controls retired by this layer
};

/// 15-parameter two-qubit unitary: ZYZ on each qubit, XX/YY/ZZ core, ZYZ on each qubit.
/// Identity when all angles are zero.
inline Block conv_brick(std::size_t q1, std::size_t q2, std::size_t first_param) {
    Block b{{q1, q2}, {}};
    std::size_t p = first_param;
    auto zyz = [&](std::size_t local) {
        b.rotations.push_back({Axis::Z, local, false, p++});
        b.rotations.push_back({Axis::Y, local, false, p++});
        b.rotations.push_back({Axis::Z, local, false, p++});
    };
    zyz(0);
    zyz(1);
    b.rotations.push_back({Axis::XX, 0, false, p++});
    b.rotations.push_back({Axis::YY, 0, false, p++});
    b.rotations.push_back({Axis::ZZ, 0, false, p++});
    zyz(0);
    zyz(1);
    return b;
}

inline constexpr std::size_t kConvBrickParams = 15;
inline constexpr std::size_t kPoolUnitParams = 3;

/// Controlled-V with V = RZ RY RZ on `target`, active when `control` is |1>.
inline Block pool_unit(std::size_t control, std::size_t target, std::size_t first_param) {
    Block b{{control, target}, {}};
    b.rotations.push_back({Axis::Z, 1, true, first_param});
    b.rotations.push_back({Axis::Y, 1, true, first_param + 1});
    b.rotations.push_back({Axis::Z, 1, true, first_param + 2});
    return b;
}

inline Block single_rotation(std::size_t qubit, Axis axis, std::size_t param) {
    if (axis != Axis::X && axis != Axis::Y && axis != Axis::Z)
        throw DomainError("single_rotation: axis must be X, Y or Z");
    return Block{{qubit}, {{axis, 0, false, param}}};
}

class QcnnArchitecture {
public:
    QcnnArchitecture(std::size_t n_qubits, std::vector<Layer> layers, std::vector<std::size_t> target_qubits,
                     std::vector<std::size_t> attention_candidates, std::size_t n_attention_max)
        : n_qubits_(n_qubits),
          layers_(std::move(layers)),
          targets_(std::move(target_qubits)),
          candidates_(std::move(attention_candidates)),
          n_attention_max_(n_attention_max) {
        validate();
    }

    std::size_t n_qubits() const { return n_qubits_; }
    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<std::size_t>& target_qubits() const { return targets_; }
    const std::vector<std::size_t>& attention_candidates() const { return candidates_; }
    std::size_t n_attention_max() const { return n_attention_max_; }
    std::size_t total_params() const { return total_params_; }

    /// First `n_aq` attention candidates.
    std::vector<std::size_t> attention_qubits(std::size_t n_aq) const {
        if (n_aq > n_attention_max_)
            throw ContractError("attention_qubits: N_aq " + std::to_string(n_aq) + " exceeds architecture maximum " +
                                std::to_string(n_attention_max_));
        return {candidates_.begin(), candidates_.begin() + static_cast<std::ptrdiff_t>(n_aq)};
    }

private:
    void validate() {
        if (n_qubits_ == 0 || n_qubits_ > 30) throw DomainError("architecture: unsupported qubit count");
        std::vector<int> discarded(n_qubits_, 0);
        std::vector<int> seen_param;
        for (const Layer& layer : layers_) {
            for (const Block& b : layer.blocks) {
                if (b.qubits.empty() || b.qubits.size() > 2) throw ContractError("architecture: block arity must be 1 or 2");
                for (std::size_t q : b.qubits) {
                    if (q >= n_qubits_) throw ContractError("architecture: qubit index out of range");
                    if (discarded[q]) throw ContractError("architecture: gate acts on an already discarded qubit");
                }
                if (b.qubits.size() == 2 && b.qubits[0] == b.qubits[1])
                    throw ContractError("architecture: block acts twice on one qubit");
                for (const Rotation& r : b.rotations) {
                    const bool pair_axis = r.axis == Axis::XX || r.axis == Axis::YY || r.axis == Axis::ZZ;
                    if ((pair_axis || r.controlled) && b.qubits.size() != 2)
                        throw ContractError("architecture: two-qubit rotation in a one-qubit block");
                    if (r.controlled && pair_axis) throw ContractError("architecture: controlled rotations are single-axis");
                    if (r.local_qubit >= b.qubits.size()) throw ContractError("architecture: local qubit out of range");
                    if (r.param >= seen_param.size()) seen_param.resize(r.param + 1, 0);
                    if (seen_param[r.param]++) throw ContractError("architecture: parameter slices overlap");
                }
            }
            for (std::size_t q : layer.discarded) {
                if (q >= n_qubits_) throw ContractError("architecture: discarded qubit out of range");
                if (discarded[q]++) throw ContractError("architecture: qubit discarded twice");
            }
        }
        if (std::find(seen_param.begin(), seen_param.end(), 0) != seen_param.end())
            throw ContractError("architecture: parameter slices do not tile the parameter vector");
        total_params_ = seen_param.size();

        detail::check_qubit_list(targets_, n_qubits_, "architecture targets");
        detail::check_qubit_list(candidates_, n_qubits_, "architecture attention candidates");
        for (std::size_t t : targets_)
            if (discarded[t]) throw ContractError("architecture: target qubit is discarded");
        for (std::size_t c : candidates_) {
            if (!discarded[c]) throw ContractError("architecture: attention candidate is not a discarded qubit");
            if (std::find(targets_.begin(), targets_.end(), c) != targets_.end())
                throw ContractError("architecture: attention candidate is a target");
        }
        if (targets_.empty()) throw ContractError("architecture: no target qubits");
        if (n_attention_max_ > candidates_.size())
            throw DomainError("architecture: n_attention_max exceeds available attention candidates");
    }

    std::size_t n_qubits_;
    std::vector<Layer> layers_;
    std::vector<std::size_t> targets_;
    std::vector<std::size_t> candidates_;
    std::size_t n_attention_max_;
    std::size_t total_params_ = 0;
};

/// Nine-qubit QCNN: brickwork convolution, pool 9 -> {1,4,7}, convolution on
/// the survivors, pool to one target {4} or two targets {1,7}.
inline QcnnArchitecture build_architecture(std::size_t n_qubits, std::size_t n_target, std::size_t n_attention_max) {
    if (n_qubits != 9) throw DomainError("build_architecture: only 9-qubit architectures are supported");
    if (n_target != 1 && n_target != 2) throw DomainError("build_architecture: n_target must be 1 or 2");

    std::size_t p = 0;
    std::vector<Layer> layers;

    Layer conv1{LayerKind::conv, {}, {}};
    for (auto [a, b] : std::array<std::pair<std::size_t, std::size_t>, 8>{
             {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {1, 2}, {3, 4}, {5, 6}, {7, 8}}}) {
        conv1.blocks.push_back(conv_brick(a, b, p));
        p += kConvBrickParams;
    }
    layers.push_back(std::move(conv1));

    Layer pool1{LayerKind::pool, {}, {0, 2, 3, 5, 6, 8}};
    for (auto [c, t] : std::array<std::pair<std::size_t, std::size_t>, 6>{{{0, 1}, {2, 1}, {3, 4}, {5, 4}, {6, 7}, {8, 7}}}) {
        pool1.blocks.push_back(pool_unit(c, t, p));
        p += kPoolUnitParams;
    }
    layers.push_back(std::move(pool1));

    Layer conv2{LayerKind::conv, {}, {}};
    conv2.blocks.push_back(conv_brick(1, 4, p));
    p += kConvBrickParams;
    conv2.blocks.push_back(conv_brick(4, 7, p));
    p += kConvBrickParams;
    layers.push_back(std::move(conv2));

    Layer pool2{LayerKind::pool, {}, {}};
    std::vector<std::size_t> targets;
    if (n_target == 1) {
        pool2.discarded = {1, 7};
        pool2.blocks.push_back(pool_unit(1, 4, p));
        pool2.blocks.push_back(pool_unit(7, 4, p + kPoolUnitParams));
        targets = {4};
    } else {
        pool2.discarded = {4};
        pool2.blocks.push_back(pool_unit(4, 1, p));
        pool2.blocks.push_back(pool_unit(4, 7, p + kPoolUnitParams));
        targets = {1, 7};
    }
    layers.push_back(pool2);

    std::vector<std::size_t> candidates = pool2.discarded;
    for (std::size_t q : layers[1].discarded) candidates.push_back(q);
    if (n_attention_max > candidates.size())
        throw DomainError("build_architecture: n_attention_max " + std::to_string(n_attention_max) + " exceeds " +
                          std::to_string(candidates.size()) + " attention candidates");
    return QcnnArchitecture(n_qubits, std::move(layers), std::move(targets), std::move(candidates), n_attention_max);
}

inline std::size_t parameter_count(const QcnnArchitecture& arch) { return arch.total_params(); }

/// Independent uniform angles on [0, 2 pi), drawn from the top 53 bits of each engine output.
inline std::vector<double> random_angles(std::size_t count, std::mt19937_64& rng) {
    std::vector<double> out(count);
    for (double& v : out) v = 2.0 * std::numbers::pi * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return out;
}

namespace detail {

inline Gate1 pauli(Axis a) {
    switch (a) {
        case Axis::X: return gates::x();
        case Axis::Y: return gates::y();
        case Axis::Z: return gates::z();
        default: throw DomainError("pauli: not a single-qubit axis");
    }
}

/// Generator and its projector embedded in a Gate2 (top-left 2x2 for one-qubit blocks).
inline std::pair<Gate2, Gate2> generator(const Rotation& r, std::size_t arity) {
    Gate2 h;
    Gate2 proj;
    if (arity == 1) {
        const Gate1 p = pauli(r.axis);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) h(i, j) = p(i, j);
        proj(0, 0) = proj(1, 1) = 1.0;
        return {h, proj};
    }
    switch (r.axis) {
        case Axis::XX: return {gates::kron(gates::x(), gates::x()), Gate2::identity()};
        case Axis::YY: return {gates::kron(gates::y(), gates::y()), Gate2::identity()};
        case Axis::ZZ: return {gates::kron(gates::z(), gates::z()), Gate2::identity()};
        default: break;
    }
    if (r.controlled) {
        const Gate1 one = gates::make1(0, 0, 0, 1);
        return {gates::kron(one, pauli(r.axis)), gates::kron(one, gates::identity())};
    }
    const Gate1 p = pauli(r.axis);
    return r.local_qubit == 0 ? std::pair{gates::kron(p, gates::identity()), Gate2::identity()}
                              : std::pair{gates::kron(gates::identity(), p), Gate2::identity()};
}

inline Gate2 identity_of(std::size_t arity) {
    Gate2 g;
    for (std::size_t i = 0; i < (std::size_t{1} << arity); ++i) g(i, i) = 1.0;
    return g;
}

inline Gate1 top_left(const Gate2& g) { return gates::make1(g(0, 0), g(0, 1), g(1, 0), g(1, 1)); }

/// M(d, c) = sum_rest psi[d, rest] * conj(lambda[c, rest]) over the block's local index.
inline Gate2 reduced_outer(std::span<const cplx> psi, std::span<const cplx> lambda, std::size_t n_qubits,
                           const std::vector<std::size_t>& qubits) {
    Gate2 m;
    if (qubits.size() == 1) {
        const std::size_t b = bit_of(n_qubits, qubits[0]);
        const std::size_t stride = std::size_t{1} << b;
        for (std::size_t k = 0; k < psi.size() / 2; ++k) {
            const std::size_t i0 = insert_zero(k, b);
            const std::array<std::size_t, 2> idx{i0, i0 | stride};
            for (std::size_t d = 0; d < 2; ++d)
                for (std::size_t c = 0; c < 2; ++c) m(d, c) += cmul_conj(lambda[idx[c]], psi[idx[d]]);
        }
        return m;
    }
    const std::size_t b1 = bit_of(n_qubits, qubits[0]);
    const std::size_t b2 = bit_of(n_qubits, qubits[1]);
    const std::size_t lo = std::min(b1, b2);
    const std::size_t hi = std::max(b1, b2);
    const std::size_t m1 = std::size_t{1} << b1;
    const std::size_t m2 = std::size_t{1} << b2;
    for (std::size_t k = 0; k < psi.size() / 4; ++k) {
        const std::size_t base = insert_zero(insert_zero(k, lo), hi);
        const std::array<std::size_t, 4> idx{base, base | m2, base | m1, base | m1 | m2};
        const std::array<cplx, 4> p{psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]};
        const std::array<cplx, 4> l{lambda[idx[0]], lambda[idx[1]], lambda[idx[2]], lambda[idx[3]]};
        for (std::size_t d = 0; d < 4; ++d)
            for (std::size_t c = 0; c < 4; ++c) m(d, c) += cmul_conj(l[c], p[d]);
    }
    return m;
}

}  // namespace detail

/// The circuit evaluated at a fixed parameter vector: one local unitary per
/// block plus its partial derivatives.
class CompiledCircuit {
public:
    CompiledCircuit(const QcnnArchitecture& arch, std::span<const double> params) : n_qubits_(arch.n_qubits()) {
        if (params.size() != arch.total_params())
            throw ContractError("circuit: expected " + std::to_string(arch.total_params()) + " parameters, got " +
                                std::to_string(params.size()));
        for (const Layer& layer : arch.layers())
            for (const Block& block : layer.blocks) blocks_.push_back(compile(block, params));
    }

    std::size_t n_qubits() const { return n_qubits_; }
    std::size_t n_blocks() const { return blocks_.size(); }

    void forward(std::span<cplx> amps) const {
        for (const Compiled& b : blocks_) apply(b, b.u, amps);
    }

    /// Forward pass recording the state entering every block.
    void forward_with_tape(std::span<const cplx> input, std::vector<std::vector<cplx>>& tape,
                           std::vector<cplx>& output) const {
        tape.resize(blocks_.size());
        output.assign(input.begin(), input.end());
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            tape[i] = output;
            apply(blocks_[i], blocks_[i].u, output);
        }
    }

    /// Accumulate dL/dtheta into `grad` given the tape and the cotangent
    /// lambda = dL/d(conj psi_out). `lambda` is consumed.
    void backward(const std::vector<std::vector<cplx>>& tape, std::vector<cplx> lambda, std::span<double> grad) const {
        for (std::size_t i = blocks_.size(); i-- > 0;) {
            const Compiled& b = blocks_[i];
            const Gate2 m = detail::reduced_outer(tape[i], lambda, n_qubits_, b.qubits);
            const std::size_t dim = std::size_t{1} << b.qubits.size();
            for (std::size_t j = 0; j < b.params.size(); ++j) {
                cplx tr{};
                for (std::size_t r = 0; r < dim; ++r)
                    for (std::size_t c = 0; c < dim; ++c) tr += detail::cmul(b.du[j](r, c), m(c, r));
                grad[b.params[j]] += 2.0 * tr.real();
            }
            if (i > 0) apply(b, b.u_dag, lambda);
        }
    }

private:
    struct Compiled {
        std::vector<std::size_t> qubits;
        Gate2 u;
        Gate2 u_dag;
        std::vector<std::size_t> params;
        std::vector<Gate2> du;  ///< dU/dtheta for each entry of params
    };

    static Compiled compile(const Block& block, std::span<const double> params) {
        const std::size_t arity = block.qubits.size();
        const Gate2 id = detail::identity_of(arity);
        const std::size_t n_rot = block.rotations.size();

        std::vector<Gate2> rot(n_rot);
        std::vector<Gate2> drot(n_rot);
        for (std::size_t j = 0; j < n_rot; ++j) {
            const auto [h, proj] = detail::generator(block.rotations[j], arity);
            const double t = params[block.rotations[j].param];
            const double c = std::cos(t / 2);
            const double s = std::sin(t / 2);
            for (std::size_t k = 0; k < 16; ++k) {
                // exp(-i t H / 2) = (I - Pi) + cos(t/2) Pi - i sin(t/2) H
                rot[j].m[k] = id.m[k] - proj.m[k] + c * proj.m[k] + cplx{0, -s} * h.m[k];
                drot[j].m[k] = -0.5 * s * proj.m[k] + cplx{0, -0.5 * c} * h.m[k];
            }
        }
        // prefix[j] = R_{j-1} ... R_0, suffix[j] = R_{n-1} ... R_{j+1}
        std::vector<Gate2> prefix(n_rot + 1, id);
        for (std::size_t j = 0; j < n_rot; ++j) prefix[j + 1] = rot[j] * prefix[j];
        std::vector<Gate2> suffix(n_rot + 1, id);
        for (std::size_t j = n_rot; j-- > 0;) suffix[j] = (j + 1 < n_rot) ? suffix[j + 1] * rot[j + 1] : id;

        Compiled out;
        out.qubits = block.qubits;
        out.u = prefix[n_rot];
        out.u_dag = out.u.adjoint();
        for (std::size_t j = 0; j < n_rot; ++j) {
            out.params.push_back(block.rotations[j].param);
            out.du.push_back(suffix[j] * drot[j] * prefix[j]);
        }
        return out;
    }

    void apply(const Compiled& b, const Gate2& g, std::span<cplx> amps) const {
        if (b.qubits.size() == 1)
            apply_one_qubit_inplace(amps, n_qubits_, detail::top_left(g), b.qubits[0]);
        else
            apply_two_qubit_inplace(amps, n_qubits_, g, b.qubits[0], b.qubits[1]);
    }

    std::size_t n_qubits_;
    std::vector<Compiled> blocks_;
};

/// psi_QCNN: every layer applied in order; pooling controls remain in the register.
inline Statevector forward(const QcnnArchitecture& arch, std::span<const double> params, Statevector input) {
    if (input.n_qubits() != arch.n_qubits())
        throw ContractError("forward: input has " + std::to_string(input.n_qubits()) + " qubits, architecture " +
                            std::to_string(arch.n_qubits()));
    const CompiledCircuit circuit(arch, params);
    circuit.forward(input.amplitudes());
    return input;
}

}  // namespace qcnn
