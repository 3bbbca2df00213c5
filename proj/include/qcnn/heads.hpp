#pragma once

// Post-processing heads on top of psi_QCNN:
//
//   plain      f_i        = <psi|P_i|psi>                        (Born probabilities of the targets)
//   attention  f_i^ch     = softmax_i( sum_k w_k f_{i,k}^ch )     (channels from measuring attention qubits)
//   nn         f_i^NN     = softmax_i( b_i + sum_k W_{i,k} f_k )  (single dense layer baseline)
//
// f_{i,k}^ch is the target readout of the state conditioned on attention
// outcome k. A branch with probability at or below kDeadBranchEpsilon carries
// no information and its channel row is the uniform distribution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qcnn/errors.hpp"
#include "qcnn/statevec.hpp"

namespace qcnn {

struct Prediction {
    std::vector<double> probs;
};

struct ChannelTable {
    std::size_t n_branches = 1;
    std::size_t n_outputs = 1;
    std::vector<double> branch_probs;     ///< p_k = N_k^2
    std::vector<double> channel_outputs;  ///< row-major [k][i]
    std::vector<bool> dead_branch_mask;

    double output(std::size_t k, std::size_t i) const { return channel_outputs[k * n_outputs + i]; }
    std::span<const double> row(std::size_t k) const {
        return std::span<const double>(channel_outputs).subspan(k * n_outputs, n_outputs);
    }
};

struct AttentionWeights {
    std::vector<double> w;
};

/// Dense layer with `dim` inputs and outputs; `w` is row-major [i][k].
struct NnHeadParams {
    std::size_t dim = 0;
    std::vector<double> w;
    std::vector<double> b;

    double weight(std::size_t i, std::size_t k) const { return w[i * dim + k]; }
};

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> x) {
    if (x.empty()) return {};
    const double top = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - top);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

inline Prediction plain_head(const Statevector& psi_qcnn, std::span<const std::size_t> target_qubits) {
    return {readout_probabilities(psi_qcnn, target_qubits)};
}

namespace detail {

inline void check_disjoint(std::span<const std::size_t> a, std::span<const std::size_t> b, const char* who) {
    for (std::size_t x : a)
        if (std::find(b.begin(), b.end(), x) != b.end())
            throw ContractError(std::string(who) + ": attention and target qubits overlap");
}

}  // namespace detail

/// Channel table by explicit projection and renormalization of each attention branch.
inline ChannelTable channel_table(const Statevector& psi_qcnn, std::span<const std::size_t> attention_qubits,
                                  std::span<const std::size_t> target_qubits) {
    detail::check_disjoint(attention_qubits, target_qubits, "channel_table");
    ChannelTable t;
    t.n_branches = std::size_t{1} << attention_qubits.size();
    t.n_outputs = std::size_t{1} << target_qubits.size();
    t.branch_probs.resize(t.n_branches);
    t.dead_branch_mask.assign(t.n_branches, false);
    t.channel_outputs.reserve(t.n_branches * t.n_outputs);

    if (attention_qubits.empty()) {
        t.branch_probs[0] = 1.0;
        const auto row = readout_probabilities(psi_qcnn, target_qubits);
        t.channel_outputs.assign(row.begin(), row.end());
        return t;
    }
    for (std::size_t k = 0; k < t.n_branches; ++k) {
        auto [branch, p] = project_onto_outcome(psi_qcnn, attention_qubits, k);
        t.branch_probs[k] = p;
        if (!(p > kDeadBranchEpsilon)) {
            t.dead_branch_mask[k] = true;
            t.channel_outputs.insert(t.channel_outputs.end(), t.n_outputs, 1.0 / static_cast<double>(t.n_outputs));
            continue;
        }
        const auto row = readout_probabilities(normalize(std::move(branch)), target_qubits);
        t.channel_outputs.insert(t.channel_outputs.end(), row.begin(), row.end());
    }
    return t;
}

/// Joint distribution q[k][i] of (attention outcome, target outcome), row-major.
inline std::vector<double> joint_distribution(std::span<const cplx> amps, std::size_t n_qubits,
                                              std::span<const std::size_t> attention_qubits,
                                              std::span<const std::size_t> target_qubits) {
    const auto apos = detail::bit_positions(attention_qubits, n_qubits);
    const auto tpos = detail::bit_positions(target_qubits, n_qubits);
    const std::size_t n_out = std::size_t{1} << target_qubits.size();
    std::vector<double> q((std::size_t{1} << attention_qubits.size()) * n_out, 0.0);
    for (std::size_t a = 0; a < amps.size(); ++a)
        q[detail::extract_bits(a, apos) * n_out + detail::extract_bits(a, tpos)] += std::norm(amps[a]);
    return q;
}

/// Channel table from a joint distribution; agrees with channel_table() up to rounding.
inline ChannelTable channel_table_from_joint(std::span<const double> joint, std::size_t n_branches,
                                             std::size_t n_outputs) {
    if (joint.size() != n_branches * n_outputs) throw ContractError("channel_table_from_joint: shape mismatch");
    ChannelTable t;
    t.n_branches = n_branches;
    t.n_outputs = n_outputs;
    t.branch_probs.assign(n_branches, 0.0);
    t.dead_branch_mask.assign(n_branches, false);
    t.channel_outputs.assign(joint.begin(), joint.end());
    if (n_branches == 1) {
        t.branch_probs[0] = 1.0;
        return t;
    }
    for (std::size_t k = 0; k < n_branches; ++k) {
        double p = 0.0;
        for (std::size_t i = 0; i < n_outputs; ++i) p += joint[k * n_outputs + i];
        t.branch_probs[k] = p;
        if (!(p > kDeadBranchEpsilon)) {
            t.dead_branch_mask[k] = true;
            for (std::size_t i = 0; i < n_outputs; ++i) t.channel_outputs[k * n_outputs + i] = 1.0 / static_cast<double>(n_outputs);
            continue;
        }
        for (std::size_t i = 0; i < n_outputs; ++i) t.channel_outputs[k * n_outputs + i] /= p;
    }
    return t;
}

inline std::vector<double> attention_scores(const ChannelTable& table, const AttentionWeights& weights) {
    if (weights.w.size() != table.n_branches)
        throw ContractError("attention_head: expected " + std::to_string(table.n_branches) + " channel weights, got " +
                            std::to_string(weights.w.size()));
    std::vector<double> score(table.n_outputs, 0.0);
    for (std::size_t k = 0; k < table.n_branches; ++k)
        for (std::size_t i = 0; i < table.n_outputs; ++i) score[i] += weights.w[k] * table.output(k, i);
    return score;
}

inline Prediction attention_head(const ChannelTable& table, const AttentionWeights& weights) {
    return {softmax(attention_scores(table, weights))};
}

inline std::vector<double> nn_logits(const Prediction& plain, const NnHeadParams& params) {
    const std::size_t d = params.dim;
    if (plain.probs.size() != d || params.w.size() != d * d || params.b.size() != d)
        throw ContractError("nn_head: parameter shapes do not match " + std::to_string(plain.probs.size()) + " inputs");
    std::vector<double> z(params.b);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) z[i] += params.weight(i, k) * plain.probs[k];
    return z;
}

inline Prediction nn_head(const Prediction& plain, const NnHeadParams& params) {
    return {softmax(nn_logits(plain, params))};
}

}  // namespace qcnn
