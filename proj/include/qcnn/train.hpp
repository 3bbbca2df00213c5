#pragma once

// Training: log-loss, exact gradients, Adam, and the full-batch loop.
//
// Every head depends on psi_QCNN only through the joint distribution q[k][i]
// of (attention outcome k, target outcome i). The gradient therefore flows
//
//   loss -> head (softmax / channel normalization) -> dL/dq
//        -> lambda_a = dL/dq[k(a)][i(a)] * psi_a  (cotangent w.r.t. conj psi)
//        -> adjoint sweep through the compiled circuit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qcnn/circuit.hpp"
#include "qcnn/errors.hpp"
#include "qcnn/heads.hpp"
#include "qcnn/statevec.hpp"

namespace qcnn {

enum class HeadKind { plain, attention, nn };

inline std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::plain: return "plain";
        case HeadKind::attention: return "attention";
        case HeadKind::nn: return "nn";
    }
    return "?";
}

inline HeadKind head_kind_from_string(const std::string& s) {
    if (s == "plain") return HeadKind::plain;
    if (s == "attention") return HeadKind::attention;
    if (s == "nn") return HeadKind::nn;
    throw ContractError("unknown head kind '" + s + "' (expected plain, attention or nn)");
}

/// Trainable parameters appended after the circuit angles.
inline std::size_t head_param_count(HeadKind head, std::size_t n_aq, std::size_t n_target) {
    const std::size_t out = std::size_t{1} << n_target;
    switch (head) {
        case HeadKind::plain: return 0;
        case HeadKind::attention: return std::size_t{1} << n_aq;
        case HeadKind::nn: return out * out + out;
    }
    return 0;
}

struct ModelSpec {
    std::shared_ptr<const QcnnArchitecture> arch;
    HeadKind head = HeadKind::plain;
    std::size_t n_aq = 0;
    std::vector<double> params;  ///< circuit angles, then head parameters

    std::size_t circuit_param_count() const { return arch->total_params(); }
    std::size_t n_outputs() const { return std::size_t{1} << arch->target_qubits().size(); }
    std::size_t head_param_count() const { return qcnn::head_param_count(head, n_aq, arch->target_qubits().size()); }
    std::vector<std::size_t> attention_qubits() const {
        return head == HeadKind::attention ? arch->attention_qubits(n_aq) : std::vector<std::size_t>{};
    }
    std::span<const double> circuit_params() const {
        return std::span<const double>(params).first(circuit_param_count());
    }
    std::span<const double> head_params() const {
        return std::span<const double>(params).subspan(circuit_param_count());
    }

    void validate() const {
        if (!arch) throw ContractError("model: missing architecture");
        if (head != HeadKind::attention && n_aq != 0) throw ContractError("model: N_aq is only meaningful for the attention head");
        if (params.size() != circuit_param_count() + head_param_count())
            throw ContractError("model: expected " + std::to_string(circuit_param_count() + head_param_count()) +
                                " parameters, got " + std::to_string(params.size()));
    }
};

/// Circuit angles uniform on [0, 2 pi); attention weights 1; dense-layer
/// weights N(0, 0.1^2) and zero biases. One engine seeded with `seed` drives everything.
inline ModelSpec make_model(std::shared_ptr<const QcnnArchitecture> arch, HeadKind head, std::size_t n_aq,
                            std::uint64_t seed) {
    ModelSpec m{std::move(arch), head, n_aq, {}};
    if (head == HeadKind::attention) (void)m.arch->attention_qubits(n_aq);
    std::mt19937_64 rng(seed);
    m.params = random_angles(m.circuit_param_count(), rng);
    switch (head) {
        case HeadKind::plain: break;
        case HeadKind::attention: m.params.insert(m.params.end(), m.head_param_count(), 1.0); break;
        case HeadKind::nn: {
            const std::size_t d = m.n_outputs();
            // Box-Muller on 53-bit uniforms; avoids std::normal_distribution's
            // implementation-defined sequence.
            auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
            for (std::size_t i = 0; i < d * d; ++i) {
                const double u1 = uniform();
                const double u2 = uniform();
                m.params.push_back(0.1 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2));
            }
            m.params.insert(m.params.end(), d, 0.0);
            break;
        }
    }
    m.validate();
    return m;
}

struct LabeledExample {
    std::shared_ptr<const Statevector> state;
    std::size_t label = 0;  ///< index of the 1 in the one-hot vector
};

inline constexpr double kDefaultClampFloor = 1e-12;

/// -log(clamp(pred[label], floor, 1)).
inline double log_loss(const Prediction& pred, std::size_t label, double clamp_floor = kDefaultClampFloor) {
    if (label >= pred.probs.size()) throw ContractError("log_loss: label outside prediction range");
    return -std::log(std::clamp(pred.probs[label], clamp_floor, 1.0));
}

inline double log_loss(const Prediction& pred, std::span<const int> one_hot, double clamp_floor = kDefaultClampFloor) {
    if (one_hot.size() != pred.probs.size()) throw ContractError("log_loss: one-hot length mismatch");
    const auto it = std::find(one_hot.begin(), one_hot.end(), 1);
    if (it == one_hot.end() || std::count(one_hot.begin(), one_hot.end(), 1) != 1)
        throw ContractError("log_loss: label is not one-hot");
    return log_loss(pred, static_cast<std::size_t>(it - one_hot.begin()), clamp_floor);
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// A model with its circuit compiled at the current parameters.
class ModelEvaluator {
public:
    explicit ModelEvaluator(const ModelSpec& model, double clamp_floor = kDefaultClampFloor)
        : model_(model),
          circuit_(*model.arch, model.circuit_params()),
          attention_(model.attention_qubits()),
          targets_(model.arch->target_qubits()),
          n_branches_(std::size_t{1} << attention_.size()),
          n_outputs_(model.n_outputs()),
          floor_(clamp_floor) {
        model.validate();
    }

    Prediction predict(const Statevector& input) const {
        check_input(input);
        std::vector<cplx> amps(input.amplitudes().begin(), input.amplitudes().end());
        circuit_.forward(amps);
        const auto q = joint_distribution(amps, circuit_.n_qubits(), attention_, targets_);
        std::vector<double> dq;
        return head(q, 0, false, dq, {});
    }

    double loss(const LabeledExample& ex) const { return log_loss(predict(*ex.state), ex.label, floor_); }

    /// Adds this example's dL/dparams into `grad` and returns its loss and prediction.
    std::pair<double, Prediction> accumulate(const LabeledExample& ex, std::span<double> grad) {
        check_input(*ex.state);
        circuit_.forward_with_tape(ex.state->amplitudes(), tape_, out_);
        const auto q = joint_distribution(out_, circuit_.n_qubits(), attention_, targets_);
        std::vector<double> dq;
        Prediction pred = head(q, ex.label, true, dq, grad.subspan(model_.circuit_param_count()));

        const std::size_t n = circuit_.n_qubits();
        const auto apos = detail::bit_positions(attention_, n);
        const auto tpos = detail::bit_positions(targets_, n);
        std::vector<cplx> lambda(out_.size());
        for (std::size_t a = 0; a < out_.size(); ++a)
            lambda[a] = dq[detail::extract_bits(a, apos) * n_outputs_ + detail::extract_bits(a, tpos)] * out_[a];
        circuit_.backward(tape_, std::move(lambda), grad.first(model_.circuit_param_count()));
        return {log_loss(pred, ex.label, floor_), std::move(pred)};
    }

private:
    void check_input(const Statevector& s) const {
        if (s.n_qubits() != circuit_.n_qubits())
            throw ContractError("model: input has " + std::to_string(s.n_qubits()) + " qubits, circuit " +
                                std::to_string(circuit_.n_qubits()));
    }

    // Head forward pass; with want_grad, fills dq = dL/dq and adds head-parameter gradients.
    Prediction head(const std::vector<double>& q, std::size_t label, bool want_grad, std::vector<double>& dq,
                    std::span<double> head_grad) const {
        const auto hp = model_.head_params();
        dq.assign(q.size(), 0.0);
        switch (model_.head) {
            case HeadKind::plain: {
                Prediction pred{q};
                const double p = q[label];
                if (want_grad && p >= floor_ && p <= 1.0) dq[label] = -1.0 / p;
                return pred;
            }
            case HeadKind::attention: {
                const ChannelTable table = channel_table_from_joint(q, n_branches_, n_outputs_);
                AttentionWeights w{{hp.begin(), hp.end()}};
                Prediction pred = attention_head(table, w);
                if (!want_grad) return pred;
                const auto ds = softmax_loss_grad(pred, label);
                std::vector<double> df(q.size());
                for (std::size_t k = 0; k < n_branches_; ++k)
                    for (std::size_t i = 0; i < n_outputs_; ++i) {
                        head_grad[k] += ds[i] * table.output(k, i);
                        df[k * n_outputs_ + i] = w.w[k] * ds[i];
                    }
                if (n_branches_ == 1) {
                    dq = df;
                    return pred;
                }
                for (std::size_t k = 0; k < n_branches_; ++k) {
                    if (table.dead_branch_mask[k]) continue;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < n_outputs_; ++i) dot += df[k * n_outputs_ + i] * table.output(k, i);
                    for (std::size_t j = 0; j < n_outputs_; ++j)
                        dq[k * n_outputs_ + j] = (df[k * n_outputs_ + j] - dot) / table.branch_probs[k];
                }
                return pred;
            }
            case HeadKind::nn: {
                const std::size_t d = n_outputs_;
                NnHeadParams nn{d, {hp.begin(), hp.begin() + static_cast<std::ptrdiff_t>(d * d)},
                                {hp.begin() + static_cast<std::ptrdiff_t>(d * d), hp.end()}};
                const Prediction plain{q};
                Prediction pred = nn_head(plain, nn);
                if (!want_grad) return pred;
                const auto dz = softmax_loss_grad(pred, label);
                for (std::size_t i = 0; i < d; ++i) {
                    for (std::size_t k = 0; k < d; ++k) {
                        head_grad[i * d + k] += dz[i] * q[k];
                        dq[k] += nn.weight(i, k) * dz[i];
                    }
                    head_grad[d * d + i] += dz[i];
                }
                return pred;
            }
        }
        return {};
    }

    // d(-log softmax(s)[label])/ds, zero once the clamp floor is active.
    std::vector<double> softmax_loss_grad(const Prediction& pred, std::size_t label) const {
        std::vector<double> g(pred.probs.size(), 0.0);
        if (pred.probs[label] < floor_) return g;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = pred.probs[i] - (i == label ? 1.0 : 0.0);
        return g;
    }

    const ModelSpec& model_;
    CompiledCircuit circuit_;
    std::vector<std::size_t> attention_;
    std::vector<std::size_t> targets_;
    std::size_t n_branches_;
    std::size_t n_outputs_;
    double floor_;
    std::vector<std::vector<cplx>> tape_;
    std::vector<cplx> out_;
};

inline Prediction predict(const ModelSpec& model, const Statevector& input) {
    return ModelEvaluator(model).predict(input);
}

/// Mean log-loss over a dataset.
inline double dataset_loss(const ModelSpec& model, std::span<const LabeledExample> batch,
                           double clamp_floor = kDefaultClampFloor) {
    if (batch.empty()) throw ContractError("dataset_loss: empty batch");
    const ModelEvaluator ev(model, clamp_floor);
    double total = 0.0;
    for (const auto& ex : batch) total += ev.loss(ex);
    return total / static_cast<double>(batch.size());
}

/// Mean log-loss and its exact gradient with respect to the full flat parameter vector.
inline LossAndGradient loss_and_gradient(const ModelSpec& model, std::span<const LabeledExample> batch,
                                         double clamp_floor = kDefaultClampFloor) {
    if (batch.empty()) throw ContractError("loss_gradient: empty batch");
    ModelEvaluator ev(model, clamp_floor);
    LossAndGradient out{0.0, std::vector<double>(model.params.size(), 0.0)};
    for (const auto& ex : batch) out.loss += ev.accumulate(ex, out.gradient).first;
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (double& g : out.gradient) g *= inv;
    return out;
}

inline std::vector<double> loss_gradient(const ModelSpec& model, std::span<const LabeledExample> batch,
                                         double clamp_floor = kDefaultClampFloor) {
    return loss_and_gradient(model, batch, clamp_floor).gradient;
}

/// Central differences of an arbitrary scalar function.
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::span<const double> x, double eps) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

inline std::vector<double> finite_difference_gradient(const ModelSpec& model, std::span<const LabeledExample> batch,
                                                      double eps, double clamp_floor = kDefaultClampFloor) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("finite_difference_gradient: eps must lie in [1e-7, 1e-3]");
    ModelSpec probe = model;
    return central_difference(
        [&](std::span<const double> p) {
            probe.params.assign(p.begin(), p.end());
            return dataset_loss(probe, batch, clamp_floor);
        },
        model.params, eps);
}

struct TrainConfig {
    std::size_t epochs = 300;
    double learning_rate = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    double clamp_floor = kDefaultClampFloor;
    std::size_t test_eval_every = 1;  ///< test metrics on epochs divisible by this and on the last one

    void validate() const {
        if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be positive");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
            throw ContractError("train config: Adam betas must lie in (0, 1)");
        if (!(adam_eps > 0.0)) throw ContractError("train config: adam_eps must be positive");
        if (!(clamp_floor > 0.0 && clamp_floor < 1.0)) throw ContractError("train config: clamp_floor must lie in (0, 1)");
        if (test_eval_every == 0) throw ContractError("train config: test_eval_every must be positive");
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

/// Adam with bias correction.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      const TrainConfig& config) {
    if (params.size() != grads.size()) throw ContractError("adam_step: parameter/gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state size mismatch");
    ++state.t;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double train_accuracy = 0.0;
    double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingTrace {
    std::uint64_t seed = 0;
    double initial_train_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochMetrics> epochs;  ///< row e holds metrics after e optimizer steps
    std::vector<double> final_params;
};

/// Raised when the loss stops being finite; carries the offending snapshot.
class DivergenceError : public NumericError {
public:
    DivergenceError(std::size_t epoch, double loss, std::vector<double> params)
        : NumericError(describe(epoch, loss, params)), epoch_(epoch), loss_(loss), params_(std::move(params)) {}

    std::size_t epoch() const { return epoch_; }
    double loss() const { return loss_; }
    const std::vector<double>& params() const { return params_; }

private:
    static std::string describe(std::size_t epoch, double loss, const std::vector<double>& p) {
        double norm = 0.0;
        std::size_t bad = 0;
        for (double v : p) {
            if (std::isfinite(v)) norm += v * v; else ++bad;
        }
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ": loss " << loss << ", |params| " << std::sqrt(norm) << ", "
           << bad << " non-finite parameters";
        return os.str();
    }

    std::size_t epoch_;
    double loss_;
    std::vector<double> params_;
};

struct DatasetMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline DatasetMetrics evaluate(const ModelSpec& model, std::span<const LabeledExample> data,
                               double clamp_floor = kDefaultClampFloor) {
    if (data.empty()) throw ContractError("evaluate: empty dataset");
    const ModelEvaluator ev(model, clamp_floor);
    DatasetMetrics m;
    for (const auto& ex : data) {
        const Prediction p = ev.predict(*ex.state);
        m.loss += log_loss(p, ex.label, clamp_floor);
        m.accuracy += argmax(p.probs) == ex.label ? 1.0 : 0.0;
    }
    m.loss /= static_cast<double>(data.size());
    m.accuracy /= static_cast<double>(data.size());
    return m;
}

/// Full-batch Adam. `model.params` holds the initial point; the trained
/// parameters are returned in the trace.
inline TrainingTrace train(const ModelSpec& model, std::span<const LabeledExample> train_set,
                           std::span<const LabeledExample> test_set, const TrainConfig& config) {
    config.validate();
    model.validate();
    TrainingTrace trace;
    trace.seed = config.seed;
    trace.final_params = model.params;
    if (config.epochs == 0) return trace;
    if (train_set.empty()) throw ContractError("train: empty training set");

    ModelSpec current = model;
    AdamState adam;
    for (std::size_t e = 0; e <= config.epochs; ++e) {
        ModelEvaluator ev(current, config.clamp_floor);
        std::vector<double> grad(current.params.size(), 0.0);
        double loss = 0.0;
        double correct = 0.0;
        for (const auto& ex : train_set) {
            const auto [l, pred] = ev.accumulate(ex, grad);
            loss += l;
            correct += argmax(pred.probs) == ex.label ? 1.0 : 0.0;
        }
        const double inv = 1.0 / static_cast<double>(train_set.size());
        loss *= inv;
        if (!std::isfinite(loss)) throw DivergenceError(e, loss, current.params);

        if (e == 0) {
            trace.initial_train_loss = loss;
        } else {
            EpochMetrics row;
            row.epoch = e;
            row.train_loss = loss;
            row.train_accuracy = correct * inv;
            if (!test_set.empty() && (e % config.test_eval_every == 0 || e == config.epochs)) {
                const DatasetMetrics tm = evaluate(current, test_set, config.clamp_floor);
                row.test_loss = tm.loss;
                row.test_accuracy = tm.accuracy;
            }
            trace.epochs.push_back(row);
        }
        if (e == config.epochs) break;
        for (double& g : grad) g *= inv;
        adam_step(adam, current.params, grad, config);
    }
    trace.final_params = current.params;
    return trace;
}

}  // namespace qcnn
