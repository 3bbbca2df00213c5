#pragma once

#include <stdexcept>
#include <string>

namespace qcnn {

/// Argument outside the mathematical domain of an operation (bad index, odd/even chain, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Caller violated a documented precondition (shape mismatch, non-unitary gate, ...).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Normalizing a branch whose squared norm is at or below the dead-branch threshold.
struct DeadBranchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Problem too large for the configured dense limits, or a sampling budget ran out.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Eigensolver failure, non-finite loss, or a failed numeric invariant.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace qcnn
