#pragma once

#include <stdexcept>
#include <string>

namespace crashcar {

/// Malformed input: bad ids, self-loops, unparsable files, missing fields.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input is well-formed but outside the domain of the operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The sampler produced non-finite state.
class NumericalDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 2;
inline constexpr int domain_error = 3;
inline constexpr int not_converged = 4;
inline constexpr int divergence = 5;
}  // namespace exit_code

}  // namespace crashcar
