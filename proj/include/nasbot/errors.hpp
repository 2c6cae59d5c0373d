#pragma once

#include <stdexcept>
#include <string>

namespace nasbot {

/// Malformed or invalid input (bad JSON, schema violations, illegal graphs).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input is well formed but the request does not make sense for it
/// (e.g. comparing a CNN with an MLP, a label penalty that breaks the
/// triangle inequality).
class SemanticError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Failures that happen while computing: solver breakdown, failed
/// factorisations, external evaluators.
class ComputeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace nasbot
