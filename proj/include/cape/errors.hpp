#pragma once

#include <stdexcept>
#include <string>

namespace cape {

/// A caller broke a documented precondition (bad index, malformed matrix).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration / input files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight became zero after a reweight.
class DegeneratePosterior : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No candidate pair is left to query.
class CandidatesExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The human oracle did not answer in time (or the wait was cancelled).
class OracleTimeout : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cape
