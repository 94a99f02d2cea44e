#pragma once

#include <stdexcept>
#include <string>

namespace labelbias {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// simdata
class InfeasibleStandardization : public Error {
public:
    using Error::Error;
};
class MissingColumn : public Error {
public:
    using Error::Error;
};
class NonNumericCell : public Error {
public:
    using Error::Error;
};
class EmptyFile : public Error {
public:
    using Error::Error;
};

// regress
class RankDeficient : public Error {
public:
    using Error::Error;
};
class NotConverged : public Error {
public:
    explicit NotConverged(const std::string& what, double diagnostic = 0.0)
        : Error(what), diagnostic_(diagnostic) {}
    /// Final gradient norm (optimizers) or max split-Rhat (samplers).
    double diagnostic() const { return diagnostic_; }

private:
    double diagnostic_;
};

// sampler
class NonFiniteDensityAtInit : public Error {
public:
    using Error::Error;
};
class AllProposalsRejected : public Error {
public:
    using Error::Error;
};

// leakage
class NonPositiveDefiniteCovariance : public Error {
public:
    using Error::Error;
};
class UnknownMode : public Error {
public:
    using Error::Error;
};

// threshold
class UnknownGroup : public Error {
public:
    using Error::Error;
};

// metrics
class ZeroVariance : public Error {
public:
    using Error::Error;
};
class LengthMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace labelbias
