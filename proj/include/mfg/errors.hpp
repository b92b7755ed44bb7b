// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A coefficient returned NaN/Inf; message carries the evaluation site.
struct NonFiniteCoefficient : Error { using Error::Error; };

// Path grid does not contain the dyadic points required by the level.
struct IncompatibleGrid : Error { using Error::Error; };

struct GridMismatch : Error { using Error::Error; };

struct MissingCommonNoise : Error { using Error::Error; };

// Sigma lies outside the convex hull of {sigma sigma^T(b)}.
struct InfeasibleSigma : Error {
    double gap;
    explicit InfeasibleSigma(const std::string& what, double g = 0.0)
        : Error(what), gap(g) {}
};

struct CFLViolation : Error { using Error::Error; };
struct GridTooSmall : Error { using Error::Error; };

// Normal equations rank-deficient; basis too rich for the sample size.
struct SingularRegression : Error { using Error::Error; };

struct BucketStarvation : Error {
    std::string code;
    long count;
    BucketStarvation(const std::string& what, std::string c, long n)
        : Error(what), code(std::move(c)), count(n) {}
};

struct StiffnessFailure : Error { using Error::Error; };

struct ConfigError : Error { using Error::Error; };

}  // namespace mfg
