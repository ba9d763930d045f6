#pragma once

#include <stdexcept>
#include <string>

namespace edq {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// distribution calculus
struct NotAbsolutelyContinuous : Error { using Error::Error; };
struct SupportExceeded : Error { using Error::Error; };
struct InvalidProbability : Error { using Error::Error; };
struct InfiniteMean : Error { using Error::Error; };

// approximation formulas
struct NotOverloaded : Error { using Error::Error; };
struct PatienceDensityZeroAtW : Error { using Error::Error; };
struct QuadratureFailure : Error { using Error::Error; };
struct DegenerateConditioning : Error { using Error::Error; };

// simulation
struct InvalidConfig : Error { using Error::Error; };

// renewal-superposition lab
struct InfiniteThirdMoment : Error { using Error::Error; };

// exact CTMC solver
struct TruncationTooSmall : Error { using Error::Error; };
struct SingularSolve : Error { using Error::Error; };

// staffing search
struct InfeasibleWithinEDRegime : Error { using Error::Error; };
struct EvaluatorError : Error { using Error::Error; };

}
