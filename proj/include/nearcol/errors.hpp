#pragma once

#include <stdexcept>
#include <string>

namespace nearcol {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rejected input: a precondition on user-supplied parameters failed.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Numeric failure: a computation could not be completed to tolerance.
class NumericError : public Error {
public:
    using Error::Error;
};

// -- parameter rejections ---------------------------------------------------

struct NonPositiveShiftedEnergy : ParameterError { using ParameterError::ParameterError; };
struct SingularAtZero : ParameterError { using ParameterError::ParameterError; };
struct BelowPericenter : ParameterError { using ParameterError::ParameterError; };
struct OutOfDomain : ParameterError { using ParameterError::ParameterError; };
struct BranchRequired : ParameterError { using ParameterError::ParameterError; };
struct CollisionSingularity : ParameterError { using ParameterError::ParameterError; };
struct SingularPoint : ParameterError { using ParameterError::ParameterError; };
struct OutsideValidity : ParameterError { using ParameterError::ParameterError; };
struct Unsupported : ParameterError { using ParameterError::ParameterError; };
struct SeedInvalid : ParameterError { using ParameterError::ParameterError; };
struct InvalidParameter : ParameterError { using ParameterError::ParameterError; };

// -- numeric failures -------------------------------------------------------

struct StepBudgetExceeded : NumericError { using NumericError::NumericError; };
struct EnergyDriftExceeded : NumericError { using NumericError::NumericError; };
struct EscapedDomain : NumericError { using NumericError::NumericError; };
struct NoCrossing : NumericError { using NumericError::NumericError; };
struct NonGraph : NumericError { using NumericError::NumericError; };
struct NoReturn : NumericError { using NumericError::NumericError; };
struct QuadratureFailure : NumericError { using NumericError::NumericError; };
struct TailDivergence : NumericError { using NumericError::NumericError; };
struct NoConvergence : NumericError { using NumericError::NumericError; };
struct DomainTooSmall : NumericError { using NumericError::NumericError; };
struct NoOverlap : NumericError { using NumericError::NumericError; };
struct NoSignChange : NumericError { using NumericError::NumericError; };
struct DegenerateZero : NumericError { using NumericError::NumericError; };
struct OrderingViolated : NumericError { using NumericError::NumericError; };
struct NoneFound : NumericError { using NumericError::NumericError; };

} // namespace nearcol
