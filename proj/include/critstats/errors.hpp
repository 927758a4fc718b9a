#ifndef CRITSTATS_ERRORS_HPP
#define CRITSTATS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace critstats {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// covariance module
struct NonSmoothKernel : Error { using Error::Error; };
struct NegativeCoefficient : Error { using Error::Error; };
struct DegenerateField : Error { using Error::Error; };
struct InadmissibleCoefficients : Error { using Error::Error; };

// moments module
struct RadiusTooSmall : Error { using Error::Error; };
struct RadiusTooLarge : Error { using Error::Error; };
struct DegenerateGradientPair : Error { using Error::Error; };
struct EigenvectorDegeneracy : Error { using Error::Error; };
struct NonPositiveEigenvalue : Error { using Error::Error; };

// kacrice module
struct ComplexBranch : Error { using Error::Error; };
struct G8BranchNegative : Error { using Error::Error; };
struct QuadratureUnderResolved : Error { using Error::Error; };
struct NonPositiveValue : Error { using Error::Error; };

// fieldsim module
struct ModeBudgetTooSmall : Error { using Error::Error; };
struct DegenerateHessian : Error { using Error::Error; };

} // namespace critstats

#endif
