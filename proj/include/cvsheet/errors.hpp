#pragma once

#include <stdexcept>
#include <string>

namespace cvsheet {

// Every failure the library reports derives from Error; kind() is the short
// name printed by the CLI ("ChartViolation", "NoConvergence", ...).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define CVSHEET_ERROR(Name)                                               \
    struct Name : Error {                                                 \
        explicit Name(const std::string& m) : Error(#Name, m) {}          \
    };

CVSHEET_ERROR(ChartViolation)
CVSHEET_ERROR(DegenerateMetric)
CVSHEET_ERROR(NoConvergence)
CVSHEET_ERROR(FoldedMap)
CVSHEET_ERROR(SolverDivergence)
CVSHEET_ERROR(CompatibilityViolation)
CVSHEET_ERROR(TraceMismatch)
CVSHEET_ERROR(CFLViolation)
CVSHEET_ERROR(InsufficientSamples)
CVSHEET_ERROR(NoContraction)
CVSHEET_ERROR(ZeroWavevector)
CVSHEET_ERROR(NonlinearContamination)
CVSHEET_ERROR(ConfigError)
CVSHEET_ERROR(InvariantBreach)

#undef CVSHEET_ERROR

} // namespace cvsheet
