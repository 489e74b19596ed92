#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ndlab {

/// Failure categories raised by the library. Each operation documents which
/// subset it can produce; callers that need to branch should switch on code().
enum class ErrorCode {
    OrderingViolation,
    EmptyLayer,
    SigmaOutsideGraph,
    FlatInterface,
    OutsideGraphDomain,
    InadmissibleGammas,
    NotSPD,
    DimensionTooSmall,
    NonOrthonormalBasis,
    IllConditionedAssembly,
    InconsistentForms,
    LayerTooThin,
    DegenerateElement,
    LabelMismatch,
    NotCoercive,
    FactorizationFailure,
    EmptySigma,
    MeshMismatch,
    CoincidingPoints,
    ProbeLeavesSigma,
    PointsTooClose,
    BadFit,
    AnisotropyOutOfRange,
    FitDiverged,
    InfeasibleIterate,
    CoefficientPrefixMismatch,
    ConfigInvalid,
    IoError,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace ndlab
