#include "ndlab/error.hpp"

namespace ndlab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::EmptyLayer: return "EmptyLayer";
    case ErrorCode::SigmaOutsideGraph: return "SigmaOutsideGraph";
    case ErrorCode::FlatInterface: return "FlatInterface";
    case ErrorCode::OutsideGraphDomain: return "OutsideGraphDomain";
    case ErrorCode::InadmissibleGammas: return "InadmissibleGammas";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorCode::NonOrthonormalBasis: return "NonOrthonormalBasis";
    case ErrorCode::IllConditionedAssembly: return "IllConditionedAssembly";
    case ErrorCode::InconsistentForms: return "InconsistentForms";
    case ErrorCode::LayerTooThin: return "LayerTooThin";
    case ErrorCode::DegenerateElement: return "DegenerateElement";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::NotCoercive: return "NotCoercive";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::EmptySigma: return "EmptySigma";
    case ErrorCode::MeshMismatch: return "MeshMismatch";
    case ErrorCode::CoincidingPoints: return "CoincidingPoints";
    case ErrorCode::ProbeLeavesSigma: return "ProbeLeavesSigma";
    case ErrorCode::PointsTooClose: return "PointsTooClose";
    case ErrorCode::BadFit: return "BadFit";
    case ErrorCode::AnisotropyOutOfRange: return "AnisotropyOutOfRange";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::InfeasibleIterate: return "InfeasibleIterate";
    case ErrorCode::CoefficientPrefixMismatch: return "CoefficientPrefixMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace ndlab
