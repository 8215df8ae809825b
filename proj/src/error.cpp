#include "corridrone/error.hpp"

namespace corridrone {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::TooFewWaypoints: return "TooFewWaypoints";
    case Errc::DegenerateSegment: return "DegenerateSegment";
    case Errc::PitchLimitExceeded: return "PitchLimitExceeded";
    case Errc::LayoutTooLargeForCorridor: return "LayoutTooLargeForCorridor";
    case Errc::DistributionLaneMismatch: return "DistributionLaneMismatch";
    case Errc::ManeuverExitsCorridor: return "ManeuverExitsCorridor";
    case Errc::IncompatibleDirections: return "IncompatibleDirections";
    case Errc::UnknownUAV: return "UnknownUAV";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::OutOfOrderMessage: return "OutOfOrderMessage";
    case Errc::UnknownAllocation: return "UnknownAllocation";
    case Errc::ApproveWithoutQuote: return "ApproveWithoutQuote";
    case Errc::TransportFailure: return "TransportFailure";
    case Errc::ValidationFailed: return "ValidationFailed";
    case Errc::Infeasible: return "Infeasible";
    case Errc::NegotiationFailed: return "NegotiationFailed";
    case Errc::OutsideWindow: return "OutsideWindow";
    case Errc::NotAllocated: return "NotAllocated";
    case Errc::IncompatibleStatus: return "IncompatibleStatus";
    case Errc::UnknownEvent: return "UnknownEvent";
    case Errc::UAVsStillActive: return "UAVsStillActive";
    case Errc::UnknownMission: return "UnknownMission";
    case Errc::UnknownOption: return "UnknownOption";
    case Errc::PreconditionViolated: return "PreconditionViolated";
    case Errc::Parse: return "Parse";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

std::optional<Errc> errc_from(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::Io); ++i) {
    if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
  }
  return std::nullopt;
}

}  // namespace corridrone
