#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace corridrone {

enum class Errc {
  // geometry
  TooFewWaypoints,
  DegenerateSegment,
  PitchLimitExceeded,
  // lane planning
  LayoutTooLargeForCorridor,
  DistributionLaneMismatch,
  ManeuverExitsCorridor,
  IncompatibleDirections,
  // simulation
  UnknownUAV,
  InvalidPlan,
  // utm protocol
  OutOfOrderMessage,
  UnknownAllocation,
  ApproveWithoutQuote,
  TransportFailure,
  // gcs service
  ValidationFailed,
  Infeasible,
  NegotiationFailed,
  OutsideWindow,
  NotAllocated,
  IncompatibleStatus,
  UnknownEvent,
  UAVsStillActive,
  UnknownMission,
  UnknownOption,
  // generic
  PreconditionViolated,
  Parse,
  Io,
};

std::string_view to_string(Errc code);
std::optional<Errc> errc_from(std::string_view name);

// Every recoverable failure in the library is an Error. `details` carries the
// structured reasons (field names, conflict ids, infeasibility causes) and
// `index` the offending element for per-item errors such as
// DegenerateSegment(index).
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message, std::vector<std::string> details = {},
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::move(message)),
        code_(code),
        details_(std::move(details)),
        index_(index) {}

  Errc code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  Errc code_;
  std::vector<std::string> details_;
  std::optional<std::size_t> index_;
};

[[noreturn]] inline void fail(Errc code, std::string message,
                              std::vector<std::string> details = {},
                              std::optional<std::size_t> index = std::nullopt) {
  throw Error(code, std::move(message), std::move(details), index);
}

inline void require(bool condition, std::string_view what) {
  if (!condition) fail(Errc::PreconditionViolated, std::string(what));
}

}  // namespace corridrone
