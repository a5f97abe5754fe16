#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cnnvis {

enum class Errc {
  malformed_file,
  dangling_reference,
  missing_activation,
  orphan_activation,
  mapping_mismatch,
  window_too_large,
  non_divisible_dims,
  empty_class,
  invalid_k,
  non_positive_bandwidth,
  unknown_neuron,
  unknown_target_cluster,
  empty_class_set,
  count_underflow,
  missing_contribution_data,
  insufficient_area,
  too_many_rows,
  missing_position,
  missing_facet_data,
  invalid_argument,
  not_found,
  version_conflict,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_file: return "MalformedFile";
    case Errc::dangling_reference: return "DanglingReference";
    case Errc::missing_activation: return "MissingActivation";
    case Errc::orphan_activation: return "OrphanActivation";
    case Errc::mapping_mismatch: return "MappingMismatch";
    case Errc::window_too_large: return "WindowTooLarge";
    case Errc::non_divisible_dims: return "NonDivisibleDims";
    case Errc::empty_class: return "EmptyClass";
    case Errc::invalid_k: return "InvalidK";
    case Errc::non_positive_bandwidth: return "NonPositiveBandwidth";
    case Errc::unknown_neuron: return "UnknownNeuron";
    case Errc::unknown_target_cluster: return "UnknownTargetCluster";
    case Errc::empty_class_set: return "EmptyClassSet";
    case Errc::count_underflow: return "CountUnderflow";
    case Errc::missing_contribution_data: return "MissingContributionData";
    case Errc::insufficient_area: return "InsufficientArea";
    case Errc::too_many_rows: return "TooManyRows";
    case Errc::missing_position: return "MissingPosition";
    case Errc::missing_facet_data: return "MissingFacetData";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::not_found: return "NotFound";
    case Errc::version_conflict: return "VersionConflict";
  }
  return "Unknown";
}

/// Every failure raised by the engine carries one of the codes above so the
/// CLI and the HTTP layer can map it to an exit code or a status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cnnvis
