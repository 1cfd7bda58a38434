#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flexdti {

enum class ErrorCode {
  NonPositiveSignal,
  ZeroB,
  NonUnitDirection,
  TooFewDirections,
  TooManyDirections,
  RankDeficient,
  BadSplit,
  SubsetTooLarge,
  SubsetTooSmall,
  SubsetOutOfRange,
  DimsTooSmall,
  NotEnoughDirections,
  ShapeMismatch,
  OddSpatialDims,
  ImageTooSmall,
  DisconnectedLoss,
  DuplicateName,
  UnknownName,
  EmptyDataset,
  NonFiniteLoss,
  ZeroB0Mean,
  EmptyMask,
  ZeroReference,
  BadMagic,
  HeaderJsonInvalid,
  PayloadTruncated,
  ColumnCountMismatch,
  ManifestShapeMismatch,
  BadWindow,
  MultiShell,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flexdti
