#include "flexdti/error.hpp"

namespace flexdti {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveSignal: return "NonPositiveSignal";
    case ErrorCode::ZeroB: return "ZeroB";
    case ErrorCode::NonUnitDirection: return "NonUnitDirection";
    case ErrorCode::TooFewDirections: return "TooFewDirections";
    case ErrorCode::TooManyDirections: return "TooManyDirections";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BadSplit: return "BadSplit";
    case ErrorCode::SubsetTooLarge: return "SubsetTooLarge";
    case ErrorCode::SubsetTooSmall: return "SubsetTooSmall";
    case ErrorCode::SubsetOutOfRange: return "SubsetOutOfRange";
    case ErrorCode::DimsTooSmall: return "DimsTooSmall";
    case ErrorCode::NotEnoughDirections: return "NotEnoughDirections";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddSpatialDims: return "OddSpatialDims";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DisconnectedLoss: return "DisconnectedLoss";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ZeroB0Mean: return "ZeroB0Mean";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::HeaderJsonInvalid: return "HeaderJsonInvalid";
    case ErrorCode::PayloadTruncated: return "PayloadTruncated";
    case ErrorCode::ColumnCountMismatch: return "ColumnCountMismatch";
    case ErrorCode::ManifestShapeMismatch: return "ManifestShapeMismatch";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::MultiShell: return "MultiShell";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace flexdti
