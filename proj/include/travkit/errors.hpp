#pragma once

#include <stdexcept>
#include <string>

namespace travkit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Point has non-positive depth in the camera frame.
struct BehindCameraError : Error {
    using Error::Error;
};

// Query time outside the trajectory span, or missing coverage.
struct OutOfRangeError : Error {
    using Error::Error;
};

// Inconsistent or invalid configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed request or response on the segmentation wire protocol.
struct ProtocolError : Error {
    using Error::Error;
};

// Segmentation backend cannot be reached; the frame should be requeued.
struct BackendUnavailableError : Error {
    using Error::Error;
};

// Prompt refinement left no positive prompt; the frame is skipped.
struct EmptyPromptsError : Error {
    using Error::Error;
};

// Tensor or image shapes do not match.
struct ShapeError : Error {
    using Error::Error;
};

// No non-ignore pixels to evaluate.
struct EmptyEvaluationError : Error {
    using Error::Error;
};

}  // namespace travkit
