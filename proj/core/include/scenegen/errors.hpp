#pragma once

#include <stdexcept>
#include <string>

namespace scenegen {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: wrong shape, empty batch, non-positive size, ...
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Facial normalization requires a visible nose.
class CannotNormalize : public Error {
 public:
  using Error::Error;
};

// Box derivation needs at least two visible keypoints with 2D extent.
class InsufficientPose : public Error {
 public:
  using Error::Error;
};

// Skeleton geometry unusable for the requested metric (e.g. head size 0).
class DegenerateSkeleton : public Error {
 public:
  using Error::Error;
};

// Checkpoint exists but belongs to a different stage or architecture.
class IncompatibleCheckpoint : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is truncated or malformed.
class CorruptArchive : public Error {
 public:
  using Error::Error;
};

// Manifest / annotation loading problems; message enumerates every issue.
class LoadError : public Error {
 public:
  using Error::Error;
};

// End-to-end generation failed; carries the stage (1..3) that failed.
class PipelineFailure : public Error {
 public:
  PipelineFailure(int stage, const std::string& what)
      : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}
  int stage() const { return stage_; }

 private:
  int stage_;
};

}  // namespace scenegen
