#pragma once

#include <stdexcept>
#include <string>

namespace griduq {

/// Tensor or grid shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed on-disk data (dataset, checkpoint, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few calibration scores for the requested miscoverage level.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training loss becomes NaN/Inf.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, int batch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace griduq
