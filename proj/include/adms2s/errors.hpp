#pragma once

#include <stdexcept>
#include <string>

namespace adms2s {

// Dimension disagreement between tensors (messages name both shapes).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation applied to a tensor of the wrong rank, e.g. backward on a
// non-scalar root.
struct RankError : ShapeError {
  using ShapeError::ShapeError;
};

// Every position of a softmax input is masked out.
struct MaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct EmptyInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tape misuse: double backward, backward without a tape, etc.
struct TapeError : std::logic_error {
  using std::logic_error::logic_error;
};

// Optimizer asked to step a parameter whose gradient was never populated.
struct GradientError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid model/schedule/task configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corpus or report input problems: missing files, misaligned line counts.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Magic string does not match the supported format version.
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// File ends early or carries trailing bytes.
struct CheckpointCorruptError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Embedded config block is unusable or disagrees with the parameter payload.
struct CheckpointConfigError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Command line / config-file problems (maps to exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace adms2s
