#pragma once

#include <stdexcept>
#include <string>

namespace pbooth {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling something in a state where it cannot work.
class UsageError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or a failed numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

// On-disk data that fails checksum or consistency checks.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Dataset contents cannot satisfy a request (e.g. empty persona group).
class DataError : public Error {
 public:
  using Error::Error;
};

// Token outside the fixed vocabulary, or a prompt missing its subject.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Evaluation protocol preconditions are not met.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage ran before the stage whose output it consumes.
class StageOrderError : public Error {
 public:
  using Error::Error;
};

}  // namespace pbooth
