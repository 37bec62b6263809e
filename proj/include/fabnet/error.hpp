#pragma once

#include <stdexcept>
#include <string>

namespace fabnet {

/// Broad error families. The CLI maps each family to a distinct exit code.
enum class ErrorFamily { config, data, numeric, io };

class Error : public std::runtime_error {
public:
  Error(ErrorFamily family, const std::string& what)
      : std::runtime_error(what), family_(family) {}

  ErrorFamily family() const noexcept { return family_; }

private:
  ErrorFamily family_;
};

/// Tensor shapes that do not fit together (names the offending axes).
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& what) : Error(ErrorFamily::numeric, what) {}
};

/// Window/stride/padding combination that does not tile the input.
class GeometryError : public Error {
public:
  explicit GeometryError(const std::string& what) : Error(ErrorFamily::numeric, what) {}
};

/// Non-finite values during training and similar arithmetic failures.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(ErrorFamily::numeric, what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(ErrorFamily::config, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ErrorFamily::data, what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error(ErrorFamily::io, what) {}
};

/// Layer stack whose shapes do not chain. `layer_index` is the first bad layer.
class ShapeChainError : public ConfigError {
public:
  ShapeChainError(std::size_t layer_index, const std::string& what)
      : ConfigError(what), layer_index_(layer_index) {}

  std::size_t layer_index() const noexcept { return layer_index_; }

private:
  std::size_t layer_index_;
};

/// backward() called with a tape recorded before the parameters changed.
class StaleTapeError : public Error {
public:
  explicit StaleTapeError(const std::string& what) : Error(ErrorFamily::numeric, what) {}
};

enum class CheckpointFault { bad_magic, version_mismatch, truncated, digest_mismatch, spec_mismatch };

class CheckpointError : public Error {
public:
  CheckpointError(CheckpointFault fault, const std::string& what)
      : Error(fault == CheckpointFault::spec_mismatch ? ErrorFamily::config : ErrorFamily::io,
              what),
        fault_(fault) {}

  CheckpointFault fault() const noexcept { return fault_; }

private:
  CheckpointFault fault_;
};

} // namespace fabnet
