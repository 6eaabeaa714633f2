#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace icnn {

enum class ErrorKind {
  InvalidShape,
  Shape,
  InvalidLabel,
  InvalidInput,
  CorruptedState,
  EmptyTape,
  Contract,
  Format,
  Config,
  Io,
  Training,
  Lookup,
  InsufficientFrames,
  Crop,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the tensor container reader; carries the byte offset at which
/// decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::Format, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace icnn
