#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace forage {

// Base for every error the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input bytes could not be decoded. `offset` is the byte position reported by the decoder.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

// Decoded data breaks a domain invariant. `subject` names the offending item when known.
class ValidationError : public Error {
public:
  ValidationError(const std::string& what, std::string subject = {})
      : Error(what), subject_(std::move(subject)) {}

  const std::string& subject() const noexcept { return subject_; }

private:
  std::string subject_;
};

}  // namespace forage
