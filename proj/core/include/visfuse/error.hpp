#pragma once

#include <stdexcept>
#include <string>

namespace visfuse {

// Base class of every error raised by the library. Normal outcomes such as a
// point projecting outside the image or a ray missing the grid are reported
// through return values instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

// Carries the offending configuration key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class EmptyResult : public Error {
 public:
  using Error::Error;
};

}  // namespace visfuse
