#pragma once

#include <stdexcept>
#include <string>

namespace cdt {

// Base for every failure raised by the library. `category()` is the short
// tag printed by the CLI in front of the message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* category() const noexcept { return "error"; }
};

// Malformed trajectory data or dataset files.
class DatasetError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "dataset"; }
};

// A frontier quantity has an empty feasible set (PF/IPF undefined).
class UndefinedValueError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "undefined"; }
};

// Argument outside the domain of a function (e.g. RF at an unreachable cost).
class DomainError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "domain"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

class GraphError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "graph"; }
};

class AugmentationError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "augment"; }
};

class EnvError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "env"; }
};

class ModelError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "model"; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "training"; }
};

class EvaluationError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "evaluation"; }
};

}  // namespace cdt
