#pragma once

#include <stdexcept>
#include <string>

namespace beatsvm {

enum class ErrorKind {
  input,            // unreadable or malformed file
  shape,            // dimension mismatch
  empty,            // nothing to work on
  configuration,    // parameters incompatible with the data
  insufficient_data,
  no_beats,
  annotation,
  argument,
  size,
  stratification,
  fold,
  label,
  convergence,
  degenerate_data,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return "input";
    case ErrorKind::shape: return "shape";
    case ErrorKind::empty: return "empty";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::no_beats: return "no-beats";
    case ErrorKind::annotation: return "annotation";
    case ErrorKind::argument: return "argument";
    case ErrorKind::size: return "size";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::fold: return "fold";
    case ErrorKind::label: return "label";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::degenerate_data: return "degenerate-data";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace beatsvm
