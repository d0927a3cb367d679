#pragma once

#include <stdexcept>
#include <string>

namespace reachmap {

/// Parameter outside its documented domain (theta <= 0, m = 0, ...).
class InvalidParameter : public std::invalid_argument {
 public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// Sampler rejects nearly every draw; the chain or its collision model is unusable.
class DegenerateChain : public std::runtime_error {
 public:
  explicit DegenerateChain(const std::string& what) : std::runtime_error(what) {}
};

class IncompatibleGrids : public std::invalid_argument {
 public:
  explicit IncompatibleGrids(const std::string& what) : std::invalid_argument(what) {}
};

class NoSeeds : public std::runtime_error {
 public:
  explicit NoSeeds(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed binary map, chain document or CSV input.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace reachmap
