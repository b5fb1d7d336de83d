#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace zen {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// An operation that needs non-zero entries got a tensor without any.
class EmptyTensor : public Error {
 public:
  explicit EmptyTensor(const std::string& what = "operation requires a non-empty tensor")
      : Error(what) {}
};

// Tensors combined in one operation must share the same element count M.
class UniverseMismatch : public Error {
 public:
  explicit UniverseMismatch(const std::string& what = "tensors have different universe sizes")
      : Error(what) {}
};

// A hash partition ran out of slots; reports which partition overflowed.
class SerialOverflow : public Error {
 public:
  explicit SerialOverflow(uint32_t partition)
      : Error("hash partition " + std::to_string(partition) +
              " exceeded its slot capacity (r2 too small for this workload)"),
        partition_(partition) {}
  uint32_t partition() const { return partition_; }

 private:
  uint32_t partition_;
};

class NonPowerOfTwo : public Error {
 public:
  explicit NonPowerOfTwo(const std::string& what = "node count must be a power of two")
      : Error(what) {}
};

class UnsupportedCombination : public Error {
 public:
  explicit UnsupportedCombination(const std::string& what = "unsupported scheme configuration")
      : Error(what) {}
};

class MissingProfileEntry : public Error {
 public:
  explicit MissingProfileEntry(const std::string& what) : Error(what) {}
};

class IndexOutsideUniverse : public Error {
 public:
  explicit IndexOutsideUniverse(const std::string& what) : Error(what) {}
};

class MalformedPayload : public Error {
 public:
  explicit MalformedPayload(const std::string& what) : Error(what) {}
};

class SelfSend : public Error {
 public:
  explicit SelfSend(const std::string& what = "a node cannot send a message to itself")
      : Error(what) {}
};

class UnbalancedLedger : public Error {
 public:
  explicit UnbalancedLedger(const std::string& what = "sent and received byte totals disagree")
      : Error(what) {}
};

class InfeasibleSpec : public Error {
 public:
  explicit InfeasibleSpec(const std::string& what) : Error(what) {}
};

}  // namespace zen
