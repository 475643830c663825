#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace igc {

// Violated precondition of a public operation (bad horizon, wrong lengths, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tensor shapes that cannot be combined by the requested op.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input outside the mathematical domain of an op (log of a non-positive value, empty softmax axis).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent configuration. `path()` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Optimizer refused to apply an update because gradients were not finite.
class PoisonedStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss). `head` is -1 when no single head is to blame.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, long head, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ", head " +
                           std::to_string(head) + ": " + what),
        epoch_(epoch),
        batch_(batch),
        head_(head) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }
  long head() const noexcept { return head_; }

 private:
  std::size_t epoch_, batch_;
  long head_;
};

}  // namespace igc
