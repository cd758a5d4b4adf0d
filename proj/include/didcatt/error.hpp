#pragma once

#include <stdexcept>
#include <string>

namespace didcatt {

/// Error raised by any library operation. Carries the owning module and
/// operation so the CLI can emit a structured error record.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string operation, const std::string& message)
      : std::runtime_error(message),
        module_(std::move(module)),
        operation_(std::move(operation)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string module_;
  std::string operation_;
};

}  // namespace didcatt
