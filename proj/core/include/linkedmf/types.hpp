#ifndef LINKEDMF_TYPES_HPP
#define LINKEDMF_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace linkedmf {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Element-wise boolean matrix; for missingness masks `true` means missing.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorKind {
  Domain,          // argument outside the operation's domain
  ShapeMismatch,   // inconsistent matrix or layout dimensions
  Data,            // malformed input data or files
  Numerical,       // SVD or solver failure
  UndefinedMetric, // zero denominator in a metric
  Usage,           // invalid configuration or command usage
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception type thrown by every linkedmf operation.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace linkedmf

#endif  // LINKEDMF_TYPES_HPP
