#ifndef MFS_ERROR_HPP
#define MFS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mfs {

enum class ErrorKind {
  empty_dataset,
  shape,
  singular_system,
  not_converged,
  degenerate_constraint,
  numerical_failure,
  stale_claim,
  parse,
  invalid_argument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the trainer when the gradient norm never reaches the tolerance.
class TrainingError : public Error {
 public:
  explicit TrainingError(double grad_norm)
      : Error(ErrorKind::not_converged,
              "training did not converge (gradient norm " +
                  std::to_string(grad_norm) + ")"),
        grad_norm_(grad_norm) {}

  double grad_norm() const noexcept { return grad_norm_; }

 private:
  double grad_norm_;
};

namespace detail {

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::shape, "shape: " + what);
}

inline void require_arg(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::invalid_argument, what);
}

}  // namespace detail

}  // namespace mfs

#endif  // MFS_ERROR_HPP
