#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace memprop {

#ifdef MEMPROP_REAL_FLOAT
using Real = float;
/// Softmax terms with a max-shifted exponent below this are taken as 0. The
/// cutoff sits well above the subnormal range so products stay normal.
inline constexpr Real kExpUnderflow = -80.0f;
#else
using Real = double;
inline constexpr Real kExpUnderflow = -600.0;
#endif

/// Raised when a caller breaks an operation's preconditions (shape mismatch,
/// out-of-range parameter, non-monotone frame index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for unreadable or ill-formed files. Carries the frame index when
/// the failure is tied to one frame of a sequence.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what, std::optional<std::size_t> frame = std::nullopt)
      : std::runtime_error(frame ? what + " (frame " + std::to_string(*frame) + ")" : what),
        frame_(frame) {}

  std::optional<std::size_t> frame() const noexcept { return frame_; }

 private:
  std::optional<std::size_t> frame_;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace memprop
