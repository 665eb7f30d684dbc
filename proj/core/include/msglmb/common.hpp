#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msglmb {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// An operation was called on a value in the wrong state (e.g. unnormalized).
class StateError : public Error {
 public:
  using Error::Error;
};

/// All hypothesis weights vanished.
class DegenerateDensityError : public Error {
 public:
  using Error::Error;
};

/// Internal invariants disagree; signals an upstream bug.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A combinatorial enumeration exceeded its configured cap.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Object label (birth scan, index within the birth model).
struct Label {
  int birth_time = 0;
  int birth_index = 0;

  auto operator<=>(const Label&) const = default;
};

[[nodiscard]] std::string to_string(const Label& label);

struct LabelHash {
  std::size_t operator()(const Label& l) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(l.birth_time) << 32) ^
                                      static_cast<std::uint32_t>(l.birth_index));
  }
};

/// Sorted, duplicate-free collection of labels.
using LabelSet = std::vector<Label>;

[[nodiscard]] bool is_label_set(const LabelSet& labels);
[[nodiscard]] bool contains(const LabelSet& labels, const Label& l);
[[nodiscard]] LabelSet set_union(const LabelSet& a, const LabelSet& b);
[[nodiscard]] LabelSet set_intersection(const LabelSet& a, const LabelSet& b);
[[nodiscard]] LabelSet set_difference(const LabelSet& a, const LabelSet& b);

/// Numerically stable log(sum(exp(values))); returns -inf for an empty span.
[[nodiscard]] double log_sum_exp(std::span<const double> values);

/// Wraps an angle to (-pi, pi].
[[nodiscard]] double wrap_to_pi(double angle);

/// Wraps an angle to [0, 2pi).
[[nodiscard]] double wrap_to_two_pi(double angle);

/// Locale-independent shortest round-trip text for a double.
[[nodiscard]] std::string format_double(double value);

/// Locale-independent parse; throws InvalidInputError on malformed text.
[[nodiscard]] double parse_double(std::string_view text);

}  // namespace msglmb
