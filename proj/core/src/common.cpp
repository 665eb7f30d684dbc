#include "msglmb/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

namespace msglmb {

std::string to_string(const Label& label) {
  return std::to_string(label.birth_time) + "." + std::to_string(label.birth_index);
}

bool is_label_set(const LabelSet& labels) {
  return std::adjacent_find(labels.begin(), labels.end(),
                            [](const Label& a, const Label& b) { return !(a < b); }) ==
         labels.end();
}

bool contains(const LabelSet& labels, const Label& l) {
  return std::binary_search(labels.begin(), labels.end(), l);
}

LabelSet set_union(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

LabelSet set_intersection(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

LabelSet set_difference(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    return kNegInf;
  }
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) {
    return top;
  }
  double acc = 0.0;
  for (double v : values) {
    acc += std::exp(v - top);
  }
  return top + std::log(acc);
}

double wrap_to_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, two_pi);
  if (a <= 0.0) {
    a += two_pi;
  }
  return a - std::numbers::pi;
}

double wrap_to_two_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a < 0.0) {
    a += two_pi;
  }
  if (a >= two_pi) {
    a -= two_pi;
  }
  return a;
}

std::string format_double(double value) {
  if (std::isinf(value)) {
    return value > 0 ? "inf" : "-inf";
  }
  if (std::isnan(value)) {
    return "nan";
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) {
    throw NumericalError("cannot format value");
  }
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  if (text == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (text == "-inf") {
    return kNegInf;
  }
  if (text == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (!text.empty() && text.front() == '+') {
    text.remove_prefix(1);
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw InvalidInputError("malformed number '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace msglmb
