#pragma once

#include <string_view>

namespace fedrap {

enum class ScheduleKind { tanh, fixed, sin, square, frac };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

// A regularization weight that ramps with the round index a.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::tanh;
  double cap = 0.0;   // v1 or v2
  int period = 10;    // rounds per half-wave of `square`; also the a/10 scale
};

/// Weight at round index a >= 0:
///   tanh   tanh(a/10) * v
///   fixed  v
///   sin    max(sin(a/10), 0) * v
///   square v while floor(a/10) is odd, else 0
///   frac   v / (a + 1)
double weight(const ScheduleSpec& spec, int a);

}  // namespace fedrap
