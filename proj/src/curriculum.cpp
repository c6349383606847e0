#include "fedrap/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedrap {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "tanh") return ScheduleKind::tanh;
  if (name == "fixed") return ScheduleKind::fixed;
  if (name == "sin") return ScheduleKind::sin;
  if (name == "square") return ScheduleKind::square;
  if (name == "frac") return ScheduleKind::frac;
  throw std::invalid_argument("unknown schedule '" + std::string(name) +
                              "' (expected tanh, fixed, sin, square or frac)");
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::tanh: return "tanh";
    case ScheduleKind::fixed: return "fixed";
    case ScheduleKind::sin: return "sin";
    case ScheduleKind::square: return "square";
    case ScheduleKind::frac: return "frac";
  }
  return "?";
}

double weight(const ScheduleSpec& spec, int a) {
  if (a < 0) throw std::invalid_argument("schedule round index must be >= 0");
  if (spec.cap < 0.0) throw std::invalid_argument("schedule cap must be >= 0");
  const double v = spec.cap;
  const double x = static_cast<double>(a) / 10.0;
  switch (spec.kind) {
    case ScheduleKind::tanh: return std::tanh(x) * v;
    case ScheduleKind::fixed: return v;
    // Negative weights make no sense; the oscillation is clipped at zero.
    case ScheduleKind::sin: return std::max(std::sin(x), 0.0) * v;
    case ScheduleKind::square: return (a / std::max(spec.period, 1)) % 2 == 1 ? v : 0.0;
    case ScheduleKind::frac: return v / static_cast<double>(a + 1);
  }
  return 0.0;
}

}  // namespace fedrap
