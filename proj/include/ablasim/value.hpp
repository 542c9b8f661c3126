#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ablasim/error.hpp"

namespace ablasim {

enum class ValueType { Float, Int, Boolean, String, FloatList, PointList };

using Point3 = std::array<double, 3>;
using FloatList = std::vector<double>;
using PointList = std::vector<Point3>;

/// A typed parameter value. The alternative index follows ValueType.
class Value {
 public:
  using Storage = std::variant<double, std::int64_t, bool, std::string, FloatList, PointList>;

  Value() : v_(0.0) {}
  Value(double d) : v_(d) {}
  Value(std::int64_t i) : v_(i) {}
  Value(int i) : v_(static_cast<std::int64_t>(i)) {}
  Value(bool b) : v_(b) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(FloatList l) : v_(std::move(l)) {}
  Value(PointList l) : v_(std::move(l)) {}

  ValueType type() const { return static_cast<ValueType>(v_.index()); }
  const Storage& storage() const { return v_; }

  /// Numeric view: floats, ints and booleans convert; anything else throws.
  double as_number() const;
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const FloatList& as_float_list() const;
  const PointList& as_point_list() const;

  bool operator==(const Value&) const = default;

 private:
  Storage v_;
};

std::string_view to_string(ValueType t);
std::optional<ValueType> parse_value_type(std::string_view s);

/// True when `v` may be stored in a slot declared as `t`. Ints are accepted
/// where floats are declared.
bool conforms(const Value& v, ValueType t);

/// Converts `v` to the declared type (int → float widening only).
Value coerce(const Value& v, ValueType t);

/// Text encoding shared by the XML format and the CLI: floats use the
/// shortest round-trip representation, lists are space separated, points are
/// separated by ';'.
std::string encode_value(const Value& v);
Value decode_value(std::string_view text, ValueType t);

/// Shortest decimal string that parses back to exactly `d`.
std::string format_double(double d);

}  // namespace ablasim
