#include "ablasim/value.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ablasim {

namespace {

[[noreturn]] void wrong_type(ValueType have, std::string_view want) {
  throw Error("value of type " + std::string(to_string(have)) + " used as " + std::string(want));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\n' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s) {
  s = trim(s);
  double d = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(d))
    throw Error("invalid number '" + std::string(s) + "'");
  return d;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<double> parse_numbers(std::string_view s) {
  std::vector<double> out;
  std::string tmp(s);
  for (char& c : tmp)
    if (c == ',' || c == '\t' || c == '\n' || c == '\r') c = ' ';
  for (auto part : split(tmp, ' ')) {
    if (trim(part).empty()) continue;
    out.push_back(parse_double(part));
  }
  return out;
}

}  // namespace

double Value::as_number() const {
  switch (type()) {
    case ValueType::Float: return std::get<double>(v_);
    case ValueType::Int: return static_cast<double>(std::get<std::int64_t>(v_));
    case ValueType::Boolean: return std::get<bool>(v_) ? 1.0 : 0.0;
    default: wrong_type(type(), "number");
  }
}

std::int64_t Value::as_int() const {
  if (type() == ValueType::Int) return std::get<std::int64_t>(v_);
  if (type() == ValueType::Float) {
    double d = std::get<double>(v_);
    if (std::floor(d) == d) return static_cast<std::int64_t>(d);
  }
  wrong_type(type(), "int");
}

bool Value::as_bool() const {
  if (type() != ValueType::Boolean) wrong_type(type(), "boolean");
  return std::get<bool>(v_);
}

const std::string& Value::as_string() const {
  if (type() != ValueType::String) wrong_type(type(), "string");
  return std::get<std::string>(v_);
}

const FloatList& Value::as_float_list() const {
  if (type() != ValueType::FloatList) wrong_type(type(), "float_list");
  return std::get<FloatList>(v_);
}

const PointList& Value::as_point_list() const {
  if (type() != ValueType::PointList) wrong_type(type(), "point_list");
  return std::get<PointList>(v_);
}

std::string_view to_string(ValueType t) {
  switch (t) {
    case ValueType::Float: return "float";
    case ValueType::Int: return "int";
    case ValueType::Boolean: return "boolean";
    case ValueType::String: return "string";
    case ValueType::FloatList: return "float_list";
    case ValueType::PointList: return "point_list";
  }
  return "?";
}

std::optional<ValueType> parse_value_type(std::string_view s) {
  for (auto t : {ValueType::Float, ValueType::Int, ValueType::Boolean, ValueType::String,
                 ValueType::FloatList, ValueType::PointList})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

bool conforms(const Value& v, ValueType t) {
  if (v.type() == t) return true;
  return t == ValueType::Float && v.type() == ValueType::Int;
}

Value coerce(const Value& v, ValueType t) {
  if (v.type() == t) return v;
  if (t == ValueType::Float && v.type() == ValueType::Int) return Value(v.as_number());
  throw Error("cannot convert " + std::string(to_string(v.type())) + " to " + std::string(to_string(t)));
}

std::string format_double(double d) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, ptr);
}

std::string encode_value(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(x);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, FloatList>) {
          std::string out;
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) out += ' ';
            out += format_double(x[i]);
          }
          return out;
        } else {
          std::string out;
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) out += ';';
            out += format_double(x[i][0]) + ' ' + format_double(x[i][1]) + ' ' + format_double(x[i][2]);
          }
          return out;
        }
      },
      v.storage());
}

Value decode_value(std::string_view text, ValueType t) {
  switch (t) {
    case ValueType::Float: return Value(parse_double(text));
    case ValueType::Int: {
      auto s = trim(text);
      std::int64_t i = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("invalid integer '" + std::string(s) + "'");
      return Value(i);
    }
    case ValueType::Boolean: {
      auto s = trim(text);
      if (s == "true" || s == "1") return Value(true);
      if (s == "false" || s == "0") return Value(false);
      throw Error("invalid boolean '" + std::string(s) + "'");
    }
    case ValueType::String: return Value(std::string(text));
    case ValueType::FloatList: return Value(parse_numbers(text));
    case ValueType::PointList: {
      PointList pts;
      if (trim(text).empty()) return Value(pts);
      for (auto part : split(text, ';')) {
        auto nums = parse_numbers(part);
        if (nums.size() != 3) throw Error("point must have 3 coordinates: '" + std::string(part) + "'");
        pts.push_back({nums[0], nums[1], nums[2]});
      }
      return Value(pts);
    }
  }
  throw Error("unknown value type");
}

}  // namespace ablasim
