#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ablasim/error.hpp"

namespace ablasim::gssa {

enum class XmlErrorKind { Malformed, Schema, DuplicateRegion };

class XmlError : public Error {
 public:
  XmlError(XmlErrorKind kind, int line, int column, const std::string& msg)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        kind_(kind),
        line_(line),
        column_(column) {}
  XmlErrorKind kind() const { return kind_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  XmlErrorKind kind_;
  int line_, column_;
};

/// Minimal DOM for the simulation-definition format: elements, attributes,
/// character data, comments, CDATA and the five predefined entities plus
/// numeric character references. DTDs and processing instructions other than
/// the XML declaration are rejected.
struct XmlElement {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<XmlElement> children;
  std::string text;  ///< concatenated character data directly inside this element
  int line{1}, column{1};

  const std::string* attribute(std::string_view key) const;
};

XmlElement parse_xml(std::string_view text);

std::string escape_attribute(std::string_view s);
std::string escape_text(std::string_view s);

}  // namespace ablasim::gssa
