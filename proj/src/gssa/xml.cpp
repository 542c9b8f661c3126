#include "ablasim/gssa/xml.hpp"

#include <cstdint>

namespace ablasim::gssa {

const std::string* XmlElement::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes)
    if (k == key) return &v;
  return nullptr;
}

namespace {

bool is_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
         static_cast<unsigned char>(c) >= 0x80;
}
bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}

  XmlElement document() {
    skip_prolog();
    if (eof() || peek() != '<') fail("expected root element");
    XmlElement root = element();
    skip_misc();
    if (!eof()) fail("content after root element");
    return root;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  [[noreturn]] void fail(const std::string& msg) const {
    throw XmlError(XmlErrorKind::Malformed, line_, col_, msg);
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  bool starts(std::string_view p) const { return s_.substr(pos_).starts_with(p); }
  char get() {
    if (eof()) fail("unexpected end of input");
    char c = s_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  void expect(std::string_view p) {
    if (!starts(p)) fail("expected '" + std::string(p) + "'");
    for (std::size_t i = 0; i < p.size(); ++i) get();
  }
  void skip_space() {
    while (!eof() && is_space(peek())) get();
  }

  void skip_until(std::string_view end, const char* what) {
    while (!starts(end)) {
      if (eof()) fail(std::string("unterminated ") + what);
      get();
    }
    expect(end);
  }

  void skip_misc() {
    for (;;) {
      skip_space();
      if (starts("<!--")) {
        expect("<!--");
        skip_until("-->", "comment");
      } else {
        return;
      }
    }
  }

  void skip_prolog() {
    if (starts("\xEF\xBB\xBF")) pos_ += 3;
    if (starts("<?xml")) {
      expect("<?xml");
      skip_until("?>", "XML declaration");
    }
    skip_misc();
    if (starts("<!DOCTYPE")) fail("DTDs are not supported");
    if (starts("<?")) fail("processing instructions are not supported");
  }

  std::string name() {
    if (eof() || !is_name_start(peek())) fail("expected a name");
    std::string n;
    while (!eof() && is_name_char(peek())) n += get();
    return n;
  }

  void reference(std::string& out) {
    expect("&");
    if (!eof() && peek() == '#') {
      get();
      int base = 10;
      if (!eof() && peek() == 'x') {
        get();
        base = 16;
      }
      std::uint32_t cp = 0;
      int digits = 0;
      while (!eof() && peek() != ';') {
        char c = get();
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else fail("bad character reference");
        cp = cp * base + d;
        if (cp > 0x10FFFF) fail("character reference out of range");
        ++digits;
      }
      if (digits == 0) fail("empty character reference");
      expect(";");
      append_utf8(out, cp);
      return;
    }
    std::string ent;
    while (!eof() && peek() != ';' && ent.size() < 8) ent += get();
    expect(";");
    if (ent == "amp") out += '&';
    else if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else fail("unknown entity '&" + ent + ";'");
  }

  XmlElement element() {
    XmlElement e;
    e.line = line_;
    e.column = col_;
    expect("<");
    e.name = name();
    for (;;) {
      bool had_space = !eof() && is_space(peek());
      skip_space();
      if (eof()) fail("unterminated start tag");
      if (starts("/>")) {
        expect("/>");
        return e;
      }
      if (peek() == '>') {
        get();
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      int aline = line_, acol = col_;
      std::string key = name();
      skip_space();
      expect("=");
      skip_space();
      if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
      char q = get();
      std::string val;
      while (true) {
        if (eof()) fail("unterminated attribute value");
        char c = peek();
        if (c == q) {
          get();
          break;
        }
        if (c == '<') fail("'<' in attribute value");
        if (c == '&') {
          reference(val);
          continue;
        }
        get();
        // attribute-value normalization of literal whitespace
        val += (c == '\n' || c == '\r' || c == '\t') ? ' ' : c;
      }
      if (e.attribute(key)) throw XmlError(XmlErrorKind::Malformed, aline, acol, "duplicate attribute '" + key + "'");
      e.attributes.emplace_back(std::move(key), std::move(val));
    }
    for (;;) {
      if (eof()) fail("unterminated element <" + e.name + ">");
      if (starts("</")) {
        expect("</");
        std::string n = name();
        if (n != e.name) fail("mismatched end tag </" + n + "> for <" + e.name + ">");
        skip_space();
        expect(">");
        return e;
      }
      if (starts("<!--")) {
        expect("<!--");
        skip_until("-->", "comment");
      } else if (starts("<![CDATA[")) {
        expect("<![CDATA[");
        while (!starts("]]>")) {
          if (eof()) fail("unterminated CDATA section");
          e.text += get();
        }
        expect("]]>");
      } else if (starts("<?") || starts("<!")) {
        fail("unsupported markup");
      } else if (peek() == '<') {
        e.children.push_back(element());
      } else if (peek() == '&') {
        reference(e.text);
      } else {
        char c = get();
        if (c == '\r') {
          if (!eof() && peek() == '\n') get();
          c = '\n';
        }
        e.text += c;
      }
    }
  }
};

}  // namespace

XmlElement parse_xml(std::string_view text) { return Reader(text).document(); }

std::string escape_attribute(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '\r': out += "&#13;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace ablasim::gssa
