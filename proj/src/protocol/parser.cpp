#include <cctype>
#include <charconv>

#include "ablasim/protocol/protocol.hpp"

namespace ablasim::protocol {

namespace {

enum class Tok { Number, Ident, Op, Newline, Eof };

struct Token {
  Tok kind;
  std::string text;
  double number{0};
  SourceLoc loc;
};

const std::set<std::string> kKeywords = {"PHASE", "WHEN", "SET", "ADVANCE", "END"};

struct FunctionSig {
  std::size_t min_args, max_args;
};
const std::map<std::string, FunctionSig> kFunctions = {
    {"if", {3, 3}}, {"min", {2, 2}}, {"max", {2, 2}}, {"abs", {1, 1}}, {"interp", {2, 2}}};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    i += n;
    col += static_cast<int>(n);
  };
  while (i < src.size()) {
    char c = src[i];
    SourceLoc loc{line, col};
    if (c == '\n') {
      out.push_back({Tok::Newline, "\n", 0, loc});
      ++i;
      ++line;
      col = 1;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      advance(1);
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      std::string text(src.substr(i, j - i));
      double v = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size())
        throw SyntaxError(loc, "malformed number '" + text + "'");
      out.push_back({Tok::Number, text, v, loc});
      advance(j - i);
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Tok::Ident, std::string(src.substr(i, j - i)), 0, loc});
      advance(j - i);
    } else {
      static const char* two[] = {"==", "!=", "<=", ">=", "&&", "||"};
      bool matched = false;
      for (auto op : two) {
        if (src.substr(i, 2) == op) {
          out.push_back({Tok::Op, op, 0, loc});
          advance(2);
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (std::string_view("<>!+-*/^(),=").find(c) == std::string_view::npos)
        throw SyntaxError(loc, std::string("unexpected character '") + c + "'");
      out.push_back({Tok::Op, std::string(1, c), 0, loc});
      advance(1);
    }
  }
  out.push_back({Tok::Eof, "", 0, {line, col}});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ProtocolProgram program() {
    ProtocolProgram prog;
    struct PendingAdvance {
      std::string name;
      SourceLoc loc;
    };
    std::vector<PendingAdvance> advances;
    bool any_statement = false;
    while (peek().kind != Tok::Eof) {
      if (peek().kind == Tok::Newline) {
        next();
        continue;
      }
      any_statement = true;
      const Token& head = peek();
      if (head.kind == Tok::Ident && head.text == "PHASE") {
        next();
        const Token& name = expect_ident("phase name");
        if (prog.phase_index(name.text)) throw SyntaxError(name.loc, "duplicate phase '" + name.text + "'");
        prog.phases.push_back({name.text, {}});
      } else if (head.kind == Tok::Ident && head.text == "WHEN") {
        next();
        if (prog.phases.empty()) prog.phases.push_back({"main", {}});
        Rule rule;
        rule.line = head.loc.line;
        rule.guard = expr();
        const Token& act = peek();
        if (act.kind != Tok::Ident) throw SyntaxError(act.loc, "expected SET, ADVANCE or END");
        if (act.text == "SET") {
          next();
          const Token& target = expect_ident("variable name");
          expect_op("=");
          rule.action = SetAction{target.text, expr()};
        } else if (act.text == "ADVANCE") {
          next();
          AdvanceAction adv;
          if (peek().kind == Tok::Ident && !kKeywords.count(peek().text)) {
            const Token& t = next();
            adv.target_phase = t.text;
            advances.push_back({t.text, t.loc});
          } else if (peek().kind == Tok::Ident) {
            throw SyntaxError(peek().loc, "unexpected keyword '" + peek().text + "'");
          }
          rule.action = adv;
        } else if (act.text == "END") {
          next();
          rule.action = EndAction{};
        } else {
          throw SyntaxError(act.loc, "expected SET, ADVANCE or END, found '" + act.text + "'");
        }
        prog.phases.back().rules.push_back(std::move(rule));
      } else {
        throw SyntaxError(head.loc, "expected PHASE or WHEN");
      }
      if (peek().kind != Tok::Newline && peek().kind != Tok::Eof)
        throw SyntaxError(peek().loc, "unexpected '" + peek().text + "' after statement");
    }
    if (!any_statement) throw SyntaxError({1, 1}, "empty program");
    for (auto& a : advances)
      if (!prog.phase_index(a.name)) throw SyntaxError(a.loc, "unknown phase '" + a.name + "'");
    bool has_end = false;
    for (std::size_t p = 0; p < prog.phases.size(); ++p)
      for (auto& r : prog.phases[p].rules) {
        if (std::holds_alternative<EndAction>(r.action)) has_end = true;
        if (auto* adv = std::get_if<AdvanceAction>(&r.action);
            adv && !adv->target_phase && p + 1 == prog.phases.size())
          throw SyntaxError({r.line, 1}, "ADVANCE past the last phase");
      }
    if (!has_end) throw SyntaxError(peek().loc, "program has no END rule");
    return prog;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  const Token& expect_ident(const char* what) {
    const Token& t = peek();
    if (t.kind != Tok::Ident || kKeywords.count(t.text)) throw SyntaxError(t.loc, std::string("expected ") + what);
    return next();
  }
  void expect_op(const char* op) {
    const Token& t = peek();
    if (t.kind != Tok::Op || t.text != op) throw SyntaxError(t.loc, std::string("expected '") + op + "'");
    next();
  }
  bool at_op(std::initializer_list<const char*> ops) const {
    if (peek().kind != Tok::Op) return false;
    for (auto o : ops)
      if (peek().text == o) return true;
    return false;
  }
  bool starts_operand() const {
    const Token& t = peek();
    if (t.kind == Tok::Number) return true;
    if (t.kind == Tok::Ident) return !kKeywords.count(t.text);
    return t.kind == Tok::Op && (t.text == "(" || t.text == "-" || t.text == "!");
  }
  // Operand after a binary/unary operator; errors point at the operator.
  ExprPtr operand_after(const Token& op, ExprPtr (Parser::*rule)()) {
    if (!starts_operand()) throw SyntaxError(op.loc, "expected operand after '" + op.text + "'");
    return (this->*rule)();
  }

  static ExprPtr binary(const Token& op, ExprPtr l, ExprPtr r) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Binary;
    e->name = op.text;
    e->args = {std::move(l), std::move(r)};
    e->loc = op.loc;
    return e;
  }

  ExprPtr expr() {
    if (!starts_operand()) throw SyntaxError(peek().loc, "expected expression");
    return or_expr();
  }
  ExprPtr or_expr() {
    auto l = and_expr();
    while (at_op({"||"})) {
      Token op = next();
      l = binary(op, l, operand_after(op, &Parser::and_expr));
    }
    return l;
  }
  ExprPtr and_expr() {
    auto l = cmp_expr();
    while (at_op({"&&"})) {
      Token op = next();
      l = binary(op, l, operand_after(op, &Parser::cmp_expr));
    }
    return l;
  }
  ExprPtr cmp_expr() {
    auto l = add_expr();
    if (at_op({"<", "<=", ">", ">=", "==", "!="})) {
      Token op = next();
      l = binary(op, l, operand_after(op, &Parser::add_expr));
      if (at_op({"<", "<=", ">", ">=", "==", "!="}))
        throw SyntaxError(peek().loc, "comparisons do not chain; use parentheses");
    }
    return l;
  }
  ExprPtr add_expr() {
    auto l = mul_expr();
    while (at_op({"+", "-"})) {
      Token op = next();
      l = binary(op, l, operand_after(op, &Parser::mul_expr));
    }
    return l;
  }
  ExprPtr mul_expr() {
    auto l = unary_expr();
    while (at_op({"*", "/"})) {
      Token op = next();
      l = binary(op, l, operand_after(op, &Parser::unary_expr));
    }
    return l;
  }
  ExprPtr unary_expr() {
    if (at_op({"-", "!"})) {
      Token op = next();
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Unary;
      e->name = op.text;
      e->args = {operand_after(op, &Parser::unary_expr)};
      e->loc = op.loc;
      return e;
    }
    return power_expr();
  }
  ExprPtr power_expr() {
    auto base = primary();
    if (at_op({"^"})) {
      Token op = next();
      return binary(op, base, operand_after(op, &Parser::unary_expr));
    }
    return base;
  }
  ExprPtr primary() {
    const Token& t = peek();
    auto e = std::make_shared<Expr>();
    e->loc = t.loc;
    if (t.kind == Tok::Number) {
      next();
      e->kind = Expr::Kind::Number;
      e->number = t.number;
      return e;
    }
    if (t.kind == Tok::Ident && !kKeywords.count(t.text)) {
      Token id = next();
      e->name = id.text;
      if (at_op({"("})) {
        Token open = next();
        auto fn = kFunctions.find(id.text);
        if (fn == kFunctions.end()) throw SyntaxError(id.loc, "unknown function '" + id.text + "'");
        e->kind = Expr::Kind::Call;
        if (!at_op({")"})) {
          e->args.push_back(operand_after(open, &Parser::or_expr));
          while (at_op({","})) {
            Token comma = next();
            e->args.push_back(operand_after(comma, &Parser::or_expr));
          }
        }
        expect_op(")");
        if (e->args.size() < fn->second.min_args || e->args.size() > fn->second.max_args)
          throw SyntaxError(id.loc, "wrong number of arguments to '" + id.text + "'");
        if (id.text == "interp" && e->args[0]->kind != Expr::Kind::Variable)
          throw SyntaxError(id.loc, "interp() takes a parameter name as its first argument");
        return e;
      }
      e->kind = Expr::Kind::Variable;
      return e;
    }
    if (t.kind == Tok::Op && t.text == "(") {
      Token open = next();
      auto inner = operand_after(open, &Parser::or_expr);
      expect_op(")");
      return inner;
    }
    if (t.kind == Tok::Newline || t.kind == Tok::Eof) throw SyntaxError(t.loc, "unexpected end of line");
    throw SyntaxError(t.loc, "unexpected '" + t.text + "'");
  }

  std::vector<Token> toks_;
  std::size_t pos_{0};
};

}  // namespace

ProtocolProgram parse_protocol(std::string_view source) { return Parser(lex(source)).program(); }

}  // namespace ablasim::protocol
