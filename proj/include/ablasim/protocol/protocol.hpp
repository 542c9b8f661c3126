#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ablasim/error.hpp"
#include "ablasim/value.hpp"

namespace ablasim::protocol {

/// A protocol algorithm as stored with entities and in simulation
/// definitions: the controlled variable it produces, the host variables it
/// reads, and the program text.
struct AlgorithmDef {
  std::string result;
  std::vector<std::string> arguments;
  std::string body;
  bool operator==(const AlgorithmDef&) const = default;
};

struct SourceLoc {
  int line{1};
  int column{1};
};

class SyntaxError : public Error {
 public:
  SyntaxError(SourceLoc loc, const std::string& msg)
      : Error(std::to_string(loc.line) + ":" + std::to_string(loc.column) + ": " + msg), loc_(loc) {}
  SourceLoc where() const { return loc_; }

 private:
  SourceLoc loc_;
};

class LinkError : public Error {
 public:
  LinkError(std::string name, const std::string& msg) : Error(msg), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class EvaluationError : public Error {
 public:
  EvaluationError(int rule_line, const std::string& msg)
      : Error("rule at line " + std::to_string(rule_line) + ": " + msg), line_(rule_line) {}
  int rule_line() const { return line_; }

 private:
  int line_;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Number, Variable, Unary, Binary, Call };
  Kind kind{Kind::Number};
  double number{0};
  std::string name;  ///< variable or function name, or the operator symbol
  std::vector<ExprPtr> args;
  SourceLoc loc;
};

/// Structural equality, ignoring source locations.
bool same_expr(const Expr& a, const Expr& b);

struct SetAction {
  std::string target;
  ExprPtr value;
};
struct AdvanceAction {
  std::optional<std::string> target_phase;  ///< next phase when empty
};
struct EndAction {};
using Action = std::variant<SetAction, AdvanceAction, EndAction>;

struct Rule {
  ExprPtr guard;
  Action action;
  int line{0};
};

struct Phase {
  std::string name;
  std::vector<Rule> rules;
};

struct ProtocolProgram {
  std::vector<Phase> phases;

  /// Phase index for `name`, if declared.
  std::optional<std::size_t> phase_index(const std::string& name) const;
  /// Names assigned by some SET rule.
  std::set<std::string> assigned_variables() const;
  /// Identifiers read anywhere in the program (excluding function names).
  std::set<std::string> referenced_variables() const;
};

bool same_program(const ProtocolProgram& a, const ProtocolProgram& b);

/// Variables the host supplies to every tick.
const std::set<std::string>& intraprocedural_variables();

ProtocolProgram parse_protocol(std::string_view source);

/// Canonical source text; parse_protocol(print_protocol(p)) is structurally
/// identical to p.
std::string print_protocol(const ProtocolProgram& program);

/// Checks that every free variable is a host variable, a declared parameter,
/// or assigned by some rule. Throws LinkError naming the first unknown one.
void link_protocol(const ProtocolProgram& program, const std::set<std::string>& parameter_names,
                   const std::set<std::string>& extra_variables = {});

struct EvalContext {
  /// Host variables (time, temperatures, ...) and controlled/local variables
  /// carried over from the previous tick. Locals never assigned read as 0.
  std::map<std::string, double> variables;
  /// Parameter bindings; numeric ones are readable by name, float_list ones
  /// through interp().
  const std::map<std::string, Value>* parameters{nullptr};
  std::size_t phase{0};
  double time{0};
};

struct TickResult {
  std::map<std::string, double> variables;
  std::size_t phase{0};
  bool terminated{false};
};

/// Evaluates the rules of the current phase top to bottom. SET effects are
/// visible to later rules in the same tick; the first ADVANCE or END that
/// fires ends the tick.
TickResult tick(const ProtocolProgram& program, const EvalContext& ctx);

}  // namespace ablasim::protocol
