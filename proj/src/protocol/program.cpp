#include <algorithm>
#include <cmath>

#include "ablasim/protocol/protocol.hpp"

namespace ablasim::protocol {

namespace {

void collect_refs(const Expr& e, std::set<std::string>& out) {
  if (e.kind == Expr::Kind::Variable) out.insert(e.name);
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    // interp's first argument names a list parameter, not a scalar.
    if (e.kind == Expr::Kind::Call && e.name == "interp" && i == 0) continue;
    collect_refs(*e.args[i], out);
  }
}

void print_expr(const Expr& e, std::string& out) {
  switch (e.kind) {
    case Expr::Kind::Number: out += format_double(e.number); break;
    case Expr::Kind::Variable: out += e.name; break;
    case Expr::Kind::Unary:
      out += '(';
      out += e.name;
      print_expr(*e.args[0], out);
      out += ')';
      break;
    case Expr::Kind::Binary:
      out += '(';
      print_expr(*e.args[0], out);
      out += ' ' + e.name + ' ';
      print_expr(*e.args[1], out);
      out += ')';
      break;
    case Expr::Kind::Call:
      out += e.name + '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print_expr(*e.args[i], out);
      }
      out += ')';
      break;
  }
}

bool same_action(const Action& a, const Action& b) {
  if (a.index() != b.index()) return false;
  if (auto* s = std::get_if<SetAction>(&a)) {
    auto& t = std::get<SetAction>(b);
    return s->target == t.target && same_expr(*s->value, *t.value);
  }
  if (auto* s = std::get_if<AdvanceAction>(&a)) return s->target_phase == std::get<AdvanceAction>(b).target_phase;
  return true;
}

double interpolate(const FloatList& table, double x, int line) {
  if (table.size() < 2 || table.size() % 2) throw EvaluationError(line, "interp() table needs (x, y) pairs");
  std::size_t n = table.size() / 2;
  if (x <= table[0]) return table[1];
  for (std::size_t i = 1; i < n; ++i) {
    double x0 = table[2 * (i - 1)], y0 = table[2 * (i - 1) + 1];
    double x1 = table[2 * i], y1 = table[2 * i + 1];
    if (x <= x1) return x1 == x0 ? y1 : y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  }
  return table[2 * n - 1];
}

class Evaluator {
 public:
  Evaluator(const EvalContext& ctx, std::map<std::string, double>& vars, int line)
      : ctx_(ctx), vars_(vars), line_(line) {}

  double eval(const Expr& e) const {
    switch (e.kind) {
      case Expr::Kind::Number: return e.number;
      case Expr::Kind::Variable: return lookup(e.name);
      case Expr::Kind::Unary: {
        double v = eval(*e.args[0]);
        return e.name == "-" ? -v : (v == 0.0 ? 1.0 : 0.0);
      }
      case Expr::Kind::Binary: return binary(e);
      case Expr::Kind::Call: return call(e);
    }
    return 0;
  }

 private:
  double lookup(const std::string& name) const {
    if (name == "time") return ctx_.time;
    if (name == "phase") return static_cast<double>(ctx_.phase);
    if (auto it = vars_.find(name); it != vars_.end()) return it->second;
    if (ctx_.parameters) {
      if (auto it = ctx_.parameters->find(name); it != ctx_.parameters->end()) {
        try {
          return it->second.as_number();
        } catch (const Error&) {
          throw EvaluationError(line_, "parameter '" + name + "' is not numeric");
        }
      }
    }
    // Assigned locals start at zero.
    return 0.0;
  }

  double binary(const Expr& e) const {
    const std::string& op = e.name;
    if (op == "&&") return (eval(*e.args[0]) != 0 && eval(*e.args[1]) != 0) ? 1.0 : 0.0;
    if (op == "||") return (eval(*e.args[0]) != 0 || eval(*e.args[1]) != 0) ? 1.0 : 0.0;
    double a = eval(*e.args[0]), b = eval(*e.args[1]);
    double r = 0;
    if (op == "+") r = a + b;
    else if (op == "-") r = a - b;
    else if (op == "*") r = a * b;
    else if (op == "/") {
      if (b == 0.0) throw EvaluationError(line_, "division by zero");
      r = a / b;
    } else if (op == "^") r = std::pow(a, b);
    else if (op == "<") r = a < b;
    else if (op == "<=") r = a <= b;
    else if (op == ">") r = a > b;
    else if (op == ">=") r = a >= b;
    else if (op == "==") r = a == b;
    else if (op == "!=") r = a != b;
    if (!std::isfinite(r)) throw EvaluationError(line_, "non-finite result of '" + op + "'");
    return r;
  }

  double call(const Expr& e) const {
    if (e.name == "if") return eval(*e.args[0]) != 0 ? eval(*e.args[1]) : eval(*e.args[2]);
    if (e.name == "min") return std::min(eval(*e.args[0]), eval(*e.args[1]));
    if (e.name == "max") return std::max(eval(*e.args[0]), eval(*e.args[1]));
    if (e.name == "abs") return std::abs(eval(*e.args[0]));
    if (e.name == "interp") {
      const std::string& table = e.args[0]->name;
      if (!ctx_.parameters || !ctx_.parameters->count(table))
        throw EvaluationError(line_, "unknown table parameter '" + table + "'");
      const auto& v = ctx_.parameters->at(table);
      if (v.type() != ValueType::FloatList)
        throw EvaluationError(line_, "parameter '" + table + "' is not a float_list");
      return interpolate(v.as_float_list(), eval(*e.args[1]), line_);
    }
    throw EvaluationError(line_, "unknown function '" + e.name + "'");
  }

  const EvalContext& ctx_;
  std::map<std::string, double>& vars_;
  int line_;
};

}  // namespace

bool same_expr(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.name != b.name || a.args.size() != b.args.size()) return false;
  if (a.kind == Expr::Kind::Number && !(a.number == b.number)) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!same_expr(*a.args[i], *b.args[i])) return false;
  return true;
}

bool same_program(const ProtocolProgram& a, const ProtocolProgram& b) {
  if (a.phases.size() != b.phases.size()) return false;
  for (std::size_t p = 0; p < a.phases.size(); ++p) {
    const auto& pa = a.phases[p];
    const auto& pb = b.phases[p];
    if (pa.name != pb.name || pa.rules.size() != pb.rules.size()) return false;
    for (std::size_t r = 0; r < pa.rules.size(); ++r)
      if (!same_expr(*pa.rules[r].guard, *pb.rules[r].guard) || !same_action(pa.rules[r].action, pb.rules[r].action))
        return false;
  }
  return true;
}

std::optional<std::size_t> ProtocolProgram::phase_index(const std::string& name) const {
  for (std::size_t i = 0; i < phases.size(); ++i)
    if (phases[i].name == name) return i;
  return std::nullopt;
}

std::set<std::string> ProtocolProgram::assigned_variables() const {
  std::set<std::string> out;
  for (auto& p : phases)
    for (auto& r : p.rules)
      if (auto* s = std::get_if<SetAction>(&r.action)) out.insert(s->target);
  return out;
}

std::set<std::string> ProtocolProgram::referenced_variables() const {
  std::set<std::string> out;
  for (auto& p : phases)
    for (auto& r : p.rules) {
      collect_refs(*r.guard, out);
      if (auto* s = std::get_if<SetAction>(&r.action)) collect_refs(*s->value, out);
    }
  return out;
}

const std::set<std::string>& intraprocedural_variables() {
  static const std::set<std::string> vars = {"time",        "phase",           "power",
                                             "flow_rate",   "voltage",         "temperature_avg",
                                             "temperature_max", "tine_temperature_min", "impedance"};
  return vars;
}

std::string print_protocol(const ProtocolProgram& program) {
  std::string out;
  for (auto& p : program.phases) {
    out += "PHASE " + p.name + "\n";
    for (auto& r : p.rules) {
      out += "WHEN ";
      print_expr(*r.guard, out);
      std::visit(
          [&](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, SetAction>) {
              out += " SET " + a.target + " = ";
              print_expr(*a.value, out);
            } else if constexpr (std::is_same_v<T, AdvanceAction>) {
              out += " ADVANCE";
              if (a.target_phase) out += " " + *a.target_phase;
            } else {
              out += " END";
            }
          },
          r.action);
      out += "\n";
    }
  }
  return out;
}

void link_protocol(const ProtocolProgram& program, const std::set<std::string>& parameter_names,
                   const std::set<std::string>& extra_variables) {
  auto assigned = program.assigned_variables();
  const auto& host = intraprocedural_variables();
  for (auto& name : program.referenced_variables()) {
    if (host.count(name) || parameter_names.count(name) || assigned.count(name) || extra_variables.count(name))
      continue;
    throw LinkError(name, "unknown variable '" + name + "'");
  }
  std::set<std::string> tables;
  for (auto& p : program.phases)
    for (auto& r : p.rules) {
      std::vector<const Expr*> stack{r.guard.get()};
      if (auto* s = std::get_if<SetAction>(&r.action)) stack.push_back(s->value.get());
      while (!stack.empty()) {
        auto* e = stack.back();
        stack.pop_back();
        if (e->kind == Expr::Kind::Call && e->name == "interp" && !parameter_names.count(e->args[0]->name))
          throw LinkError(e->args[0]->name, "unknown table parameter '" + e->args[0]->name + "'");
        for (auto& a : e->args) stack.push_back(a.get());
      }
    }
}

TickResult tick(const ProtocolProgram& program, const EvalContext& ctx) {
  TickResult result{ctx.variables, ctx.phase, false};
  if (ctx.phase >= program.phases.size()) throw Error("phase index out of range");
  const Phase& phase = program.phases[ctx.phase];
  for (const Rule& rule : phase.rules) {
    Evaluator ev(ctx, result.variables, rule.line);
    if (ev.eval(*rule.guard) == 0.0) continue;
    if (auto* set = std::get_if<SetAction>(&rule.action)) {
      result.variables[set->target] = ev.eval(*set->value);
    } else if (auto* adv = std::get_if<AdvanceAction>(&rule.action)) {
      result.phase = adv->target_phase ? *program.phase_index(*adv->target_phase) : ctx.phase + 1;
      return result;
    } else {
      result.terminated = true;
      return result;
    }
  }
  return result;
}

}  // namespace ablasim::protocol
