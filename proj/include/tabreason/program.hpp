// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tabreason
{

enum class ProgramErrorKind
{
    LexError,
    SyntaxError,
    NameError,
    DivByZero,
    LimitExceeded,
    TypeMismatch,
    IndexOutOfRange,
};

std::string_view to_string(ProgramErrorKind kind);

class ProgramError: public Error
{
  public:
    ProgramError(ProgramErrorKind kind, std::string message, std::size_t line = 0, std::size_t column = 0);

    [[nodiscard]] ProgramErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

  private:
    ProgramErrorKind kind_;
    std::size_t line_;
    std::size_t column_;
};

enum class TokenKind
{
    Name,
    Number,
    String,
    Op,
    Newline,
    Indent,
    Dedent,
    End,
};

struct Token
{
    TokenKind kind = TokenKind::End;
    std::string text; ///< operator or name spelling; decoded contents for strings
    Rational number;
    std::size_t line = 1;
    std::size_t column = 1;
};

/// Comments run from '#' to end of line. Digit-group commas ("246,548") are
/// folded into the numeral outside list brackets, index brackets and call
/// argument lists; a comma there always separates.
std::vector<Token> tokenize(std::string_view source);

namespace ast
{

struct Expr;
struct Stmt;
using ExprPtr = std::shared_ptr<const Expr>;
using StmtPtr = std::shared_ptr<const Stmt>;

enum class ExprKind
{
    Number,
    String,
    Bool,
    Name,
    Unary,   ///< op: "-", "+", "not"
    Binary,  ///< op: + - * / // % **
    Compare, ///< ops[i] between operands[i] and operands[i + 1]
    And,
    Or,
    Ternary, ///< operands: value-if-true, condition, value-if-false
    List,
    Index,   ///< operands: object, index
    Slice,   ///< operands: object, lower, upper, step (null when omitted)
    Call,    ///< name: builtin; operands: positional args; reverse: keyword arg
};

struct Expr
{
    ExprKind kind = ExprKind::Number;
    Rational number;
    bool flag = false;
    std::string name; ///< identifier, string literal, or builtin name
    std::string op;
    std::vector<std::string> ops;
    std::vector<ExprPtr> operands;
    ExprPtr reverse;
    std::size_t line = 0;
    std::size_t column = 0;
};

enum class StmtKind
{
    Assign,
    If,
};

struct Branch
{
    ExprPtr condition; ///< null for the else branch
    std::vector<StmtPtr> body;
};

struct Stmt
{
    StmtKind kind = StmtKind::Assign;
    std::string target;
    std::string op = "="; ///< "=" or an augmented operator such as "+="
    ExprPtr value;
    std::vector<Branch> branches;
    std::size_t line = 0;
};

} // namespace ast

struct Program
{
    std::vector<ast::StmtPtr> statements;
};

/// Loops, definitions, imports, attribute access and calls to anything other
/// than sum/len/sorted/min/max/abs/round are rejected, as is a program that
/// never assigns `ans`.
Program parse_program(const std::vector<Token>& tokens);
Program parse_program(std::string_view source);

struct ExecLimits
{
    std::size_t max_steps = 100000;
    std::size_t max_list_len = 100000;
    Rational max_abs_magnitude = pow10(100);
};

struct Value
{
    enum class Kind
    {
        Number,
        Bool,
        String,
        List,
    };

    Kind kind = Kind::Number;
    Rational number;
    bool flag = false;
    std::string text;
    std::vector<Value> items;

    static Value of(Rational n);
    static Value of(bool b);
    static Value of_text(std::string s);
    static Value of_list(std::vector<Value> v);

    friend bool operator==(const Value&, const Value&) = default;
};

/// Runs the statements in a single scope and returns the final value of `ans`.
/// Pure: no I/O, no ambient state.
Value execute_program(const Program& program, const ExecLimits& limits = {});

/// tokenize + parse + execute.
Value run_program(std::string_view source, const ExecLimits& limits = {});

/// Numbers at 12 significant digits, booleans as True/False, lists and
/// strings as Python literals.
std::string render_value(const Value& value);

} // namespace tabreason
