// SPDX-License-Identifier: Apache-2.0
#include "tabreason/program.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace tabreason
{

std::string_view to_string(ProgramErrorKind kind)
{
    switch (kind)
    {
        case ProgramErrorKind::LexError: return "LexError";
        case ProgramErrorKind::SyntaxError: return "SyntaxError";
        case ProgramErrorKind::NameError: return "NameError";
        case ProgramErrorKind::DivByZero: return "DivByZero";
        case ProgramErrorKind::LimitExceeded: return "LimitExceeded";
        case ProgramErrorKind::TypeMismatch: return "TypeMismatch";
        case ProgramErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    }
    return "";
}

namespace
{

std::string describe(ProgramErrorKind kind, const std::string& message, std::size_t line, std::size_t column)
{
    std::string out(to_string(kind));
    if (line)
        out += " at " + std::to_string(line) + ":" + std::to_string(column);
    if (!message.empty())
        out += ": " + message;
    return out;
}

} // namespace

ProgramError::ProgramError(ProgramErrorKind kind, std::string message, std::size_t line, std::size_t column):
    Error(describe(kind, message, line, column)),
    kind_(kind),
    line_(line),
    column_(column)
{
}

// ---------------------------------------------------------------------------
// lexer

namespace
{

const std::set<std::string, std::less<>> keywords {
    "if",     "elif",  "else",  "and",    "or",    "not",  "True",     "False",  "None",   "import",
    "from",   "def",   "for",   "while",  "return", "lambda", "class", "in",     "is",     "with",
    "try",    "except", "pass", "break",  "continue", "global", "yield", "assert", "del", "raise",
};

bool is_keyword(std::string_view name)
{
    return keywords.find(name) != keywords.end();
}

bool is_name_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_digit(char c)
{
    return c >= '0' && c <= '9';
}

class Lexer
{
  public:
    explicit Lexer(std::string_view src): src_(src) { }

    std::vector<Token> run()
    {
        indents_.push_back(0);
        bool line_start = true;
        while (pos_ < src_.size())
        {
            if (line_start && brackets_.empty())
            {
                line_start = false;
                if (skip_blank_line())
                {
                    line_start = true;
                    continue;
                }
                indent();
            }
            char c = peek();
            if (c == '\n')
            {
                if (brackets_.empty())
                {
                    push(TokenKind::Newline);
                    line_start = true;
                }
                advance();
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r' || c == '\f')
            {
                advance();
                continue;
            }
            if (c == '#')
            {
                while (pos_ < src_.size() && peek() != '\n')
                    advance();
                continue;
            }
            if (c == '\\' && peek(1) == '\n')
            {
                advance();
                advance();
                continue;
            }
            mark();
            if (is_digit(c) || (c == '.' && is_digit(peek(1))))
                lex_number();
            else if (is_name_start(c))
                lex_name();
            else if (c == '\'' || c == '"')
                lex_string(c);
            else
                lex_operator();
        }
        if (!brackets_.empty())
            fail("unclosed bracket");
        if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline && tokens_.back().kind != TokenKind::Dedent)
            push(TokenKind::Newline);
        while (indents_.size() > 1)
        {
            indents_.pop_back();
            push(TokenKind::Dedent);
        }
        push(TokenKind::End);
        return std::move(tokens_);
    }

  private:
    enum class Bracket
    {
        List,
        Index,
        Call,
        Group,
    };

    struct Open
    {
        Bracket kind;
        bool grouping; ///< digit-group commas allowed directly inside
    };

    [[noreturn]] void fail(const std::string& message) const
    {
        throw ProgramError(ProgramErrorKind::LexError, message, line_, column_);
    }

    char peek(std::size_t offset = 0) const
    {
        return pos_ + offset < src_.size() ? src_[pos_ + offset] : '\0';
    }

    void advance()
    {
        if (src_[pos_] == '\n')
        {
            ++line_;
            column_ = 1;
        }
        else
            ++column_;
        ++pos_;
    }

    void mark()
    {
        tok_line_ = line_;
        tok_column_ = column_;
    }

    Token& push(TokenKind kind, std::string text = {})
    {
        Token t;
        t.kind = kind;
        t.text = std::move(text);
        bool structural = kind == TokenKind::Newline || kind == TokenKind::Indent || kind == TokenKind::Dedent
                          || kind == TokenKind::End;
        t.line = structural ? line_ : tok_line_;
        t.column = structural ? column_ : tok_column_;
        tokens_.push_back(std::move(t));
        return tokens_.back();
    }

    // Consumes a whitespace-only or comment-only line including its newline.
    bool skip_blank_line()
    {
        std::size_t p = pos_;
        while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\r' || src_[p] == '\f'))
            ++p;
        if (p < src_.size() && src_[p] != '\n' && src_[p] != '#')
            return false;
        while (pos_ < src_.size() && peek() != '\n')
            advance();
        if (pos_ < src_.size())
            advance();
        return true;
    }

    void indent()
    {
        std::size_t width = 0;
        while (peek() == ' ' || peek() == '\t')
        {
            width += peek() == '\t' ? 8 - width % 8 : 1;
            advance();
        }
        if (width > indents_.back())
        {
            indents_.push_back(width);
            push(TokenKind::Indent);
            return;
        }
        while (width < indents_.back())
        {
            indents_.pop_back();
            push(TokenKind::Dedent);
        }
        if (width != indents_.back())
            fail("inconsistent dedent");
    }

    bool grouping_allowed() const
    {
        return brackets_.empty() || brackets_.back().grouping;
    }

    bool previous_is_operand() const
    {
        if (tokens_.empty())
            return false;
        const auto& t = tokens_.back();
        switch (t.kind)
        {
            case TokenKind::Name: return !is_keyword(t.text) || t.text == "True" || t.text == "False";
            case TokenKind::Number:
            case TokenKind::String: return true;
            case TokenKind::Op: return t.text == ")" || t.text == "]";
            default: return false;
        }
    }

    void lex_number()
    {
        std::string literal;
        auto take_digits = [&] {
            while (is_digit(peek()))
            {
                literal += peek();
                advance();
            }
        };
        take_digits();
        // digit groups of exactly three, only in the integer part
        while (!literal.empty() && literal.find('.') == std::string::npos && peek() == ',' && grouping_allowed()
               && is_digit(peek(1)) && is_digit(peek(2)) && is_digit(peek(3)) && !is_digit(peek(4)))
        {
            advance();
            take_digits();
        }
        if (peek() == '.')
        {
            literal += '.';
            advance();
            take_digits();
        }
        if ((peek() == 'e' || peek() == 'E')
            && (is_digit(peek(1)) || ((peek(1) == '+' || peek(1) == '-') && is_digit(peek(2)))))
        {
            literal += 'e';
            advance();
            if (peek() == '+' || peek() == '-')
            {
                literal += peek();
                advance();
            }
            take_digits();
        }
        if (is_name_char(peek()) || peek() == '.')
            fail("malformed number");
        auto value = parse_decimal(literal);
        if (!value)
            fail("malformed number");
        auto& t = push(TokenKind::Number, literal);
        t.number = *value;
    }

    void lex_name()
    {
        std::string name;
        while (is_name_char(peek()))
        {
            name += peek();
            advance();
        }
        push(TokenKind::Name, std::move(name));
    }

    void lex_string(char quote)
    {
        advance();
        std::string text;
        while (true)
        {
            char c = peek();
            if (c == '\0' && pos_ >= src_.size())
                fail("unterminated string");
            if (c == '\n')
                fail("unterminated string");
            advance();
            if (c == quote)
                break;
            if (c == '\\')
            {
                char e = peek();
                if (pos_ >= src_.size())
                    fail("unterminated string");
                advance();
                switch (e)
                {
                    case 'n': text += '\n'; break;
                    case 't': text += '\t'; break;
                    case '\\':
                    case '\'':
                    case '"': text += e; break;
                    default:
                        text += '\\';
                        text += e;
                }
                continue;
            }
            text += c;
        }
        push(TokenKind::String, std::move(text));
    }

    void lex_operator()
    {
        static const std::vector<std::string_view> ops {
            "**=", "//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=",
            "+",   "-",   "*",  "/",  "%",  "<",  ">",  "=",  "(",  ")",  "[",  "]",  ",",  ":",  ".",
        };
        for (auto op: ops)
        {
            if (src_.substr(pos_, op.size()) != op)
                continue;
            if (op == "(" || op == "[")
            {
                Bracket kind;
                if (op == "(")
                    kind = !tokens_.empty() && tokens_.back().kind == TokenKind::Name && !is_keyword(tokens_.back().text)
                               ? Bracket::Call
                               : Bracket::Group;
                else
                    kind = previous_is_operand() ? Bracket::Index : Bracket::List;
                brackets_.push_back(Open {kind, kind == Bracket::Group && grouping_allowed()});
            }
            else if (op == ")" || op == "]")
            {
                if (brackets_.empty())
                    fail("unmatched '" + std::string(op) + "'");
                bool paren = brackets_.back().kind == Bracket::Call || brackets_.back().kind == Bracket::Group;
                if (paren != (op == ")"))
                    fail("mismatched '" + std::string(op) + "'");
                brackets_.pop_back();
            }
            for (std::size_t i = 0; i < op.size(); ++i)
                advance();
            push(TokenKind::Op, std::string(op));
            return;
        }
        fail(std::string("unexpected character '") + peek() + "'");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
    std::size_t tok_line_ = 1;
    std::size_t tok_column_ = 1;
    std::vector<std::size_t> indents_;
    std::vector<Open> brackets_;
    std::vector<Token> tokens_;
};

// ---------------------------------------------------------------------------
// parser

const std::set<std::string, std::less<>> builtins {"sum", "len", "sorted", "min", "max", "abs", "round"};

const std::set<std::string, std::less<>> rejected {
    "import", "from", "def", "for", "while", "return", "lambda", "class", "with", "try", "except",
    "pass", "break", "continue", "global", "yield", "assert", "del", "raise", "in", "is", "None",
};

using ast::Expr;
using ast::ExprKind;
using ast::ExprPtr;
using ast::Stmt;
using ast::StmtKind;
using ast::StmtPtr;

class Parser
{
  public:
    explicit Parser(const std::vector<Token>& tokens): tokens_(tokens)
    {
        if (tokens_.empty() || tokens_.back().kind != TokenKind::End)
            throw ProgramError(ProgramErrorKind::SyntaxError, "token stream not terminated");
    }

    Program run()
    {
        Program program;
        while (at(TokenKind::Newline))
            ++pos_;
        while (!at(TokenKind::End))
        {
            if (at(TokenKind::Indent))
                fail("unexpected indent");
            program.statements.push_back(statement());
        }
        if (!assigns_ans_)
            throw ProgramError(ProgramErrorKind::SyntaxError, "program never assigns 'ans'");
        return program;
    }

  private:
    [[noreturn]] void fail(const std::string& expected) const
    {
        const auto& t = cur();
        std::string found;
        switch (t.kind)
        {
            case TokenKind::End: found = "end of input"; break;
            case TokenKind::Newline: found = "end of line"; break;
            case TokenKind::Indent: found = "indent"; break;
            case TokenKind::Dedent: found = "dedent"; break;
            case TokenKind::String: found = "string"; break;
            default: found = "'" + t.text + "'";
        }
        throw ProgramError(ProgramErrorKind::SyntaxError, "expected " + expected + ", found " + found, t.line, t.column);
    }

    const Token& cur() const { return tokens_[pos_]; }
    bool at(TokenKind kind) const { return cur().kind == kind; }
    bool at_op(std::string_view op) const { return cur().kind == TokenKind::Op && cur().text == op; }
    bool at_word(std::string_view word) const { return cur().kind == TokenKind::Name && cur().text == word; }

    const Token& take()
    {
        const auto& t = tokens_[pos_];
        if (t.kind != TokenKind::End)
            ++pos_;
        return t;
    }

    void expect_op(std::string_view op)
    {
        if (!at_op(op))
            fail("'" + std::string(op) + "'");
        ++pos_;
    }

    void expect(TokenKind kind, const std::string& what)
    {
        if (!at(kind))
            fail(what);
        ++pos_;
    }

    std::shared_ptr<Expr> node(ExprKind kind, const Token& at)
    {
        auto e = std::make_shared<Expr>();
        e->kind = kind;
        e->line = at.line;
        e->column = at.column;
        return e;
    }

    // statements

    StmtPtr statement()
    {
        if (at_word("if"))
            return if_statement();
        auto s = simple_statement();
        expect(TokenKind::Newline, "end of line");
        return s;
    }

    StmtPtr simple_statement()
    {
        const auto& t = cur();
        if (t.kind != TokenKind::Name)
            fail("statement");
        if (rejected.count(t.text))
            fail("assignment or if statement ('" + t.text + "' is not supported)");
        if (is_keyword(t.text))
            fail("assignment target");
        ++pos_;
        if (at_op("."))
            fail("assignment (attribute access is not supported)");
        static const std::set<std::string, std::less<>> assign_ops {"=", "+=", "-=", "*=", "/=", "//=", "%=", "**="};
        if (!at(TokenKind::Op) || !assign_ops.count(cur().text))
            fail("'='");
        auto s = std::make_shared<Stmt>();
        s->kind = StmtKind::Assign;
        s->target = t.text;
        s->op = take().text;
        s->line = t.line;
        s->value = expression();
        if (s->target == "ans")
            assigns_ans_ = true;
        return s;
    }

    std::vector<StmtPtr> suite()
    {
        expect_op(":");
        std::vector<StmtPtr> body;
        if (!at(TokenKind::Newline))
        {
            body.push_back(simple_statement());
            expect(TokenKind::Newline, "end of line");
            return body;
        }
        ++pos_;
        expect(TokenKind::Indent, "indented block");
        while (!at(TokenKind::Dedent) && !at(TokenKind::End))
            body.push_back(statement());
        expect(TokenKind::Dedent, "dedent");
        return body;
    }

    StmtPtr if_statement()
    {
        auto s = std::make_shared<Stmt>();
        s->kind = StmtKind::If;
        s->line = cur().line;
        ++pos_;
        auto cond = expression();
        s->branches.push_back(ast::Branch {cond, suite()});
        while (at_word("elif"))
        {
            ++pos_;
            auto c = expression();
            s->branches.push_back(ast::Branch {c, suite()});
        }
        if (at_word("else"))
        {
            ++pos_;
            s->branches.push_back(ast::Branch {nullptr, suite()});
        }
        return s;
    }

    // expressions, lowest precedence first

    ExprPtr expression()
    {
        const auto& start = cur();
        auto value = or_expr();
        if (!at_word("if"))
            return value;
        ++pos_;
        auto cond = or_expr();
        if (!at_word("else"))
            fail("'else'");
        ++pos_;
        auto other = expression();
        auto e = node(ExprKind::Ternary, start);
        e->operands = {value, cond, other};
        return e;
    }

    ExprPtr or_expr()
    {
        auto left = and_expr();
        while (at_word("or"))
        {
            const auto& t = take();
            auto e = node(ExprKind::Or, t);
            e->operands = {left, and_expr()};
            left = e;
        }
        return left;
    }

    ExprPtr and_expr()
    {
        auto left = not_expr();
        while (at_word("and"))
        {
            const auto& t = take();
            auto e = node(ExprKind::And, t);
            e->operands = {left, not_expr()};
            left = e;
        }
        return left;
    }

    ExprPtr not_expr()
    {
        if (at_word("not"))
        {
            const auto& t = take();
            auto e = node(ExprKind::Unary, t);
            e->op = "not";
            e->operands = {not_expr()};
            return e;
        }
        return comparison();
    }

    ExprPtr comparison()
    {
        static const std::set<std::string, std::less<>> cmp {"<", "<=", ">", ">=", "==", "!="};
        const auto& start = cur();
        auto first = arith();
        if (!(at(TokenKind::Op) && cmp.count(cur().text)))
            return first;
        auto e = node(ExprKind::Compare, start);
        e->operands.push_back(first);
        while (at(TokenKind::Op) && cmp.count(cur().text))
        {
            e->ops.push_back(take().text);
            e->operands.push_back(arith());
        }
        return e;
    }

    ExprPtr arith()
    {
        auto left = term();
        while (at_op("+") || at_op("-"))
        {
            const auto& t = take();
            auto e = node(ExprKind::Binary, t);
            e->op = t.text;
            e->operands = {left, term()};
            left = e;
        }
        return left;
    }

    ExprPtr term()
    {
        auto left = factor();
        while (at_op("*") || at_op("/") || at_op("//") || at_op("%"))
        {
            const auto& t = take();
            auto e = node(ExprKind::Binary, t);
            e->op = t.text;
            e->operands = {left, factor()};
            left = e;
        }
        return left;
    }

    ExprPtr factor()
    {
        if (at_op("-") || at_op("+"))
        {
            const auto& t = take();
            auto e = node(ExprKind::Unary, t);
            e->op = t.text;
            e->operands = {factor()};
            return e;
        }
        return power();
    }

    ExprPtr power()
    {
        auto base = postfix();
        if (!at_op("**"))
            return base;
        const auto& t = take();
        auto e = node(ExprKind::Binary, t);
        e->op = "**";
        e->operands = {base, factor()};
        return e;
    }

    ExprPtr postfix()
    {
        auto value = atom();
        while (true)
        {
            if (at_op("["))
                value = subscript(value);
            else if (at_op("("))
                fail("operator (only sum, len, sorted, min, max, abs and round can be called)");
            else if (at_op("."))
                fail("operator (attribute access is not supported)");
            else
                return value;
        }
    }

    ExprPtr subscript(ExprPtr object)
    {
        const auto& open = take();
        ExprPtr parts[3];
        int colons = 0;
        for (int i = 0; i < 3; ++i)
        {
            if (!at_op(":") && !at_op("]"))
                parts[i] = expression();
            if (i < 2 && at_op(":"))
            {
                ++pos_;
                ++colons;
                continue;
            }
            break;
        }
        expect_op("]");
        if (colons == 0)
        {
            if (!parts[0])
                fail("index expression");
            auto e = node(ExprKind::Index, open);
            e->operands = {object, parts[0]};
            return e;
        }
        auto e = node(ExprKind::Slice, open);
        e->operands = {object, parts[0], parts[1], parts[2]};
        return e;
    }

    ExprPtr call(const Token& name)
    {
        auto e = node(ExprKind::Call, name);
        e->name = name.text;
        expect_op("(");
        while (!at_op(")"))
        {
            if (at(TokenKind::Name) && tokens_[pos_ + 1].kind == TokenKind::Op && tokens_[pos_ + 1].text == "=")
            {
                if (cur().text != "reverse" || e->name != "sorted" || e->reverse)
                    fail("argument ('" + cur().text + "=' is not accepted here)");
                pos_ += 2;
                e->reverse = expression();
            }
            else
            {
                if (e->reverse)
                    fail("keyword argument");
                e->operands.push_back(expression());
            }
            if (!at_op(","))
                break;
            ++pos_;
        }
        expect_op(")");
        return e;
    }

    ExprPtr list_literal()
    {
        const auto& open = take();
        auto e = node(ExprKind::List, open);
        while (!at_op("]"))
        {
            if (at(TokenKind::String)
                && (tokens_[pos_ + 1].kind == TokenKind::Op
                    && (tokens_[pos_ + 1].text == "," || tokens_[pos_ + 1].text == "]")))
            {
                const auto& t = take();
                auto s = node(ExprKind::String, t);
                s->name = t.text;
                e->operands.push_back(s);
            }
            else
                e->operands.push_back(expression());
            if (!at_op(","))
                break;
            ++pos_;
        }
        expect_op("]");
        return e;
    }

    ExprPtr atom()
    {
        const auto& t = cur();
        switch (t.kind)
        {
            case TokenKind::Number: {
                ++pos_;
                auto e = node(ExprKind::Number, t);
                e->number = t.number;
                return e;
            }
            case TokenKind::String: fail("expression (strings are only allowed as list elements)");
            case TokenKind::Name: {
                if (t.text == "True" || t.text == "False")
                {
                    ++pos_;
                    auto e = node(ExprKind::Bool, t);
                    e->flag = t.text == "True";
                    return e;
                }
                if (is_keyword(t.text))
                    fail("expression");
                ++pos_;
                if (at_op("("))
                {
                    if (!builtins.count(t.text))
                        fail("operator ('" + t.text + "' is not a callable builtin)");
                    return call(t);
                }
                auto e = node(ExprKind::Name, t);
                e->name = t.text;
                return e;
            }
            case TokenKind::Op:
                if (t.text == "(")
                {
                    ++pos_;
                    auto inner = expression();
                    expect_op(")");
                    return inner;
                }
                if (t.text == "[")
                    return list_literal();
                break;
            default: break;
        }
        fail("expression");
    }

    const std::vector<Token>& tokens_;
    std::size_t pos_ = 0;
    bool assigns_ans_ = false;
};

// ---------------------------------------------------------------------------
// evaluator

constexpr unsigned max_bits = 16384;

class Evaluator
{
  public:
    explicit Evaluator(const ExecLimits& limits): limits_(limits) { }

    Value run(const Program& program)
    {
        block(program.statements);
        auto it = scope_.find("ans");
        if (it == scope_.end())
            throw ProgramError(ProgramErrorKind::NameError, "'ans' was never assigned");
        return it->second;
    }

  private:
    [[noreturn]] static void fail(ProgramErrorKind kind, const std::string& message, const Expr& at)
    {
        throw ProgramError(kind, message, at.line, at.column);
    }

    void tick(const Expr& at)
    {
        if (++steps_ > limits_.max_steps)
            fail(ProgramErrorKind::LimitExceeded, "step limit reached", at);
    }

    static std::string_view kind_name(const Value& v)
    {
        switch (v.kind)
        {
            case Value::Kind::Number: return "number";
            case Value::Kind::Bool: return "bool";
            case Value::Kind::String: return "string";
            case Value::Kind::List: return "list";
        }
        return "";
    }

    static bool numeric(const Value& v) { return v.kind == Value::Kind::Number || v.kind == Value::Kind::Bool; }

    static Rational as_number(const Value& v, const Expr& at)
    {
        if (v.kind == Value::Kind::Number)
            return v.number;
        if (v.kind == Value::Kind::Bool)
            return Rational(v.flag ? 1 : 0);
        fail(ProgramErrorKind::TypeMismatch, "expected a number, got " + std::string(kind_name(v)), at);
    }

    static bool is_integer(const Rational& r) { return denominator(r) == 1; }

    static long long as_int(const Value& v, const Expr& at, const char* what)
    {
        auto r = as_number(v, at);
        if (!is_integer(r))
            fail(ProgramErrorKind::TypeMismatch, std::string(what) + " must be an integer", at);
        BigInt n = numerator(r);
        if (abs(n) > BigInt(limits_cap()))
            fail(ProgramErrorKind::LimitExceeded, std::string(what) + " too large", at);
        return n.convert_to<long long>();
    }

    static long long limits_cap() { return 1LL << 40; }

    Value number(Rational r, const Expr& at) const
    {
        if (abs(r) > limits_.max_abs_magnitude)
            fail(ProgramErrorKind::LimitExceeded, "magnitude bound exceeded", at);
        if (!is_zero(r) && (msb(abs(numerator(r))) > max_bits || msb(denominator(r)) > max_bits))
            fail(ProgramErrorKind::LimitExceeded, "precision bound exceeded", at);
        return Value::of(std::move(r));
    }

    static bool is_zero(const Rational& r) { return r.is_zero(); }

    Value list(std::vector<Value> items, const Expr& at) const
    {
        if (items.size() > limits_.max_list_len)
            fail(ProgramErrorKind::LimitExceeded, "list length bound exceeded", at);
        return Value::of_list(std::move(items));
    }

    static bool truthy(const Value& v)
    {
        switch (v.kind)
        {
            case Value::Kind::Number: return !v.number.is_zero();
            case Value::Kind::Bool: return v.flag;
            case Value::Kind::String: return !v.text.empty();
            case Value::Kind::List: return !v.items.empty();
        }
        return false;
    }

    void block(const std::vector<StmtPtr>& statements)
    {
        for (const auto& s: statements)
            statement(*s);
    }

    void statement(const Stmt& s)
    {
        if (s.kind == StmtKind::If)
        {
            for (const auto& branch: s.branches)
            {
                if (!branch.condition || truthy(eval(*branch.condition)))
                {
                    block(branch.body);
                    return;
                }
            }
            return;
        }
        auto value = eval(*s.value);
        if (s.op != "=")
        {
            auto it = scope_.find(s.target);
            if (it == scope_.end())
                fail(ProgramErrorKind::NameError, "name '" + s.target + "' is not defined", *s.value);
            value = binary(s.op.substr(0, s.op.size() - 1), it->second, value, *s.value);
        }
        scope_.insert_or_assign(s.target, std::move(value));
    }

    Value binary(const std::string& op, const Value& a, const Value& b, const Expr& at)
    {
        if (op == "+" && a.kind == Value::Kind::List && b.kind == Value::Kind::List)
        {
            auto items = a.items;
            items.insert(items.end(), b.items.begin(), b.items.end());
            return list(std::move(items), at);
        }
        if (!numeric(a) || !numeric(b))
            fail(ProgramErrorKind::TypeMismatch,
                 "unsupported operands for " + op + ": " + std::string(kind_name(a)) + " and " + std::string(kind_name(b)),
                 at);
        Rational x = as_number(a, at);
        Rational y = as_number(b, at);
        if (op == "+")
            return number(x + y, at);
        if (op == "-")
            return number(x - y, at);
        if (op == "*")
            return number(x * y, at);
        if (op == "/" || op == "//" || op == "%")
        {
            if (y.is_zero())
                fail(ProgramErrorKind::DivByZero, "division by zero", at);
            if (op == "/")
                return number(x / y, at);
            Rational q(floor_div(x / y));
            if (op == "//")
                return number(q, at);
            return number(x - y * q, at);
        }
        if (op == "**")
            return power(x, y, at);
        fail(ProgramErrorKind::TypeMismatch, "unknown operator " + op, at);
    }

    Value power(const Rational& base, const Rational& exponent, const Expr& at)
    {
        if (!is_integer(exponent))
            fail(ProgramErrorKind::TypeMismatch, "exponent must be an integer", at);
        BigInt e = numerator(exponent);
        bool negative = e < 0;
        if (negative)
            e = -e;
        if (base.is_zero())
        {
            if (negative)
                fail(ProgramErrorKind::DivByZero, "zero raised to a negative power", at);
            return number(Rational(e == 0 ? 1 : 0), at);
        }
        if (abs(base) == 1)
        {
            bool odd = (e & 1) != 0;
            return number(Rational(base < 0 && odd ? -1 : 1), at);
        }
        unsigned bits = std::max(msb(abs(numerator(base))), msb(denominator(base))) + 1;
        if (e > BigInt(max_bits) || static_cast<unsigned long long>(e.convert_to<unsigned long long>()) * bits > max_bits)
            fail(ProgramErrorKind::LimitExceeded, "power too large", at);
        auto n = e.convert_to<unsigned>();
        BigInt num = pow(BigInt(numerator(base)), n);
        BigInt den = pow(BigInt(denominator(base)), n);
        Rational result(num, den);
        if (negative)
            result = Rational(1) / result;
        return number(std::move(result), at);
    }

    static int compare_values(const Value& a, const Value& b, const Expr& at)
    {
        if (numeric(a) && numeric(b))
        {
            auto x = as_number(a, at);
            auto y = as_number(b, at);
            return x < y ? -1 : (y < x ? 1 : 0);
        }
        if (a.kind == Value::Kind::String && b.kind == Value::Kind::String)
            return a.text < b.text ? -1 : (b.text < a.text ? 1 : 0);
        if (a.kind == Value::Kind::List && b.kind == Value::Kind::List)
        {
            for (std::size_t i = 0; i < std::min(a.items.size(), b.items.size()); ++i)
                if (int c = compare_values(a.items[i], b.items[i], at))
                    return c;
            return a.items.size() < b.items.size() ? -1 : (b.items.size() < a.items.size() ? 1 : 0);
        }
        fail(ProgramErrorKind::TypeMismatch,
             "cannot order " + std::string(kind_name(a)) + " and " + std::string(kind_name(b)), at);
    }

    static bool equal_values(const Value& a, const Value& b, const Expr& at)
    {
        if (numeric(a) && numeric(b))
            return as_number(a, at) == as_number(b, at);
        if (a.kind != b.kind)
            return false;
        if (a.kind == Value::Kind::String)
            return a.text == b.text;
        if (a.items.size() != b.items.size())
            return false;
        for (std::size_t i = 0; i < a.items.size(); ++i)
            if (!equal_values(a.items[i], b.items[i], at))
                return false;
        return true;
    }

    static bool compare(const std::string& op, const Value& a, const Value& b, const Expr& at)
    {
        if (op == "==")
            return equal_values(a, b, at);
        if (op == "!=")
            return !equal_values(a, b, at);
        int c = compare_values(a, b, at);
        if (op == "<")
            return c < 0;
        if (op == "<=")
            return c <= 0;
        if (op == ">")
            return c > 0;
        return c >= 0;
    }

    Value eval(const Expr& e)
    {
        tick(e);
        switch (e.kind)
        {
            case ExprKind::Number: return number(e.number, e);
            case ExprKind::String: return Value::of_text(e.name);
            case ExprKind::Bool: return Value::of(e.flag);
            case ExprKind::Name: {
                auto it = scope_.find(e.name);
                if (it == scope_.end())
                    fail(ProgramErrorKind::NameError, "name '" + e.name + "' is not defined", e);
                return it->second;
            }
            case ExprKind::Unary: {
                auto v = eval(*e.operands[0]);
                if (e.op == "not")
                    return Value::of(!truthy(v));
                auto x = as_number(v, e);
                return number(e.op == "-" ? Rational(-x) : x, e);
            }
            case ExprKind::Binary: {
                auto a = eval(*e.operands[0]);
                auto b = eval(*e.operands[1]);
                return binary(e.op, a, b, e);
            }
            case ExprKind::Compare: {
                auto left = eval(*e.operands[0]);
                for (std::size_t i = 0; i < e.ops.size(); ++i)
                {
                    auto right = eval(*e.operands[i + 1]);
                    if (!compare(e.ops[i], left, right, e))
                        return Value::of(false);
                    left = std::move(right);
                }
                return Value::of(true);
            }
            case ExprKind::And: {
                auto a = eval(*e.operands[0]);
                return truthy(a) ? eval(*e.operands[1]) : a;
            }
            case ExprKind::Or: {
                auto a = eval(*e.operands[0]);
                return truthy(a) ? a : eval(*e.operands[1]);
            }
            case ExprKind::Ternary:
                return truthy(eval(*e.operands[1])) ? eval(*e.operands[0]) : eval(*e.operands[2]);
            case ExprKind::List: {
                std::vector<Value> items;
                items.reserve(e.operands.size());
                for (const auto& item: e.operands)
                    items.push_back(eval(*item));
                return list(std::move(items), e);
            }
            case ExprKind::Index: return index(e);
            case ExprKind::Slice: return slice(e);
            case ExprKind::Call: return call(e);
        }
        fail(ProgramErrorKind::TypeMismatch, "unknown expression", e);
    }

    const std::vector<Value>& sequence(const Value& v, const Expr& at)
    {
        if (v.kind != Value::Kind::List)
            fail(ProgramErrorKind::TypeMismatch, std::string(kind_name(v)) + " is not a list", at);
        return v.items;
    }

    Value index(const Expr& e)
    {
        auto object = eval(*e.operands[0]);
        const auto& items = sequence(object, e);
        auto i = as_int(eval(*e.operands[1]), e, "index");
        auto size = static_cast<long long>(items.size());
        if (i < 0)
            i += size;
        if (i < 0 || i >= size)
            fail(ProgramErrorKind::IndexOutOfRange, "index out of range", e);
        return items[static_cast<std::size_t>(i)];
    }

    Value slice(const Expr& e)
    {
        auto object = eval(*e.operands[0]);
        const auto& items = sequence(object, e);
        auto size = static_cast<long long>(items.size());
        long long step = 1;
        if (e.operands[3])
            step = as_int(eval(*e.operands[3]), e, "slice step");
        if (step == 0)
            fail(ProgramErrorKind::TypeMismatch, "slice step cannot be zero", e);
        auto bound = [&](const ExprPtr& part, long long fallback) {
            if (!part)
                return fallback;
            auto i = as_int(eval(*part), e, "slice index");
            if (i < 0)
                i += size;
            if (step > 0)
                return std::clamp(i, 0LL, size);
            return std::clamp(i, -1LL, size - 1);
        };
        long long lo = bound(e.operands[1], step > 0 ? 0 : size - 1);
        long long hi = bound(e.operands[2], step > 0 ? size : -1);
        std::vector<Value> out;
        for (long long i = lo; step > 0 ? i < hi : i > hi; i += step)
            out.push_back(items[static_cast<std::size_t>(i)]);
        return list(std::move(out), e);
    }

    void arity(const Expr& e, std::size_t lo, std::size_t hi) const
    {
        auto n = e.operands.size();
        if (n < lo || n > hi)
            fail(ProgramErrorKind::TypeMismatch, e.name + "() takes " + std::to_string(lo)
                                                      + (hi == lo ? "" : " to " + std::to_string(hi)) + " arguments",
                 e);
    }

    Value call(const Expr& e)
    {
        std::vector<Value> args;
        for (const auto& a: e.operands)
            args.push_back(eval(*a));
        const auto& name = e.name;

        if (name == "len")
        {
            arity(e, 1, 1);
            if (args[0].kind == Value::Kind::String)
                return number(Rational(args[0].text.size()), e);
            return number(Rational(sequence(args[0], e).size()), e);
        }
        if (name == "sum")
        {
            arity(e, 1, 2);
            Rational total = args.size() == 2 ? as_number(args[1], e) : Rational(0);
            for (const auto& item: sequence(args[0], e))
            {
                tick(e);
                total += as_number(item, e);
            }
            return number(std::move(total), e);
        }
        if (name == "abs")
        {
            arity(e, 1, 1);
            return number(abs(as_number(args[0], e)), e);
        }
        if (name == "round")
        {
            arity(e, 1, 2);
            int places = 0;
            if (args.size() == 2)
            {
                auto p = as_int(args[1], e, "round() digits");
                if (p > 1000 || p < -1000)
                    fail(ProgramErrorKind::LimitExceeded, "round() digits out of range", e);
                places = static_cast<int>(p);
            }
            return number(round_half_even(as_number(args[0], e), places), e);
        }
        if (name == "sorted")
        {
            arity(e, 1, 1);
            auto items = sequence(args[0], e);
            bool reverse = e.reverse ? truthy(eval(*e.reverse)) : false;
            steps_ += items.size();
            if (steps_ > limits_.max_steps)
                fail(ProgramErrorKind::LimitExceeded, "step limit reached", e);
            std::stable_sort(items.begin(), items.end(), [&](const Value& a, const Value& b) {
                return reverse ? compare_values(b, a, e) < 0 : compare_values(a, b, e) < 0;
            });
            return list(std::move(items), e);
        }
        // min / max
        if (args.empty())
            arity(e, 1, 1);
        std::vector<Value> pool = args.size() == 1 ? sequence(args[0], e) : args;
        if (pool.empty())
            fail(ProgramErrorKind::TypeMismatch, name + "() of an empty sequence", e);
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
        {
            tick(e);
            int c = compare_values(pool[i], pool[best], e);
            if ((name == "min" && c < 0) || (name == "max" && c > 0))
                best = i;
        }
        return pool[best];
    }

    const ExecLimits& limits_;
    std::map<std::string, Value, std::less<>> scope_;
    std::size_t steps_ = 0;
};

std::string quote(const std::string& text)
{
    std::string out = "'";
    for (char c: text)
    {
        switch (c)
        {
            case '\\': out += "\\\\"; break;
            case '\'': out += "\\'"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + "'";
}

} // namespace

std::vector<Token> tokenize(std::string_view source)
{
    return Lexer(source).run();
}

Program parse_program(const std::vector<Token>& tokens)
{
    return Parser(tokens).run();
}

Program parse_program(std::string_view source)
{
    return parse_program(tokenize(source));
}

Value Value::of(Rational n)
{
    Value v;
    v.kind = Kind::Number;
    v.number = std::move(n);
    return v;
}

Value Value::of(bool b)
{
    Value v;
    v.kind = Kind::Bool;
    v.flag = b;
    return v;
}

Value Value::of_text(std::string s)
{
    Value v;
    v.kind = Kind::String;
    v.text = std::move(s);
    return v;
}

Value Value::of_list(std::vector<Value> items)
{
    Value v;
    v.kind = Kind::List;
    v.items = std::move(items);
    return v;
}

Value execute_program(const Program& program, const ExecLimits& limits)
{
    if (limits.max_steps == 0 || limits.max_list_len == 0 || limits.max_abs_magnitude <= 0)
        throw Error("execution limits must be positive");
    return Evaluator(limits).run(program);
}

Value run_program(std::string_view source, const ExecLimits& limits)
{
    return execute_program(parse_program(source), limits);
}

std::string render_value(const Value& value)
{
    switch (value.kind)
    {
        case Value::Kind::Number: return format_significant(value.number);
        case Value::Kind::Bool: return value.flag ? "True" : "False";
        case Value::Kind::String: return quote(value.text);
        case Value::Kind::List: {
            std::string out = "[";
            for (std::size_t i = 0; i < value.items.size(); ++i)
            {
                if (i)
                    out += ", ";
                out += render_value(value.items[i]);
            }
            return out + "]";
        }
    }
    return "";
}

} // namespace tabreason
