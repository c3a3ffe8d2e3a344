#pragma once

// Text grammar for expressions (parse + print, round-trip exact):
//   identifiers  [a-zA-Z][a-zA-Z0-9]*
//   jet coords   w_x, w_xy, w_tt   (underscore + index letters, sorted in
//                declaration order of the independent variables)
//   unknowns     xi[x,w]  = d^2 xi / dx dw;  bare "xi" when undifferentiated
//   operators    + - * / ^   functions  exp ln sin cos arctan sqrt
// Printing emits this grammar with minimal parentheses.

#include "flowsym/expr.hpp"

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace flowsym {

// ---------------------------------------------------------------------------
// printing
// ---------------------------------------------------------------------------

namespace detail {

std::string print_expr(const Expr& e);

inline std::string print_atom(const Expr& e) {
    switch (e.kind()) {
        case Kind::Symbol:
            return e.name();
        case Kind::Jet: {
            if (e.jet_indices().empty()) return e.name();
            std::string s = e.name() + "_";
            for (const auto& ix : e.jet_indices()) s += ix;
            return s;
        }
        case Kind::Unknown: {
            int total = 0;
            for (int m : e.midx()) total += m;
            if (total == 0) return e.name();
            std::string s = e.name() + "[";
            bool first = true;
            for (std::size_t i = 0; i < e.sig().size(); ++i) {
                for (int r = 0; r < e.midx()[i]; ++r) {
                    if (!first) s += ",";
                    s += print_atom(e.sig()[i]);
                    first = false;
                }
            }
            return s + "]";
        }
        case Kind::Exp:
            return "exp(" + print_expr(e.kid(0)) + ")";
        case Kind::Ln:
            return "ln(" + print_expr(e.kid(0)) + ")";
        case Kind::Sin:
            return "sin(" + print_expr(e.kid(0)) + ")";
        case Kind::Cos:
            return "cos(" + print_expr(e.kid(0)) + ")";
        case Kind::Arctan:
            return "arctan(" + print_expr(e.kid(0)) + ")";
        case Kind::Sqrt:
            return "sqrt(" + print_expr(e.kid(0)) + ")";
        case Kind::Sum:
            return "(" + print_expr(e) + ")";
        default:
            return "(" + print_expr(e) + ")";
    }
}

// one product term: positive-exponent part / negative-exponent part
inline std::string print_term(const Rational& coeff, const std::vector<Factor>& mono) {
    std::vector<std::string> num, den;
    BigInt p = numerator(coeff), q = denominator(coeff);
    if (p < 0) p = -p;  // sign handled by the caller
    for (const auto& f : mono) {
        std::string b = print_atom(f.base);
        std::int64_t k = f.exp > 0 ? f.exp : -f.exp;
        std::string s = k == 1 ? b : b + "^" + std::to_string(k);
        (f.exp > 0 ? num : den).push_back(s);
    }
    std::string ns;
    if (p != 1 || num.empty()) ns = p.str();
    for (const auto& s : num) {
        if (!ns.empty()) ns += "*";
        ns += s;
    }
    if (q != 1) den.insert(den.begin(), q.str());
    if (den.empty()) return ns;
    std::string ds;
    for (const auto& s : den) {
        if (!ds.empty()) ds += "*";
        ds += s;
    }
    if (den.size() > 1)
        ds = "(" + ds + ")";
    return ns + "/" + ds;
}

inline std::string print_expr(const Expr& e) {
    TermList terms = as_terms(e);
    if (terms.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const Term& t = terms[i];
        bool neg = t.coeff < 0;
        if (i == 0)
            out += neg ? "-" : "";
        else
            out += neg ? " - " : " + ";
        out += print_term(t.coeff, t.mono);
    }
    return out;
}

}  // namespace detail

inline std::string to_string(const Expr& e) { return detail::print_expr(e); }

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

/// Names available while parsing: jet coordinates need the dependent /
/// independent variable declarations, unknown atoms their signatures.
struct ParseContext {
    std::vector<std::string> indep;
    std::string dep;
    std::map<std::string, std::vector<std::string>> unknowns;

    bool is_indep(const std::string& n) const {
        for (const auto& v : indep)
            if (v == n) return true;
        return false;
    }
    int indep_pos(const std::string& n) const {
        for (std::size_t i = 0; i < indep.size(); ++i)
            if (indep[i] == n) return static_cast<int>(i);
        return -1;
    }
    /// The atom a declared name stands for inside unknown signatures.
    Expr atom_for(const std::string& n) const {
        if (n == dep && !dep.empty()) return jet(dep, {});
        return symbol(n);
    }
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line, int col)
        : std::runtime_error("parse error at " + std::to_string(line) + ":" + std::to_string(col) +
                             ": " + msg),
          line_(line),
          col_(col) {}
    int line() const { return line_; }
    int col() const { return col_; }

private:
    int line_, col_;
};

namespace detail {

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) {}

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            if (src_[pos_] == '\n') {
                ++line_;
                col_ = 1;
            } else {
                ++col_;
            }
            ++pos_;
        }
    }
    bool eof() {
        skip_ws();
        return pos_ >= src_.size();
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }
    // peek without skipping whitespace (for jet suffixes, which must be glued)
    char peek_raw() const { return pos_ < src_.size() ? src_[pos_] : '\0'; }
    char get() {
        skip_ws();
        char c = src_[pos_++];
        ++col_;
        return c;
    }
    char get_raw() {
        char c = src_[pos_++];
        ++col_;
        return c;
    }
    bool accept(char c) {
        if (peek() == c) {
            get();
            return true;
        }
        return false;
    }
    void expect(char c, const std::string& what) {
        if (!accept(c)) fail("expected '" + std::string(1, c) + "' (" + what + ")");
    }
    std::string ident() {
        skip_ws();
        if (pos_ >= src_.size() || !std::isalpha(static_cast<unsigned char>(src_[pos_])))
            fail("expected identifier");
        std::string s;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
            s += src_[pos_++];
            ++col_;
        }
        return s;
    }
    std::string raw_ident() {
        if (pos_ >= src_.size() || !std::isalpha(static_cast<unsigned char>(src_[pos_])))
            fail("expected index letters after '_'");
        std::string s;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
            s += src_[pos_++];
            ++col_;
        }
        return s;
    }
    Rational integer() {
        skip_ws();
        if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
            fail("expected number");
        std::string s;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            s += src_[pos_++];
            ++col_;
        }
        return Rational(BigInt(s));
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }

    int line() const { return line_; }
    int col() const { return col_; }

    struct Mark {
        std::size_t pos;
        int line, col;
    };
    Mark mark() const { return {pos_, line_, col_}; }
    void reset(const Mark& m) {
        pos_ = m.pos;
        line_ = m.line;
        col_ = m.col;
    }

private:
    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

class ExprParser {
public:
    ExprParser(Lexer& lx, const ParseContext& ctx) : lx_(lx), ctx_(ctx) {}

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (lx_.accept('+'))
                e = e + term();
            else if (lx_.accept('-'))
                e = e - term();
            else
                return e;
        }
    }

private:
    Expr term() {
        Expr e = unary();
        for (;;) {
            if (lx_.accept('*'))
                e = e * unary();
            else if (lx_.accept('/'))
                e = e / unary();
            else
                return e;
        }
    }

    Expr unary() {
        if (lx_.accept('-')) return -unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (lx_.accept('^')) {
            Expr ex = exponent();
            if (!ex.is_number() || !rat_is_int(ex.num())) lx_.fail("exponent must be an integer");
            return pow_int(base, rat_to_int(ex.num()));
        }
        return base;
    }

    Expr exponent() {
        if (lx_.accept('(')) {
            Expr e = expr();
            lx_.expect(')', "exponent");
            return e;
        }
        bool neg = lx_.accept('-');
        Expr n = number(lx_.integer());
        return neg ? -n : n;
    }

    Expr primary() {
        char c = lx_.peek();
        if (c == '(') {
            lx_.get();
            Expr e = expr();
            lx_.expect(')', "subexpression");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) return number(lx_.integer());
        if (!std::isalpha(static_cast<unsigned char>(c))) lx_.fail("expected expression");
        std::string id = lx_.ident();

        // function application
        if (lx_.peek_raw() == '(' || lx_.peek() == '(') {
            if (id == "exp" || id == "ln" || id == "sin" || id == "cos" || id == "arctan" ||
                id == "sqrt") {
                lx_.expect('(', "function argument");
                Expr a = expr();
                lx_.expect(')', "function argument");
                if (id == "exp") return exp_(a);
                if (id == "ln") return ln_(a);
                if (id == "sin") return sin_(a);
                if (id == "cos") return cos_(a);
                if (id == "arctan") return arctan_(a);
                return sqrt_(a);
            }
        }

        // unknown-function derivative atom: name[l1,l2,...]
        auto uit = ctx_.unknowns.find(id);
        if (lx_.peek_raw() == '[') {
            if (uit == ctx_.unknowns.end()) lx_.fail("'" + id + "' is not a declared unknown function");
            lx_.get_raw();  // consume '['
            std::vector<int> midx(uit->second.size(), 0);
            if (!lx_.accept(']')) {
                for (;;) {
                    std::string arg = lx_.ident();
                    bool found = false;
                    for (std::size_t i = 0; i < uit->second.size(); ++i) {
                        if (uit->second[i] == arg) {
                            ++midx[i];
                            found = true;
                            break;
                        }
                    }
                    if (!found)
                        lx_.fail("'" + arg + "' is not an argument of " + id);
                    if (lx_.accept(']')) break;
                    lx_.expect(',', "derivative index list");
                }
            }
            return make_unknown(id, uit->second, std::move(midx));
        }

        // jet coordinate: dep followed by glued "_letters"
        if (id == ctx_.dep && !ctx_.dep.empty()) {
            if (lx_.peek_raw() == '_') {
                lx_.get_raw();
                std::string letters = lx_.raw_ident();
                std::vector<std::string> idx;
                for (char lc : letters) {
                    std::string v(1, lc);
                    if (!ctx_.is_indep(v))
                        lx_.fail("'" + v + "' is not an independent variable");
                    idx.push_back(v);
                }
                std::sort(idx.begin(), idx.end(), [&](const std::string& a, const std::string& b) {
                    return ctx_.indep_pos(a) < ctx_.indep_pos(b);
                });
                return jet(ctx_.dep, std::move(idx));
            }
            return jet(ctx_.dep, {});
        }

        if (uit != ctx_.unknowns.end())
            return make_unknown(id, uit->second, std::vector<int>(uit->second.size(), 0));

        return symbol(id);
    }

    Expr make_unknown(const std::string& name, const std::vector<std::string>& args,
                      std::vector<int> midx) {
        std::vector<Expr> sig;
        sig.reserve(args.size());
        for (const auto& a : args) sig.push_back(ctx_.atom_for(a));
        return ufun(name, std::move(sig), std::move(midx));
    }

    Lexer& lx_;
    const ParseContext& ctx_;
};

}  // namespace detail

inline Expr parse_expr(const std::string& src, const ParseContext& ctx) {
    detail::Lexer lx(src);
    detail::ExprParser p(lx, ctx);
    Expr e = p.expr();
    if (!lx.eof()) lx.fail("unexpected trailing input");
    return e;
}

/// Parses an expression inside a larger file; stops at the clause delimiter.
inline Expr parse_expr_clause(detail::Lexer& lx, const ParseContext& ctx) {
    detail::ExprParser p(lx, ctx);
    return p.expr();
}

}  // namespace flowsym
