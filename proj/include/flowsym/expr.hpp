#pragma once

// Minimal computer-algebra kernel: immutable expression trees held in a
// canonical expanded form.  Canonicalization gives a decidable structural
// equality, which is the engine's notion of symbolic equality:
//
//   * sums and products are flattened and sorted by a fixed total order,
//     numeric parts folded exactly (rationals only, no floats);
//   * products of sums are expanded; sums over a common denominator, so an
//     expression is (expanded polynomial) * (product of sum-bases)^-k;
//   * exp is kept as one atom per additive term of its argument, with
//     integer multiples pulled into the argument, so exp(a)*exp(b) and
//     exp(a+b) coincide and e^{k w} is a single marker per integer k;
//   * sqrt(E)^2 collapses to E; sin/cos/arctan absorb the sign of their
//     argument; no further trig or radical rewriting happens here.

#include "flowsym/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flowsym {

class Expr;

enum class Kind : std::uint8_t {
    Number,
    Symbol,
    Jet,      // dependent variable or one of its derivative coordinates
    Unknown,  // derivative atom of an undetermined function, e.g. xi[x,w]
    Exp,
    Ln,
    Sin,
    Cos,
    Arctan,
    Sqrt,
    Power,
    Product,
    Sum,
};

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    Kind kind;
    Rational value;                    // Number
    std::string name;                  // Symbol; Jet: dependent name; Unknown: function name
    std::vector<std::string> indices;  // Jet: derivative letters in declaration order
    std::vector<Expr>* sig = nullptr;  // set below (vector of Expr needs complete type)
    std::vector<int> midx;             // Unknown: derivative counts per signature slot
    std::int64_t expo = 0;             // Power
    std::vector<Expr>* kids = nullptr;

    ExprNode() = default;
    ~ExprNode();
    ExprNode(const ExprNode&) = delete;
    ExprNode& operator=(const ExprNode&) = delete;
};

class SymbolicError : public std::runtime_error {
public:
    explicit SymbolicError(const std::string& what) : std::runtime_error(what) {}
};

/// Immutable handle on a canonical expression node.
class Expr {
public:
    Expr() : node_(zero_node()) {}
    explicit Expr(NodePtr n) : node_(std::move(n)) {}

    Kind kind() const { return node_->kind; }
    const Rational& num() const { return node_->value; }
    const std::string& name() const { return node_->name; }
    const std::vector<std::string>& jet_indices() const { return node_->indices; }
    const std::vector<Expr>& sig() const { return *node_->sig; }
    const std::vector<int>& midx() const { return node_->midx; }
    std::int64_t expo() const { return node_->expo; }
    const std::vector<Expr>& kids() const { return *node_->kids; }
    const Expr& kid(std::size_t i) const { return (*node_->kids)[i]; }
    std::size_t nkids() const { return node_->kids ? node_->kids->size() : 0; }

    bool is_number() const { return kind() == Kind::Number; }
    bool is_zero() const { return is_number() && num().is_zero(); }
    bool is_one() const { return is_number() && num() == 1; }

    const NodePtr& node() const { return node_; }

private:
    static const NodePtr& zero_node();
    NodePtr node_;
};

inline ExprNode::~ExprNode() {
    delete sig;
    delete kids;
}

namespace detail {

inline NodePtr make_node(Kind k) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    return n;
}

inline NodePtr make_number_node(Rational v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = Kind::Number;
    n->value = std::move(v);
    return n;
}

}  // namespace detail

inline const NodePtr& Expr::zero_node() {
    static const NodePtr z = detail::make_number_node(Rational(0));
    return z;
}

// ---------------------------------------------------------------------------
// Total order + structural equality
// ---------------------------------------------------------------------------

int expr_cmp(const Expr& a, const Expr& b);

inline int cmp_vec(const std::vector<Expr>& a, const std::vector<Expr>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        int c = expr_cmp(a[i], b[i]);
        if (c != 0) return c;
    }
    if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
    return 0;
}

inline int expr_cmp(const Expr& a, const Expr& b) {
    if (a.node() == b.node()) return 0;
    if (a.kind() != b.kind()) return static_cast<int>(a.kind()) < static_cast<int>(b.kind()) ? -1 : 1;
    switch (a.kind()) {
        case Kind::Number:
            if (a.num() == b.num()) return 0;
            return a.num() < b.num() ? -1 : 1;
        case Kind::Symbol:
            return a.name().compare(b.name()) < 0 ? -1 : (a.name() == b.name() ? 0 : 1);
        case Kind::Jet: {
            if (a.name() != b.name()) return a.name() < b.name() ? -1 : 1;
            // graded then lexicographic on derivative letters
            if (a.jet_indices().size() != b.jet_indices().size())
                return a.jet_indices().size() < b.jet_indices().size() ? -1 : 1;
            if (a.jet_indices() != b.jet_indices()) return a.jet_indices() < b.jet_indices() ? -1 : 1;
            return 0;
        }
        case Kind::Unknown: {
            if (a.name() != b.name()) return a.name() < b.name() ? -1 : 1;
            int c = cmp_vec(a.sig(), b.sig());
            if (c != 0) return c;
            int ta = 0, tb = 0;
            for (int v : a.midx()) ta += v;
            for (int v : b.midx()) tb += v;
            if (ta != tb) return ta < tb ? -1 : 1;
            if (a.midx() != b.midx()) return a.midx() < b.midx() ? -1 : 1;
            return 0;
        }
        case Kind::Exp:
        case Kind::Ln:
        case Kind::Sin:
        case Kind::Cos:
        case Kind::Arctan:
        case Kind::Sqrt:
            return expr_cmp(a.kid(0), b.kid(0));
        case Kind::Power: {
            int c = expr_cmp(a.kid(0), b.kid(0));
            if (c != 0) return c;
            if (a.expo() != b.expo()) return a.expo() < b.expo() ? -1 : 1;
            return 0;
        }
        case Kind::Product:
        case Kind::Sum:
            return cmp_vec(a.kids(), b.kids());
    }
    return 0;
}

inline bool operator==(const Expr& a, const Expr& b) { return expr_cmp(a, b) == 0; }
inline bool operator!=(const Expr& a, const Expr& b) { return expr_cmp(a, b) != 0; }

struct ExprLess {
    bool operator()(const Expr& a, const Expr& b) const { return expr_cmp(a, b) < 0; }
};

// ---------------------------------------------------------------------------
// Canonical constructors
// ---------------------------------------------------------------------------

Expr number(Rational v);
inline Expr number(long v) { return number(Rational(v)); }
Expr symbol(const std::string& name);
Expr jet(const std::string& dep, std::vector<std::string> indices);
Expr ufun(const std::string& name, std::vector<Expr> sig, std::vector<int> midx);
Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr pow_int(const Expr& base, std::int64_t k);
Expr exp_(const Expr& a);
Expr ln_(const Expr& a);
Expr sin_(const Expr& a);
Expr cos_(const Expr& a);
Expr arctan_(const Expr& a);
Expr sqrt_(const Expr& a);

inline Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
inline Expr operator-(const Expr& a, const Expr& b) { return add({a, mul({number(-1), b})}); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
inline Expr operator-(const Expr& a) { return mul({number(-1), a}); }
inline Expr operator/(const Expr& a, const Expr& b) { return mul({a, pow_int(b, -1)}); }

namespace detail {

struct Factor {
    Expr base;
    std::int64_t exp;
};

struct Term {
    Rational coeff;
    std::vector<Factor> mono;  // sorted by base, unique bases
};

using TermList = std::vector<Term>;

inline bool mono_equal(const std::vector<Factor>& a, const std::vector<Factor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].exp != b[i].exp || !(a[i].base == b[i].base)) return false;
    return true;
}

// Graded lexicographic monomial order (proper term order on the polynomial
// subring: grading and lex comparison are both additive in the exponents,
// so lead(m1*m2) = lead(m1)*lead(m2) when all exponents are nonnegative).
// Factor lists are sorted by base; missing bases count as exponent 0.
inline int mono_cmp(const std::vector<Factor>& a, const std::vector<Factor>& b) {
    std::int64_t ga = 0, gb = 0;
    for (const auto& f : a) ga += f.exp < 0 ? -f.exp : f.exp;
    for (const auto& f : b) gb += f.exp < 0 ? -f.exp : f.exp;
    if (ga != gb) return ga < gb ? -1 : 1;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (i == a.size()) {
            // base only in b: exponents (0, b.exp)
            return b[j].exp > 0 ? -1 : 1;
        }
        if (j == b.size()) {
            return a[i].exp > 0 ? 1 : -1;
        }
        int c = expr_cmp(a[i].base, b[j].base);
        if (c < 0) return a[i].exp > 0 ? 1 : -1;  // a has the smaller base
        if (c > 0) return b[j].exp > 0 ? -1 : 1;
        if (a[i].exp != b[j].exp) return a[i].exp > b[j].exp ? 1 : -1;
        ++i;
        ++j;
    }
    return 0;
}

Expr rebuild(TermList terms);
TermList as_terms(const Expr& e);
TermList mul_termlists(const TermList& a, const TermList& b);

// Accumulates factors of one product term, maintaining the kernel rules
// (exp-argument accumulation, sqrt collapsing, power flattening).
struct FactorAcc {
    Rational coeff = Rational(1);
    std::map<Expr, std::int64_t, ExprLess> bases;
    TermList exp_arg;  // running sum of exponential arguments

    void push_expr(const Expr& e, std::int64_t k);
    void push_base(const Expr& base, std::int64_t k) {
        auto it = bases.find(base);
        if (it == bases.end()) {
            if (k != 0) bases.emplace(base, k);
        } else {
            it->second += k;
            if (it->second == 0) bases.erase(it);
        }
    }
    // Returns the factors of this term (coeff excluded), resolving sqrt
    // parity and exponential merging.  May carry sum-bases with any sign.
    std::vector<Factor> finish();
};

inline TermList one_term(Rational c, std::vector<Factor> mono = {}) {
    if (c.is_zero()) return {};
    TermList t;
    t.push_back(Term{std::move(c), std::move(mono)});
    return t;
}

// Multiplies out every positive power of a sum-base inside the term.
inline TermList expand_term(const Term& t) {
    // split off sum-bases with positive exponent
    std::vector<Factor> flat;
    std::vector<std::pair<Expr, std::int64_t>> sums;
    for (const auto& f : t.mono) {
        if (f.base.kind() == Kind::Sum && f.exp > 0)
            sums.emplace_back(f.base, f.exp);
        else
            flat.push_back(f);
    }
    TermList acc = one_term(t.coeff, std::move(flat));
    for (auto& [s, k] : sums) {
        TermList base_terms = as_terms(s);
        for (std::int64_t i = 0; i < k; ++i) acc = mul_termlists(acc, base_terms);
    }
    return acc;
}

inline TermList merge_like(TermList in) {
    std::sort(in.begin(), in.end(), [](const Term& a, const Term& b) { return mono_cmp(a.mono, b.mono) < 0; });
    TermList out;
    for (auto& t : in) {
        if (t.coeff.is_zero()) continue;
        if (!out.empty() && mono_equal(out.back().mono, t.mono)) {
            out.back().coeff += t.coeff;
            if (out.back().coeff.is_zero()) out.pop_back();
        } else {
            out.push_back(std::move(t));
        }
    }
    return out;
}

inline TermList mul_termlists(const TermList& a, const TermList& b) {
    TermList out;
    out.reserve(a.size() * b.size());
    for (const auto& ta : a)
        for (const auto& tb : b) {
            FactorAcc acc;
            acc.coeff = ta.coeff * tb.coeff;
            for (const auto& f : ta.mono) acc.push_expr(f.base, f.exp);
            for (const auto& f : tb.mono) acc.push_expr(f.base, f.exp);
            std::vector<Factor> mono = acc.finish();
            if (acc.coeff.is_zero()) continue;
            Term t{acc.coeff, std::move(mono)};
            TermList expanded = expand_term(t);
            out.insert(out.end(), expanded.begin(), expanded.end());
        }
    return merge_like(std::move(out));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Leaf constructors
// ---------------------------------------------------------------------------

inline Expr number(Rational v) { return Expr(detail::make_number_node(std::move(v))); }

inline Expr symbol(const std::string& name) {
    auto n = detail::make_node(Kind::Symbol);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->name = name;
    return Expr(n);
}

inline Expr jet(const std::string& dep, std::vector<std::string> indices) {
    auto n = detail::make_node(Kind::Jet);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->name = dep;
    m->indices = std::move(indices);
    return Expr(n);
}

inline Expr ufun(const std::string& name, std::vector<Expr> sig, std::vector<int> midx) {
    if (midx.size() != sig.size()) throw SymbolicError("ufun: multi-index/signature size mismatch");
    auto n = detail::make_node(Kind::Unknown);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->name = name;
    m->sig = new std::vector<Expr>(std::move(sig));
    m->midx = std::move(midx);
    return Expr(n);
}

namespace detail {

inline Expr make_unary(Kind k, const Expr& a) {
    auto n = make_node(k);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->kids = new std::vector<Expr>{a};
    return Expr(n);
}

inline Expr make_power_node(const Expr& base, std::int64_t k) {
    auto n = make_node(Kind::Power);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->kids = new std::vector<Expr>{base};
    m->expo = k;
    return Expr(n);
}

inline Expr make_nary(Kind k, std::vector<Expr> kids) {
    auto n = make_node(k);
    auto m = std::const_pointer_cast<ExprNode>(n);
    m->kids = new std::vector<Expr>(std::move(kids));
    return Expr(n);
}

// --- views ------------------------------------------------------------

// Interprets a canonical expression as a flat list of terms.
inline TermList as_terms(const Expr& e) {
    switch (e.kind()) {
        case Kind::Number:
            return one_term(e.num());
        case Kind::Sum: {
            TermList out;
            for (const auto& k : e.kids()) {
                TermList t = as_terms(k);
                out.insert(out.end(), t.begin(), t.end());
            }
            return out;
        }
        case Kind::Product: {
            Term t{Rational(1), {}};
            for (const auto& k : e.kids()) {
                if (k.kind() == Kind::Number) {
                    t.coeff *= k.num();
                } else if (k.kind() == Kind::Power) {
                    t.mono.push_back(Factor{k.kid(0), k.expo()});
                } else {
                    t.mono.push_back(Factor{k, 1});
                }
            }
            std::sort(t.mono.begin(), t.mono.end(),
                      [](const Factor& a, const Factor& b) { return expr_cmp(a.base, b.base) < 0; });
            return one_term(std::move(t.coeff), std::move(t.mono));
        }
        case Kind::Power:
            return one_term(Rational(1), {Factor{e.kid(0), e.expo()}});
        default:
            return one_term(Rational(1), {Factor{e, 1}});
    }
}

// Exact polynomial division of a term list by a divisor term list under the
// graded term order; empty result means "not divisible".  Used to cancel a
// denominator base out of a numerator.
inline bool try_divide(const TermList& num, const TermList& div, TermList& quotient_out) {
    if (div.empty()) return false;
    TermList rem = num;
    TermList quot;
    const Term& dlead = div.back();  // merge_like sorts ascending; leading term last
    std::int64_t guard = static_cast<std::int64_t>(num.size()) * 4 + 64;
    bool first = true;
    std::vector<Factor> prev_lead;
    while (!rem.empty()) {
        if (--guard < 0) return false;
        const Term& rlead = rem.back();
        if (!first && mono_cmp(rlead.mono, prev_lead) >= 0) return false;
        prev_lead = rlead.mono;
        first = false;
        // monomial quotient lead(rem)/lead(div): subtract exponents
        FactorAcc acc;
        acc.coeff = rlead.coeff / dlead.coeff;
        for (const auto& f : rlead.mono) acc.push_expr(f.base, f.exp);
        for (const auto& f : dlead.mono) acc.push_expr(f.base, -f.exp);
        std::vector<Factor> qmono = acc.finish();
        // keep to honest polynomial division: reject sum-bases (would
        // re-expand) and Laurent quotients (order soundness)
        for (const auto& f : qmono)
            if (f.base.kind() == Kind::Sum || f.exp < 0) return false;
        Term q{acc.coeff, std::move(qmono)};
        quot.push_back(q);
        TermList sub = mul_termlists(one_term(-q.coeff, q.mono), div);
        rem.insert(rem.end(), sub.begin(), sub.end());
        rem = merge_like(std::move(rem));
    }
    quotient_out = merge_like(std::move(quot));
    return true;
}

// Extracts rational content (gcd of coefficients, sign of leading term)
// so sum-bases of denominators are unique up to scaling.
inline Rational extract_content(TermList& terms) {
    if (terms.empty()) return Rational(0);
    Rational g(0);
    for (const auto& t : terms) g = rat_gcd(g, t.coeff);
    if (terms.back().coeff < 0) g = -g;  // leading term = highest in term order
    for (auto& t : terms) t.coeff /= g;
    return g;
}

Expr rebuild_polynomial(const TermList& terms);

inline Expr term_to_expr(const Term& t) {
    std::vector<Expr> kids;
    if (t.coeff.is_zero()) return number(0);
    bool coeff_one = (t.coeff == 1);
    if (!coeff_one) kids.push_back(number(t.coeff));
    for (const auto& f : t.mono) {
        if (f.exp == 1)
            kids.push_back(f.base);
        else
            kids.push_back(make_power_node(f.base, f.exp));
    }
    if (kids.empty()) return number(1);
    if (kids.size() == 1) return kids[0];
    return make_nary(Kind::Product, std::move(kids));
}

// Builds the canonical expression for a term list: expands positive powers
// of sum-bases, merges like terms, and normalizes over a common denominator.
inline Expr rebuild(TermList terms) {
    TermList flat;
    flat.reserve(terms.size());
    for (const auto& t : terms) {
        TermList e = expand_term(t);
        flat.insert(flat.end(), e.begin(), e.end());
    }
    terms = merge_like(std::move(flat));
    if (terms.empty()) return number(0);

    // Collect denominator sum-bases (negative powers of sums).
    std::map<Expr, std::int64_t, ExprLess> den;
    for (const auto& t : terms)
        for (const auto& f : t.mono)
            if (f.base.kind() == Kind::Sum && f.exp < 0) {
                auto it = den.find(f.base);
                std::int64_t need = -f.exp;
                if (it == den.end())
                    den.emplace(f.base, need);
                else
                    it->second = std::max(it->second, need);
            }

    if (den.empty()) return rebuild_polynomial(terms);

    // Multiply through by the common denominator, expand, rebuild.
    TermList num_terms;
    for (const auto& t : terms) {
        Term scaled = t;
        std::vector<Factor> mono;
        std::map<Expr, std::int64_t, ExprLess> have;
        for (const auto& f : scaled.mono) {
            if (f.base.kind() == Kind::Sum && f.exp < 0)
                have.emplace(f.base, -f.exp);
            else
                mono.push_back(f);
        }
        scaled.mono = std::move(mono);
        TermList part = one_term(scaled.coeff, scaled.mono);
        for (const auto& [b, k] : den) {
            std::int64_t deficit = k;
            auto it = have.find(b);
            if (it != have.end()) deficit -= it->second;
            if (deficit > 0) {
                TermList bt = as_terms(b);
                for (std::int64_t i = 0; i < deficit; ++i) part = mul_termlists(part, bt);
            }
        }
        num_terms.insert(num_terms.end(), part.begin(), part.end());
    }
    num_terms = merge_like(std::move(num_terms));
    if (num_terms.empty()) return number(0);

    // cancel denominator bases that divide the numerator exactly
    for (auto it = den.begin(); it != den.end();) {
        TermList base_terms = as_terms(it->first);
        TermList q;
        while (it->second > 0 && try_divide(num_terms, base_terms, q)) {
            num_terms = q;
            --it->second;
        }
        if (it->second == 0)
            it = den.erase(it);
        else
            ++it;
    }
    if (den.empty()) return rebuild_polynomial(num_terms);

    Rational content = extract_content(num_terms);
    Expr numerator = rebuild_polynomial(num_terms);

    // numerator * prod(base^-k); re-fold into one canonical product term.
    Term t{content, {}};
    if (numerator.kind() == Kind::Sum) {
        t.mono.push_back(Factor{numerator, 1});
    } else if (!numerator.is_one()) {
        TermList nt = as_terms(numerator);
        t.coeff *= nt[0].coeff;
        t.mono = nt[0].mono;
    }
    for (const auto& [b, k] : den) t.mono.push_back(Factor{b, -k});
    std::sort(t.mono.begin(), t.mono.end(),
              [](const Factor& a, const Factor& b) { return expr_cmp(a.base, b.base) < 0; });
    return term_to_expr(t);
}

inline Expr rebuild_polynomial(const TermList& terms) {
    if (terms.empty()) return number(0);
    if (terms.size() == 1) return term_to_expr(terms[0]);
    std::vector<Expr> kids;
    kids.reserve(terms.size());
    for (const auto& t : terms) kids.push_back(term_to_expr(t));
    return make_nary(Kind::Sum, std::move(kids));
}

inline void FactorAcc::push_expr(const Expr& e, std::int64_t k) {
    if (k == 0) return;
    switch (e.kind()) {
        case Kind::Number:
            coeff *= rat_pow(e.num(), k);
            return;
        case Kind::Power:
            push_expr(e.kid(0), e.expo() * k);
            return;
        case Kind::Product:
            for (const auto& kid : e.kids()) {
                if (kid.kind() == Kind::Number)
                    coeff *= rat_pow(kid.num(), k);
                else
                    push_expr(kid, k);
            }
            return;
        case Kind::Exp: {
            // accumulate k * argument into the running exponential argument
            TermList arg = as_terms(e.kid(0));
            for (auto& t : arg) t.coeff *= k;
            exp_arg.insert(exp_arg.end(), arg.begin(), arg.end());
            return;
        }
        default:
            push_base(e, k);
            return;
    }
}

inline std::vector<Factor> FactorAcc::finish() {
    for (;;) {
        if (!exp_arg.empty()) {
            // one exp-atom per additive term of the merged argument;
            // exp(c*ln X) with integral c folds into X^c (may cascade)
            TermList arg = merge_like(exp_arg);
            exp_arg.clear();
            for (const auto& t : arg) {
                if (rat_is_int(t.coeff) && t.mono.size() == 1 && t.mono[0].exp == 1 &&
                    t.mono[0].base.kind() == Kind::Ln) {
                    push_expr(t.mono[0].base.kid(0), rat_to_int(t.coeff));
                } else {
                    push_base(make_unary(Kind::Exp, term_to_expr(t)), 1);
                }
            }
            continue;
        }
        // renormalize exp atoms that merged to exponent != 1 and collapse
        // sqrt(E)^k for |k| >= 2 into E^(k/2) * sqrt(E)^(k mod 2)
        Expr base;
        std::int64_t k = 0;
        int action = 0;
        for (const auto& [b, e] : bases) {
            if (b.kind() == Kind::Exp && e != 1) {
                base = b;
                k = e;
                action = 1;
                break;
            }
            if (b.kind() == Kind::Sqrt && (e > 1 || e < -1)) {
                base = b;
                k = e;
                action = 2;
                break;
            }
        }
        if (action == 0) break;
        bases.erase(base);
        if (action == 1) {
            push_expr(base, k);  // routes through exp_arg
        } else {
            std::int64_t half = k / 2;  // truncates toward zero
            std::int64_t rem = k - 2 * half;
            if (rem != 0) push_base(base, rem);
            push_expr(base.kid(0), half);
        }
    }
    std::vector<Factor> out;
    out.reserve(bases.size());
    for (const auto& [b, k] : bases)
        if (k != 0) out.push_back(Factor{b, k});
    std::sort(out.begin(), out.end(),
              [](const Factor& a, const Factor& b) { return expr_cmp(a.base, b.base) < 0; });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic constructors
// ---------------------------------------------------------------------------

inline Expr add(std::vector<Expr> terms) {
    detail::TermList all;
    for (const auto& e : terms) {
        detail::TermList t = detail::as_terms(e);
        all.insert(all.end(), t.begin(), t.end());
    }
    return detail::rebuild(std::move(all));
}

inline Expr mul(std::vector<Expr> factors) {
    detail::TermList acc = detail::one_term(Rational(1));
    for (const auto& e : factors) {
        if (e.is_zero()) return number(0);
        acc = detail::mul_termlists(acc, detail::as_terms(e));
        if (acc.empty()) return number(0);
    }
    return detail::rebuild(std::move(acc));
}

inline Expr pow_int(const Expr& base, std::int64_t k) {
    if (k == 0) {
        if (base.is_zero()) throw SymbolicError("pow: 0^0");
        return number(1);
    }
    if (k == 1) return base;
    if (base.is_zero()) {
        if (k < 0) throw SymbolicError("pow: division by symbolic zero");
        return number(0);
    }
    if (base.is_number()) return number(rat_pow(base.num(), k));

    detail::TermList terms = detail::as_terms(base);
    if (terms.size() == 1) {
        detail::FactorAcc acc;
        acc.coeff = rat_pow(terms[0].coeff, k);
        for (const auto& f : terms[0].mono) acc.push_expr(f.base, f.exp * k);
        std::vector<detail::Factor> mono = acc.finish();
        detail::Term t{acc.coeff, std::move(mono)};
        return detail::rebuild(detail::expand_term(t));
    }
    // multi-term base
    if (k > 0) {
        detail::TermList acc = detail::one_term(Rational(1));
        for (std::int64_t i = 0; i < k; ++i) acc = detail::mul_termlists(acc, terms);
        return detail::rebuild(std::move(acc));
    }
    // negative power of a sum: content-normalized denominator base
    Rational content = detail::extract_content(terms);
    Expr b = detail::rebuild_polynomial(terms);
    detail::Term t{rat_pow(content, k), {detail::Factor{b, k}}};
    return detail::rebuild(detail::TermList{t});
}

inline Expr exp_(const Expr& a) {
    if (a.is_zero()) return number(1);
    detail::FactorAcc acc;
    acc.exp_arg = detail::as_terms(a);
    std::vector<detail::Factor> mono = acc.finish();
    detail::Term t{acc.coeff, std::move(mono)};
    return detail::rebuild(detail::expand_term(t));
}

inline Expr ln_(const Expr& a) {
    if (a.is_zero()) throw SymbolicError("ln(0)");
    if (a.is_one()) return number(0);
    if (a.kind() == Kind::Exp) return a.kid(0);
    return detail::make_unary(Kind::Ln, a);
}

namespace detail {
// Splits a = -b when the leading (last, highest-order) term has a negative
// coefficient; used for parity normalization of sin/cos/arctan arguments.
inline bool leading_negative(const Expr& a) {
    TermList t = as_terms(a);
    if (t.empty()) return false;
    return t.back().coeff < 0;
}
}  // namespace detail

inline Expr sin_(const Expr& a) {
    if (a.is_zero()) return number(0);
    if (detail::leading_negative(a)) return -detail::make_unary(Kind::Sin, -a);
    return detail::make_unary(Kind::Sin, a);
}

inline Expr cos_(const Expr& a) {
    if (a.is_zero()) return number(1);
    if (detail::leading_negative(a)) return detail::make_unary(Kind::Cos, -a);
    return detail::make_unary(Kind::Cos, a);
}

inline Expr arctan_(const Expr& a) {
    if (a.is_zero()) return number(0);
    if (detail::leading_negative(a)) return -detail::make_unary(Kind::Arctan, -a);
    return detail::make_unary(Kind::Arctan, a);
}

inline Expr sqrt_(const Expr& a) {
    if (a.is_zero()) return number(0);
    if (a.is_one()) return number(1);
    return detail::make_unary(Kind::Sqrt, a);
}

// ---------------------------------------------------------------------------
// Structure queries
// ---------------------------------------------------------------------------

inline bool is_atom(const Expr& e) {
    switch (e.kind()) {
        case Kind::Symbol:
        case Kind::Jet:
        case Kind::Unknown:
        case Kind::Exp:
        case Kind::Ln:
        case Kind::Sin:
        case Kind::Cos:
        case Kind::Arctan:
        case Kind::Sqrt:
            return true;
        default:
            return false;
    }
}

/// Walks all nodes (including the root), calling f on each.
inline void walk(const Expr& e, const std::function<void(const Expr&)>& f) {
    f(e);
    switch (e.kind()) {
        case Kind::Number:
        case Kind::Symbol:
            break;
        case Kind::Unknown:
            for (const auto& s : e.sig()) walk(s, f);
            break;
        case Kind::Jet:
            break;
        default:
            for (const auto& k : e.kids()) walk(k, f);
            break;
    }
}

inline bool occurs(const Expr& e, const Expr& atom) {
    bool found = false;
    walk(e, [&](const Expr& n) {
        if (!found && n == atom) found = true;
    });
    return found;
}

/// All distinct atoms of the given kind appearing anywhere in e.
inline std::set<Expr, ExprLess> atoms_of_kind(const Expr& e, Kind k) {
    std::set<Expr, ExprLess> out;
    walk(e, [&](const Expr& n) {
        if (n.kind() == k) out.insert(n);
    });
    return out;
}

// ---------------------------------------------------------------------------
// simplify / partial / substitute
// ---------------------------------------------------------------------------

/// Expressions are canonical by construction; simplify re-canonicalizes
/// (identity on canonical trees, useful as an idempotence witness).
Expr simplify(const Expr& e);

namespace detail {
inline Expr rebuild_expr(const Expr& e, const std::function<Expr(const Expr&)>& leaf) {
    switch (e.kind()) {
        case Kind::Number:
            return e;
        case Kind::Symbol:
        case Kind::Jet:
        case Kind::Unknown:
            return leaf(e);
        case Kind::Exp:
            return exp_(rebuild_expr(e.kid(0), leaf));
        case Kind::Ln:
            return ln_(rebuild_expr(e.kid(0), leaf));
        case Kind::Sin:
            return sin_(rebuild_expr(e.kid(0), leaf));
        case Kind::Cos:
            return cos_(rebuild_expr(e.kid(0), leaf));
        case Kind::Arctan:
            return arctan_(rebuild_expr(e.kid(0), leaf));
        case Kind::Sqrt:
            return sqrt_(rebuild_expr(e.kid(0), leaf));
        case Kind::Power:
            return pow_int(rebuild_expr(e.kid(0), leaf), e.expo());
        case Kind::Product: {
            std::vector<Expr> kids;
            kids.reserve(e.nkids());
            for (const auto& k : e.kids()) kids.push_back(rebuild_expr(k, leaf));
            return mul(std::move(kids));
        }
        case Kind::Sum: {
            std::vector<Expr> kids;
            kids.reserve(e.nkids());
            for (const auto& k : e.kids()) kids.push_back(rebuild_expr(k, leaf));
            return add(std::move(kids));
        }
    }
    return e;
}
}  // namespace detail

inline Expr simplify(const Expr& e) {
    return detail::rebuild_expr(e, [](const Expr& a) { return a; });
}

/// Partial derivative treating every symbol, jet coordinate and unknown atom
/// as an independent coordinate; chain rule through the function nodes.
inline Expr partial(const Expr& e, const Expr& coord) {
    if (!is_atom(coord) || coord.kind() == Kind::Exp || coord.kind() == Kind::Ln)
        throw SymbolicError("partial: differentiation key must be a symbol, jet coordinate or unknown atom");
    switch (e.kind()) {
        case Kind::Number:
            return number(0);
        case Kind::Symbol:
        case Kind::Jet:
            return e == coord ? number(1) : number(0);
        case Kind::Unknown: {
            if (e == coord) return number(1);
            for (std::size_t i = 0; i < e.sig().size(); ++i) {
                if (e.sig()[i] == coord) {
                    std::vector<int> m = e.midx();
                    ++m[i];
                    return ufun(e.name(), e.sig(), std::move(m));
                }
            }
            return number(0);
        }
        case Kind::Exp:
            return mul({e, partial(e.kid(0), coord)});
        case Kind::Ln:
            return mul({partial(e.kid(0), coord), pow_int(e.kid(0), -1)});
        case Kind::Sin:
            return mul({cos_(e.kid(0)), partial(e.kid(0), coord)});
        case Kind::Cos:
            return mul({number(-1), sin_(e.kid(0)), partial(e.kid(0), coord)});
        case Kind::Arctan: {
            Expr one_plus = add({number(1), pow_int(e.kid(0), 2)});
            return mul({partial(e.kid(0), coord), pow_int(one_plus, -1)});
        }
        case Kind::Sqrt: {
            Expr half = number(Rational(1) / Rational(2));
            return mul({half, partial(e.kid(0), coord), pow_int(e, -1)});
        }
        case Kind::Power: {
            Expr d = partial(e.kid(0), coord);
            if (d.is_zero()) return number(0);
            return mul({number(e.expo()), pow_int(e.kid(0), e.expo() - 1), d});
        }
        case Kind::Product: {
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < e.nkids(); ++i) {
                Expr d = partial(e.kid(i), coord);
                if (d.is_zero()) continue;
                std::vector<Expr> fs;
                for (std::size_t j = 0; j < e.nkids(); ++j)
                    if (j != i) fs.push_back(e.kid(j));
                fs.push_back(d);
                terms.push_back(mul(std::move(fs)));
            }
            return add(std::move(terms));
        }
        case Kind::Sum: {
            std::vector<Expr> terms;
            terms.reserve(e.nkids());
            for (const auto& k : e.kids()) terms.push_back(partial(k, coord));
            return add(std::move(terms));
        }
    }
    return number(0);
}

using Bindings = std::map<Expr, Expr, ExprLess>;

/// a / b when both are single terms over the same monomial: the rational
/// quotient of their coefficients; 0 otherwise ("no ratio").
inline Expr term_ratio(const Expr& a, const Expr& b) {
    detail::TermList ta = detail::as_terms(a);
    detail::TermList tb = detail::as_terms(b);
    if (ta.size() != 1 || tb.size() != 1) return number(0);
    if (!detail::mono_equal(ta[0].mono, tb[0].mono)) return number(0);
    if (tb[0].coeff.is_zero()) return number(0);
    return number(ta[0].coeff / tb[0].coeff);
}

/// Simultaneous substitution of atoms, then re-canonicalization.  Keys must
/// be atoms; exp-atom keys also match integer multiples of their argument
/// (a binding for exp(y) rewrites exp(2y) as its square).
inline Expr substitute(const Expr& e, const Bindings& bindings) {
    if (bindings.empty()) return e;
    std::function<Expr(const Expr&)> go = [&](const Expr& n) -> Expr {
        auto hit = bindings.find(n);
        if (hit != bindings.end()) return hit->second;
        switch (n.kind()) {
            case Kind::Number:
            case Kind::Symbol:
            case Kind::Jet:
                return n;
            case Kind::Unknown: {
                bool changed = false;
                std::vector<Expr> sig2;
                sig2.reserve(n.sig().size());
                for (const auto& s : n.sig()) {
                    Expr s2 = go(s);
                    changed = changed || !(s2 == s);
                    sig2.push_back(s2);
                }
                if (!changed) return n;
                return ufun(n.name(), std::move(sig2), n.midx());
            }
            case Kind::Exp: {
                // match exp-atom bindings up to an integer multiple
                for (const auto& [key, repl] : bindings) {
                    if (key.kind() != Kind::Exp) continue;
                    Expr ratio = term_ratio(n.kid(0), key.kid(0));
                    if (!ratio.is_zero() && rat_is_int(ratio.num()))
                        return pow_int(repl, rat_to_int(ratio.num()));
                }
                return exp_(go(n.kid(0)));
            }
            case Kind::Ln:
                return ln_(go(n.kid(0)));
            case Kind::Sin:
                return sin_(go(n.kid(0)));
            case Kind::Cos:
                return cos_(go(n.kid(0)));
            case Kind::Arctan:
                return arctan_(go(n.kid(0)));
            case Kind::Sqrt:
                return sqrt_(go(n.kid(0)));
            case Kind::Power:
                return pow_int(go(n.kid(0)), n.expo());
            case Kind::Product: {
                std::vector<Expr> kids;
                kids.reserve(n.nkids());
                for (const auto& k : n.kids()) kids.push_back(go(k));
                return mul(std::move(kids));
            }
            case Kind::Sum: {
                std::vector<Expr> kids;
                kids.reserve(n.nkids());
                for (const auto& k : n.kids()) kids.push_back(go(k));
                return add(std::move(kids));
            }
        }
        return n;
    };
    return go(e);
}

/// Derivative along `var` with extra chain rules: rules[a] = d a / d var for
/// auxiliary atoms (similarity variables and the like).
inline Expr chain_derivative(const Expr& e, const Expr& var, const Bindings& rules) {
    Expr out = partial(e, var);
    for (const auto& [atom, d] : rules) out = out + mul({d, partial(e, atom)});
    return out;
}

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

struct CollectResult {
    // monomial (product of basis powers, canonical Expr) -> coefficient
    std::map<Expr, Expr, ExprLess> rows;
};

namespace detail {
// True when `base` is an exponential marker exp(k * dep) for the given
// order-0 jet coordinate.
inline bool is_exp_marker(const Expr& base, const Expr& dep) {
    if (base.kind() != Kind::Exp) return false;
    TermList t = as_terms(base.kid(0));
    if (t.size() != 1) return false;
    return t[0].mono.size() == 1 && t[0].mono[0].exp == 1 && t[0].mono[0].base == dep;
}
}  // namespace detail

/// Collects e as a polynomial over the basis coordinates (and, when `dep`
/// is supplied, over exp(k*dep) markers).  Throws when e depends on a basis
/// coordinate in a non-polynomial way.
inline CollectResult collect(const Expr& e, const std::vector<Expr>& basis, const Expr* dep = nullptr) {
    CollectResult out;
    std::set<Expr, ExprLess> basis_set(basis.begin(), basis.end());
    detail::TermList terms = detail::as_terms(e);
    for (const auto& t : terms) {
        detail::Term key{Rational(1), {}};
        detail::Term coeff{t.coeff, {}};
        for (const auto& f : t.mono) {
            bool in_basis = basis_set.count(f.base) > 0;
            bool marker = dep && detail::is_exp_marker(f.base, *dep);
            if (in_basis && f.exp < 0)
                throw SymbolicError("collect: negative power of basis coordinate");
            if (in_basis || marker) {
                key.mono.push_back(f);
            } else {
                coeff.mono.push_back(f);
            }
        }
        Expr key_expr = detail::term_to_expr(key);
        Expr coeff_expr = detail::term_to_expr(coeff);
        // non-polynomial dependence check: no basis coordinate may survive
        // inside the coefficient
        for (const auto& b : basis_set) {
            if (occurs(coeff_expr, b)) {
                throw SymbolicError("collect: non-polynomial dependence on basis coordinate");
            }
        }
        auto it = out.rows.find(key_expr);
        if (it == out.rows.end())
            out.rows.emplace(key_expr, coeff_expr);
        else
            it->second = it->second + coeff_expr;
    }
    // drop rows that merged to zero
    for (auto it = out.rows.begin(); it != out.rows.end();) {
        if (it->second.is_zero())
            it = out.rows.erase(it);
        else
            ++it;
    }
    return out;
}

/// Rebuilds sum(monomial * coefficient); inverse of collect.
inline Expr collect_reconstruct(const CollectResult& c) {
    std::vector<Expr> terms;
    terms.reserve(c.rows.size());
    for (const auto& [m, coeff] : c.rows) terms.push_back(mul({m, coeff}));
    return add(std::move(terms));
}

// ---------------------------------------------------------------------------
// trig normalization (on demand): sin^2 -> 1 - cos^2
// ---------------------------------------------------------------------------

inline Expr trig_reduce(const Expr& e) {
    detail::TermList terms = detail::as_terms(e);
    bool changed = false;
    std::vector<Expr> out;
    for (const auto& t : terms) {
        Expr rest = number(t.coeff);
        Expr replaced = number(1);
        bool hit = false;
        for (const auto& f : t.mono) {
            if (f.base.kind() == Kind::Sin && f.exp >= 2) {
                std::int64_t pairs = f.exp / 2;
                std::int64_t rem = f.exp - 2 * pairs;
                Expr one_minus = add({number(1), -pow_int(cos_(f.base.kid(0)), 2)});
                replaced = mul({replaced, pow_int(one_minus, pairs)});
                if (rem != 0) replaced = mul({replaced, f.base});
                hit = true;
            } else {
                rest = mul({rest, pow_int(f.base, f.exp)});
            }
        }
        changed = changed || hit;
        out.push_back(mul({rest, replaced}));
    }
    Expr result = add(std::move(out));
    if (changed) return trig_reduce(result);
    return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

/// Numeric evaluation; every symbol/jet/unknown atom must be bound.
inline double eval_double(const Expr& e, const std::map<Expr, double, ExprLess>& env) {
    switch (e.kind()) {
        case Kind::Number:
            return rat_double(e.num());
        case Kind::Symbol:
        case Kind::Jet:
        case Kind::Unknown: {
            auto it = env.find(e);
            if (it == env.end()) throw SymbolicError("eval: unbound atom");
            return it->second;
        }
        case Kind::Exp:
            return std::exp(eval_double(e.kid(0), env));
        case Kind::Ln:
            return std::log(eval_double(e.kid(0), env));
        case Kind::Sin:
            return std::sin(eval_double(e.kid(0), env));
        case Kind::Cos:
            return std::cos(eval_double(e.kid(0), env));
        case Kind::Arctan:
            return std::atan(eval_double(e.kid(0), env));
        case Kind::Sqrt:
            return std::sqrt(eval_double(e.kid(0), env));
        case Kind::Power: {
            double b = eval_double(e.kid(0), env);
            return std::pow(b, static_cast<double>(e.expo()));
        }
        case Kind::Product: {
            double p = 1.0;
            for (const auto& k : e.kids()) p *= eval_double(k, env);
            return p;
        }
        case Kind::Sum: {
            double s = 0.0;
            for (const auto& k : e.kids()) s += eval_double(k, env);
            return s;
        }
    }
    return 0.0;
}

/// Exact evaluation at rational points; throws on transcendental nodes.
inline Rational eval_rational(const Expr& e, const std::map<Expr, Rational, ExprLess>& env) {
    switch (e.kind()) {
        case Kind::Number:
            return e.num();
        case Kind::Symbol:
        case Kind::Jet:
        case Kind::Unknown: {
            auto it = env.find(e);
            if (it == env.end()) throw SymbolicError("eval: unbound atom");
            return it->second;
        }
        case Kind::Power:
            return rat_pow(eval_rational(e.kid(0), env), e.expo());
        case Kind::Product: {
            Rational p(1);
            for (const auto& k : e.kids()) p *= eval_rational(k, env);
            return p;
        }
        case Kind::Sum: {
            Rational s(0);
            for (const auto& k : e.kids()) s += eval_rational(k, env);
            return s;
        }
        default:
            throw SymbolicError("eval_rational: transcendental node");
    }
}

}  // namespace flowsym
