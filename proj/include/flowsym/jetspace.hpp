#pragma once

// Jet spaces X x U^(n) and the total derivative operator.

#include "flowsym/expr.hpp"
#include "flowsym/expr_io.hpp"

#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace flowsym {

/// Declaration of independent variables, the dependent variable and the
/// derivative coordinates up to a maximal order.  Jet coordinates are indexed
/// by unordered multi-indices, stored as letter lists sorted in declaration
/// order (w_xy, w_xt, w_tt for vars x y t).
struct JetSpec {
    std::vector<std::string> indep;
    std::string dep;
    int max_order = 2;

    Expr var(std::size_t i) const { return symbol(indep[i]); }
    Expr dep_atom() const { return jet(dep, {}); }

    Expr coordinate(std::vector<std::string> letters) const {
        sort_letters(letters);
        return jet(dep, std::move(letters));
    }

    void sort_letters(std::vector<std::string>& letters) const {
        std::sort(letters.begin(), letters.end(), [&](const std::string& a, const std::string& b) {
            return pos(a) < pos(b);
        });
    }

    int pos(const std::string& v) const {
        for (std::size_t i = 0; i < indep.size(); ++i)
            if (indep[i] == v) return static_cast<int>(i);
        throw SymbolicError("unknown independent variable " + v);
    }

    /// All multi-indices of exact order k, lexicographic in declaration order.
    std::vector<std::vector<std::string>> multi_indices(int k) const {
        std::vector<std::vector<std::string>> out;
        std::vector<std::string> cur;
        build(0, k, cur, out);
        return out;
    }

    /// Jet coordinates of order 0..n: dependent variable first, then
    /// derivative coordinates grouped by order.
    std::vector<Expr> coordinates(int n) const {
        std::vector<Expr> out{dep_atom()};
        for (int k = 1; k <= n; ++k)
            for (auto& m : multi_indices(k)) out.push_back(jet(dep, m));
        return out;
    }

    /// p + 1 + sum_k C(p+k-1, k) including the independent variables.
    std::size_t coordinate_count(int n) const {
        std::size_t c = indep.size() + 1;
        for (int k = 1; k <= n; ++k) c += binom(indep.size() + k - 1, k);
        return c;
    }

    ParseContext parse_context(std::map<std::string, std::vector<std::string>> unknowns = {}) const {
        ParseContext ctx;
        ctx.indep = indep;
        ctx.dep = dep;
        ctx.unknowns = std::move(unknowns);
        return ctx;
    }

private:
    static std::size_t binom(std::size_t n, std::size_t k) {
        std::size_t r = 1;
        for (std::size_t i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
        return r;
    }
    void build(std::size_t from, int left, std::vector<std::string>& cur,
               std::vector<std::vector<std::string>>& out) const {
        if (left == 0) {
            out.push_back(cur);
            return;
        }
        for (std::size_t i = from; i < indep.size(); ++i) {
            cur.push_back(indep[i]);
            build(i, left - 1, cur, out);
            cur.pop_back();
        }
    }
};

/// D_i e = de/dx^i + sum_J w_{J,i} de/dw_J over every jet coordinate present
/// (including the dependent variable itself).  The jet order is extended
/// silently when a higher coordinate appears.
inline Expr total_derivative(const Expr& e, const std::string& xi, const JetSpec& spec) {
    Expr out = partial(e, symbol(xi));
    for (const auto& j : atoms_of_kind(e, Kind::Jet)) {
        if (j.name() != spec.dep) continue;
        Expr de = partial(e, j);
        if (de.is_zero()) continue;
        std::vector<std::string> letters = j.jet_indices();
        letters.push_back(xi);
        out = out + spec.coordinate(std::move(letters)) * de;
    }
    return out;
}

inline Expr total_derivative(const Expr& e, const std::vector<std::string>& path, const JetSpec& spec) {
    Expr out = e;
    for (const auto& v : path) out = total_derivative(out, v, spec);
    return out;
}

/// A scalar PDE Delta = 0 together with the coordinate it is solved for on
/// the solution manifold: Delta = 0  <=>  solve_for = rhs.
struct PDE {
    JetSpec spec;
    Expr delta;
    Expr solve_for;  // a jet coordinate
    Expr rhs;
    std::string name;

    PDE(JetSpec s, Expr d, Expr c, Expr r, std::string n = "")
        : spec(std::move(s)), delta(std::move(d)), solve_for(std::move(c)), rhs(std::move(r)), name(std::move(n)) {
        if (solve_for.kind() != Kind::Jet) throw SymbolicError("PDE: solve_for must be a jet coordinate");
        Expr check = substitute(delta, {{solve_for, rhs}});
        if (!check.is_zero())
            throw SymbolicError("PDE: delta does not vanish under the solve_for relation");
    }

    /// Restriction to the solution manifold: eliminate the solved coordinate.
    Expr restrict_to_solution(const Expr& e) const { return substitute(e, {{solve_for, rhs}}); }
};

// ---------------------------------------------------------------------------
// maximal-rank check
// ---------------------------------------------------------------------------

struct JacobianReport {
    std::vector<Expr> coords;  // x^i; w; w_J by order, paper's ordering
    std::vector<Expr> row;     // dDelta/dcoord
    std::vector<double> sample_max_abs;
    bool nonzero_at_all_samples = true;
};

/// Gradient row of Delta with respect to all coordinates, evaluated at
/// samples lying on the solution manifold (the solved coordinate is
/// recomputed from the solve_for relation, enforcing Delta = 0).
inline JacobianReport jacobian_rank_check(const PDE& pde,
                                          const std::vector<std::map<Expr, double, ExprLess>>& samples) {
    JacobianReport rep;
    for (const auto& v : pde.spec.indep) rep.coords.push_back(symbol(v));
    for (const auto& c : pde.spec.coordinates(pde.spec.max_order)) rep.coords.push_back(c);
    for (const auto& c : rep.coords) rep.row.push_back(partial(pde.delta, c));

    for (auto env : samples) {
        env[pde.solve_for] = eval_double(pde.rhs, env);
        if (std::abs(eval_double(pde.delta, env)) > 1e-9)
            throw SymbolicError("jacobian_rank_check: sample violates Delta = 0");
        double best = 0.0;
        for (const auto& entry : rep.row) {
            double v = std::abs(eval_double(entry, env));
            best = std::max(best, v);
        }
        rep.sample_max_abs.push_back(best);
        if (best == 0.0) rep.nonzero_at_all_samples = false;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// PDE definition files
// ---------------------------------------------------------------------------

// Grammar (whitespace-insensitive, one declaration per clause):
//   vars x y t; dep w; order 2; delta <expr>; solve w_t = <expr>;

inline PDE parse_pde(const std::string& src, const std::string& name = "") {
    detail::Lexer lx(src);
    JetSpec spec;
    std::optional<Expr> delta, solve_lhs, solve_rhs;
    while (!lx.eof()) {
        std::string kw = lx.ident();
        if (kw == "vars") {
            while (lx.peek() != ';') spec.indep.push_back(lx.ident());
        } else if (kw == "dep") {
            spec.dep = lx.ident();
        } else if (kw == "order") {
            spec.max_order = static_cast<int>(rat_to_int(lx.integer()));
        } else if (kw == "delta") {
            if (spec.indep.empty() || spec.dep.empty()) lx.fail("vars/dep must be declared before delta");
            ParseContext ctx = spec.parse_context();
            delta = parse_expr_clause(lx, ctx);
        } else if (kw == "solve") {
            if (spec.indep.empty() || spec.dep.empty()) lx.fail("vars/dep must be declared before solve");
            ParseContext ctx = spec.parse_context();
            solve_lhs = parse_expr_clause(lx, ctx);
            lx.expect('=', "solve clause");
            solve_rhs = parse_expr_clause(lx, ctx);
        } else {
            lx.fail("unknown clause '" + kw + "'");
        }
        lx.expect(';', "clause terminator");
    }
    if (spec.indep.empty()) throw SymbolicError("pde file: missing vars clause");
    if (spec.dep.empty()) throw SymbolicError("pde file: missing dep clause");
    if (!delta) throw SymbolicError("pde file: missing delta clause");
    if (!solve_lhs || !solve_rhs) throw SymbolicError("pde file: missing solve clause");
    return PDE(spec, *delta, *solve_lhs, *solve_rhs, name);
}

inline std::string print_pde(const PDE& pde) {
    std::ostringstream os;
    os << "vars";
    for (const auto& v : pde.spec.indep) os << " " << v;
    os << "; dep " << pde.spec.dep << "; order " << pde.spec.max_order << ";\n";
    os << "delta " << to_string(pde.delta) << ";\n";
    os << "solve " << to_string(pde.solve_for) << " = " << to_string(pde.rhs) << ";\n";
    return os.str();
}

}  // namespace flowsym
