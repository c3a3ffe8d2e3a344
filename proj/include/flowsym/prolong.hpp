#pragma once

// Vector fields on X x U and their n-th prolongations.
//
// For v = sum xi^i(x,w) d/dx^i + phi(x,w) d/dw the prolonged coefficients
// phi^J are computed by the recursion
//     phi^{J,i} = D_i phi^J - sum_k (D_i xi^k) w_{J,k}
// with the closed formula
//     phi^J = D_J(phi - sum xi^i w_i) + sum xi^i w_{J,i}
// kept as a cross-check (prolong_closed_form).

#include "flowsym/jetspace.hpp"

#include <map>
#include <string>
#include <vector>

namespace flowsym {

/// Infinitesimal generator: one coefficient per independent variable plus one
/// for the dependent variable.  Coefficients may depend on the independent
/// variables and the dependent variable only (no derivative coordinates).
struct VectorField {
    JetSpec spec;
    std::vector<Expr> xi;
    Expr phi;
    std::string name;

    VectorField(JetSpec s, std::vector<Expr> x, Expr p, std::string n = "")
        : spec(std::move(s)), xi(std::move(x)), phi(std::move(p)), name(std::move(n)) {
        if (xi.size() != spec.indep.size())
            throw SymbolicError("VectorField: one xi coefficient per independent variable");
        for (const auto& c : xi) check_coefficient(c);
        check_coefficient(phi);
    }

    /// Action as a first-order operator on functions of (x, w).
    Expr apply_base(const Expr& f) const {
        Expr out = phi * partial(f, spec.dep_atom());
        for (std::size_t i = 0; i < xi.size(); ++i) out = out + xi[i] * partial(f, spec.var(i));
        return out;
    }

    bool is_zero() const {
        for (const auto& c : xi)
            if (!c.is_zero()) return false;
        return phi.is_zero();
    }

private:
    void check_coefficient(const Expr& c) const {
        for (const auto& j : atoms_of_kind(c, Kind::Jet))
            if (j.name() == spec.dep && !j.jet_indices().empty())
                throw SymbolicError("VectorField: coefficient depends on jet coordinate " +
                                    to_string(j));
    }
};

inline VectorField vf_add(const VectorField& a, const VectorField& b) {
    std::vector<Expr> xi;
    for (std::size_t i = 0; i < a.xi.size(); ++i) xi.push_back(a.xi[i] + b.xi[i]);
    return VectorField(a.spec, std::move(xi), a.phi + b.phi);
}

inline VectorField vf_scale(const Expr& c, const VectorField& a) {
    std::vector<Expr> xi;
    for (const auto& x : a.xi) xi.push_back(c * x);
    return VectorField(a.spec, std::move(xi), c * a.phi);
}

/// Coefficientwise bracket [v,u] = v(u^k) - u(v^k).
inline VectorField bracket(const VectorField& v, const VectorField& u) {
    std::vector<Expr> xi;
    for (std::size_t i = 0; i < v.xi.size(); ++i)
        xi.push_back(v.apply_base(u.xi[i]) - u.apply_base(v.xi[i]));
    return VectorField(v.spec, std::move(xi), v.apply_base(u.phi) - u.apply_base(v.phi));
}

struct ProlongedVectorField {
    VectorField base;
    int order;
    std::map<Expr, Expr, ExprLess> phiJ;  // jet coordinate (order >= 1) -> phi^J

    const Expr& coeff(const Expr& coord) const {
        auto it = phiJ.find(coord);
        if (it == phiJ.end()) throw SymbolicError("prolongation: missing phi^J for " + to_string(coord));
        return it->second;
    }
};

inline ProlongedVectorField prolong(const VectorField& v, int n) {
    if (n < 1) throw SymbolicError("prolong: order must be >= 1");
    ProlongedVectorField out{v, n, {}};
    const JetSpec& spec = v.spec;
    const std::size_t p = spec.indep.size();

    // D_i xi^k once
    std::vector<std::vector<Expr>> dxi(p, std::vector<Expr>(p));
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < p; ++k) dxi[i][k] = total_derivative(v.xi[k], spec.indep[i], spec);

    std::map<Expr, Expr, ExprLess> prev;  // order k-1 coefficients, phi^{} = phi
    prev.emplace(spec.dep_atom(), v.phi);
    for (int k = 1; k <= n; ++k) {
        std::map<Expr, Expr, ExprLess> cur;
        for (const auto& m : spec.multi_indices(k)) {
            // J = J' + i with i the last letter (declaration order)
            std::vector<std::string> parent(m.begin(), m.end() - 1);
            std::size_t i = static_cast<std::size_t>(spec.pos(m.back()));
            const Expr& phiJ = prev.at(jet(spec.dep, parent));
            Expr next = total_derivative(phiJ, m[m.size() - 1], spec);
            for (std::size_t kk = 0; kk < p; ++kk) {
                std::vector<std::string> jk(parent);
                jk.push_back(spec.indep[kk]);
                next = next - dxi[i][kk] * spec.coordinate(std::move(jk));
            }
            Expr coord = jet(spec.dep, m);
            cur.emplace(coord, next);
            out.phiJ.emplace(coord, next);
        }
        prev = std::move(cur);
    }
    return out;
}

/// Theorem-form phi^J, used as a regression cross-check of the recursion.
inline Expr prolong_closed_form(const VectorField& v, const std::vector<std::string>& J) {
    const JetSpec& spec = v.spec;
    Expr q = v.phi;
    for (std::size_t i = 0; i < spec.indep.size(); ++i)
        q = q - v.xi[i] * spec.coordinate({spec.indep[i]});
    Expr out = total_derivative(q, J, spec);
    for (std::size_t i = 0; i < spec.indep.size(); ++i) {
        std::vector<std::string> ji(J);
        ji.push_back(spec.indep[i]);
        out = out + v.xi[i] * spec.coordinate(std::move(ji));
    }
    return out;
}

/// pr v applied to an expression on the jet space:
/// sum xi^i de/dx^i + phi de/dw + sum_J phi^J de/dw_J.
inline Expr apply_prolonged(const ProlongedVectorField& pv, const Expr& e) {
    const JetSpec& spec = pv.base.spec;
    Expr out = number(0);
    for (std::size_t i = 0; i < spec.indep.size(); ++i)
        out = out + pv.base.xi[i] * partial(e, spec.var(i));
    out = out + pv.base.phi * partial(e, spec.dep_atom());
    for (const auto& j : atoms_of_kind(e, Kind::Jet)) {
        if (j.name() != spec.dep || j.jet_indices().empty()) continue;
        Expr de = partial(e, j);
        if (de.is_zero()) continue;
        out = out + pv.coeff(j) * de;
    }
    return out;
}

// ---------------------------------------------------------------------------
// vector-field files
// ---------------------------------------------------------------------------

// Grammar:
//   vars x y t; dep w;
//   vf v4: xi=0, eta=0, tau=t, phi=1;
//   vf gen: xi=xi(x,y), eta=eta(x,y), tau=tau(x,y,t,w), phi=phi(x,y,t,w);
//   const c1 c2;
// Coefficient keys follow the variable count: xi,eta,tau for three
// independent variables, xi,tau for two; phi is always the w-coefficient.

struct VectorFieldFile {
    JetSpec spec;
    std::vector<VectorField> fields;
    std::vector<std::string> constants;
};

inline std::vector<std::string> coefficient_keys(const JetSpec& spec) {
    if (spec.indep.size() == 3) return {"xi", "eta", "tau"};
    if (spec.indep.size() == 2) return {"xi", "tau"};
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < spec.indep.size(); ++i) keys.push_back("xi" + std::to_string(i + 1));
    return keys;
}

namespace detail {

inline bool is_builtin_function(const std::string& id) {
    return id == "exp" || id == "ln" || id == "sin" || id == "cos" || id == "arctan" || id == "sqrt";
}

// value := name '(' arg (',' arg)* ')'  -- declares an unknown function
//        | expr
inline Expr parse_vf_value(Lexer& lx, ParseContext& ctx, const JetSpec& spec) {
    Lexer::Mark m = lx.mark();
    if (std::isalpha(static_cast<unsigned char>(lx.peek()))) {
        std::string id = lx.ident();
        if (!is_builtin_function(id) && lx.peek_raw() == '(') {
            lx.get_raw();
            std::vector<std::string> args;
            for (;;) {
                std::string a = lx.ident();
                if (!ctx.is_indep(a) && a != spec.dep)
                    lx.fail("unknown-function argument '" + a + "' is not a declared variable");
                args.push_back(a);
                if (lx.accept(')')) break;
                lx.expect(',', "unknown-function argument list");
            }
            ctx.unknowns[id] = args;
            std::vector<Expr> sig;
            for (const auto& a : args) sig.push_back(ctx.atom_for(a));
            return ufun(id, std::move(sig), std::vector<int>(args.size(), 0));
        }
    }
    lx.reset(m);
    return parse_expr_clause(lx, ctx);
}

}  // namespace detail

inline VectorFieldFile parse_vector_fields(const std::string& src) {
    detail::Lexer lx(src);
    VectorFieldFile out;
    ParseContext ctx;
    bool have_header = false;
    while (!lx.eof()) {
        std::string kw = lx.ident();
        if (kw == "vars") {
            while (lx.peek() != ';') out.spec.indep.push_back(lx.ident());
        } else if (kw == "dep") {
            out.spec.dep = lx.ident();
        } else if (kw == "order") {
            out.spec.max_order = static_cast<int>(rat_to_int(lx.integer()));
        } else if (kw == "const") {
            while (lx.peek() != ';') out.constants.push_back(lx.ident());
        } else if (kw == "vf") {
            if (!have_header) {
                if (out.spec.indep.empty() || out.spec.dep.empty())
                    lx.fail("vars/dep must be declared before vf clauses");
                ctx = out.spec.parse_context();
                have_header = true;
            }
            std::string name = lx.ident();
            lx.expect(':', "vf clause");
            std::vector<std::string> keys = coefficient_keys(out.spec);
            std::map<std::string, Expr> coeffs;
            for (;;) {
                std::string key = lx.ident();
                lx.expect('=', "coefficient assignment");
                Expr value = detail::parse_vf_value(lx, ctx, out.spec);
                if (coeffs.count(key)) lx.fail("duplicate coefficient '" + key + "'");
                coeffs.emplace(key, value);
                if (!lx.accept(',')) break;
            }
            std::vector<Expr> xi;
            for (const auto& k : keys) {
                auto it = coeffs.find(k);
                if (it == coeffs.end()) lx.fail("missing coefficient '" + k + "' in vf " + name);
                xi.push_back(it->second);
                coeffs.erase(it);
            }
            auto itp = coeffs.find("phi");
            if (itp == coeffs.end()) lx.fail("missing coefficient 'phi' in vf " + name);
            Expr phi = itp->second;
            coeffs.erase(itp);
            if (!coeffs.empty()) lx.fail("unknown coefficient '" + coeffs.begin()->first + "'");
            out.fields.emplace_back(out.spec, std::move(xi), phi, name);
        } else {
            lx.fail("unknown clause '" + kw + "'");
        }
        lx.expect(';', "clause terminator");
    }
    if (out.fields.empty()) throw SymbolicError("vf file: no vector fields declared");
    return out;
}

inline std::string print_vector_field(const VectorField& v) {
    std::vector<std::string> keys = coefficient_keys(v.spec);
    std::ostringstream os;
    os << "vf " << (v.name.empty() ? "v" : v.name) << ":";
    for (std::size_t i = 0; i < keys.size(); ++i)
        os << (i ? ", " : " ") << keys[i] << "=" << to_string(v.xi[i]);
    os << ", phi=" << to_string(v.phi) << ";";
    return os.str();
}

}  // namespace flowsym
