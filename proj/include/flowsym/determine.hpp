#pragma once

// Determining equations for infinitesimal symmetries, and verification of
// candidate generators against them.
//
// The system is generated, never solved: prolong a fully general unknown-
// coefficient field, apply it to Delta, eliminate the solved coordinate, and
// set the coefficient of every jet monomial (and exponential marker) to zero.

#include "flowsym/prolong.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flowsym {

struct DeterminingRow {
    Expr monomial;
    Expr coefficient;
};

struct DeterminingSystem {
    PDE pde;
    VectorField generic;
    std::vector<DeterminingRow> rows;  // deterministic monomial order
    Expr restricted;                   // pr v(Delta) after elimination
};

/// The fully general generator: one unknown function per variable slot,
/// each depending on all independent variables and the dependent one.
inline VectorField generic_generator(const JetSpec& spec) {
    std::vector<Expr> sig;
    for (const auto& v : spec.indep) sig.push_back(symbol(v));
    sig.push_back(spec.dep_atom());
    std::vector<int> zeros(sig.size(), 0);
    std::vector<std::string> keys = coefficient_keys(spec);
    std::vector<Expr> xi;
    for (const auto& k : keys) xi.push_back(ufun(k, sig, zeros));
    return VectorField(spec, std::move(xi), ufun("phi", sig, zeros), "generic");
}

inline std::vector<Expr> jet_basis(const JetSpec& spec, int order) {
    std::vector<Expr> basis;
    for (int k = 1; k <= order; ++k)
        for (const auto& m : spec.multi_indices(k)) basis.push_back(jet(spec.dep, m));
    return basis;
}

inline DeterminingSystem determining_system(const PDE& pde) {
    VectorField gen = generic_generator(pde.spec);
    ProlongedVectorField pv = prolong(gen, pde.spec.max_order);
    Expr applied = apply_prolonged(pv, pde.delta);
    Expr restricted = pde.restrict_to_solution(applied);
    Expr dep = pde.spec.dep_atom();
    CollectResult col = collect(restricted, jet_basis(pde.spec, pde.spec.max_order + 1), &dep);
    DeterminingSystem sys{pde, gen, {}, restricted};
    for (const auto& [m, c] : col.rows) sys.rows.push_back(DeterminingRow{m, c});
    return sys;
}

// ---------------------------------------------------------------------------
// generator verification
// ---------------------------------------------------------------------------

struct ResidualReport {
    bool pass = false;
    Expr residual;                    // restricted pr v(Delta)
    std::vector<DeterminingRow> rows; // nonzero monomial rows of the residual
    std::string note;
};

namespace detail {
inline std::vector<DeterminingRow> residual_rows(const Expr& residual, const PDE& pde) {
    std::vector<DeterminingRow> rows;
    Expr dep = pde.spec.dep_atom();
    try {
        CollectResult col = collect(residual, jet_basis(pde.spec, pde.spec.max_order + 1), &dep);
        for (const auto& [m, c] : col.rows) rows.push_back(DeterminingRow{m, c});
    } catch (const SymbolicError&) {
        rows.push_back(DeterminingRow{number(1), residual});
    }
    return rows;
}
}  // namespace detail

/// PASS iff pr v(Delta) restricted to the solution manifold is symbolically
/// zero.  `relations` may carry extra differential constraints to impose
/// (e.g. alpha_t -> alpha_ss for a parametrized gauge family).
inline ResidualReport verify_generator(const VectorField& v, const PDE& pde,
                                       const Bindings& relations = {}) {
    ProlongedVectorField pv = prolong(v, pde.spec.max_order);
    Expr applied = apply_prolonged(pv, pde.delta);
    Expr restricted = pde.restrict_to_solution(applied);
    if (!relations.empty()) restricted = substitute(restricted, relations);
    ResidualReport rep;
    rep.residual = restricted;
    rep.pass = restricted.is_zero();
    if (!rep.pass) rep.rows = detail::residual_rows(restricted, pde);
    return rep;
}

struct FamilyReport {
    bool pass = false;
    Expr residual;
    // per-constant verdicts: residual of the one-parameter slice c_i = 1,
    // all other constants zero
    std::vector<std::pair<std::string, ResidualReport>> per_constant;
};

/// Verifies a parametrized family at once: the residual, collected as a
/// polynomial in the free constants, must vanish coefficientwise.
inline FamilyReport verify_family(const VectorField& v, const PDE& pde,
                                  const std::vector<std::string>& constants) {
    ResidualReport whole = verify_generator(v, pde);
    FamilyReport rep;
    rep.residual = whole.residual;
    rep.pass = whole.pass;
    for (const auto& cname : constants) {
        Bindings slice;
        for (const auto& other : constants)
            slice.emplace(symbol(other), other == cname ? number(1) : number(0));
        std::vector<Expr> xi;
        for (const auto& c : v.xi) xi.push_back(substitute(c, slice));
        VectorField vs(v.spec, std::move(xi), substitute(v.phi, slice), v.name + "#" + cname);
        rep.per_constant.emplace_back(cname, verify_generator(vs, pde));
    }
    return rep;
}

/// xi_x - eta_y = 0 and eta_x + xi_y = 0; both coefficients harmonic follows
/// and is checked as a corollary when the relations hold.
inline bool check_cauchy_riemann(const Expr& xi, const Expr& eta) {
    Expr x = symbol("x"), y = symbol("y");
    Expr cr1 = partial(xi, x) - partial(eta, y);
    Expr cr2 = partial(eta, x) + partial(xi, y);
    if (!cr1.is_zero() || !cr2.is_zero()) return false;
    Expr lap_xi = partial(partial(xi, x), x) + partial(partial(xi, y), y);
    Expr lap_eta = partial(partial(eta, x), x) + partial(partial(eta, y), y);
    if (!lap_xi.is_zero() || !lap_eta.is_zero())
        throw SymbolicError("check_cauchy_riemann: relations hold but coefficients not harmonic");
    return true;
}

/// Substitutes a generator's coefficients into every determining equation;
/// zero rows everywhere is the soundness link with verify_generator.
inline bool satisfies_determining_system(const VectorField& v, const DeterminingSystem& sys) {
    const std::vector<std::string> keys = coefficient_keys(sys.pde.spec);
    std::set<Expr, ExprLess> atoms;
    for (const auto& row : sys.rows)
        for (const auto& a : atoms_of_kind(row.coefficient, Kind::Unknown)) atoms.insert(a);
    // bind every derivative atom of an unknown coefficient to the matching
    // derivative of the candidate's coefficient
    Bindings b;
    for (const auto& atom : atoms) {
        Expr target;
        bool found = false;
        if (atom.name() == "phi") {
            target = v.phi;
            found = true;
        } else {
            for (std::size_t kk = 0; kk < keys.size(); ++kk)
                if (keys[kk] == atom.name()) {
                    target = v.xi[kk];
                    found = true;
                    break;
                }
        }
        if (!found) continue;
        Expr d = target;
        for (std::size_t s = 0; s < atom.sig().size(); ++s)
            for (int r = 0; r < atom.midx()[s]; ++r) d = partial(d, atom.sig()[s]);
        b.emplace(atom, d);
    }
    for (const auto& row : sys.rows)
        if (!substitute(row.coefficient, b).is_zero()) return false;
    return true;
}

}  // namespace flowsym
