#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "types.hpp"

namespace wdn {

enum class Relation { le, eq, ge };
enum class Sense { minimize, maximize };
enum class SolveStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    default: return "iteration-limit";
    }
}

struct Term {
    int var;
    double coef;
};

struct Constraint {
    std::vector<Term> terms;
    Relation rel = Relation::le;
    double rhs = 0.0;
    std::string name;
};

/// Sparse-row program; variables carry bounds, objective weight and an optional binary flag.
struct LinearProgram {
    Sense sense = Sense::minimize;
    std::vector<double> objective;
    std::vector<double> lo, hi;
    std::vector<char> binary;
    std::vector<std::string> names;
    std::vector<Constraint> constraints;

    int size() const { return static_cast<int>(objective.size()); }

    int add_var(std::string name, double lower, double upper, double obj = 0.0, bool is_binary = false) {
        if (is_binary) {
            lower = std::max(lower, 0.0);
            upper = std::min(upper, 1.0);
        }
        names.push_back(std::move(name));
        lo.push_back(lower);
        hi.push_back(upper);
        objective.push_back(obj);
        binary.push_back(is_binary ? 1 : 0);
        return size() - 1;
    }

    int add_binary(std::string name, double obj = 0.0) { return add_var(std::move(name), 0.0, 1.0, obj, true); }

    void add(std::vector<Term> terms, Relation rel, double rhs, std::string name = {}) {
        constraints.push_back({std::move(terms), rel, rhs, std::move(name)});
    }

    bool has_binaries() const { return std::any_of(binary.begin(), binary.end(), [](char b) { return b != 0; }); }

    void check() const {
        const auto n = objective.size();
        if (lo.size() != n || hi.size() != n || binary.size() != n || names.size() != n)
            throw Error("linear program: inconsistent dimensions");
        for (std::size_t j = 0; j < n; ++j) {
            if (lo[j] > hi[j]) throw Error("linear program: empty bounds on " + names[j]);
            if (binary[j] && (lo[j] < 0.0 || hi[j] > 1.0)) throw Error("linear program: binary bounds outside [0,1]");
        }
        for (const auto& c : constraints)
            for (const auto& t : c.terms)
                if (t.var < 0 || t.var >= size()) throw Error("linear program: term references unknown variable");
    }
};

struct Solution {
    SolveStatus status = SolveStatus::infeasible;
    std::vector<double> values;
    double objective_value = 0.0;
    long nodes = 0;
};

struct SolverOptions {
    double feas_tol = 1e-7;
    double gap_tol = 1e-6;
    long node_limit = 100000;
    long pivot_limit = 200000;
};

namespace lp_detail {

/**
 * Dense tableau over y >= 0 with rows A y <= b. Phase one uses a single
 * auxiliary column; both phases pivot by Bland's rule.
 */
class Tableau {
public:
    Tableau(int rows, int cols) : m_(rows), n_(cols), w_(cols + rows + 2), t_(static_cast<std::size_t>(rows) * w_, 0.0) {}

    double& at(int i, int j) { return t_[static_cast<std::size_t>(i) * w_ + static_cast<std::size_t>(j)]; }
    double& rhs(int i) { return at(i, static_cast<int>(w_) - 1); }

    /// Minimizes c.y; returns status and fills y.
    SolveStatus solve(const std::vector<double>& c, std::vector<double>& y, double& value, long pivot_limit) {
        const int aux = n_ + m_;
        const int cols = n_ + m_ + 1;
        basis_.resize(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i) {
            at(i, n_ + i) = 1.0;
            basis_[static_cast<std::size_t>(i)] = n_ + i;
        }
        pivots_ = 0;
        int worst = -1;
        for (int i = 0; i < m_; ++i)
            if (rhs(i) < -kEps && (worst < 0 || rhs(i) < rhs(worst))) worst = i;
        std::vector<char> allowed(static_cast<std::size_t>(cols), 1);
        if (worst >= 0) {
            for (int i = 0; i < m_; ++i) at(i, aux) = -1.0;
            pivot(worst, aux);
            std::vector<double> c1(static_cast<std::size_t>(cols), 0.0);
            c1[static_cast<std::size_t>(aux)] = 1.0;
            const auto st = run(c1, allowed, pivot_limit);
            if (st == SolveStatus::iteration_limit) return st;
            if (basic_value(aux) > 1e-7) return SolveStatus::infeasible;
            for (int i = 0; i < m_; ++i) {
                if (basis_[static_cast<std::size_t>(i)] != aux) continue;
                int col = -1;
                for (int j = 0; j < cols; ++j)
                    if (j != aux && std::abs(at(i, j)) > kPivot) { col = j; break; }
                if (col >= 0) pivot(i, col);
            }
            allowed[static_cast<std::size_t>(aux)] = 0;
        }
        std::vector<double> c2(static_cast<std::size_t>(cols), 0.0);
        for (int j = 0; j < n_; ++j) c2[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j)];
        const auto st = run(c2, allowed, pivot_limit);
        if (st != SolveStatus::optimal) return st;
        y.assign(static_cast<std::size_t>(n_), 0.0);
        for (int i = 0; i < m_; ++i)
            if (basis_[static_cast<std::size_t>(i)] < n_) y[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] = std::max(0.0, rhs(i));
        value = 0.0;
        for (int j = 0; j < n_; ++j) value += c[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)];
        return SolveStatus::optimal;
    }

private:
    static constexpr double kEps = 1e-9;
    static constexpr double kPivot = 1e-9;

    double basic_value(int var) {
        for (int i = 0; i < m_; ++i)
            if (basis_[static_cast<std::size_t>(i)] == var) return rhs(i);
        return 0.0;
    }

    void pivot(int r, int col) {
        const double inv = 1.0 / at(r, col);
        double* pr = &at(r, 0);
        for (std::size_t j = 0; j < w_; ++j) pr[j] *= inv;
        pr[col] = 1.0;
        for (int i = 0; i < m_; ++i) {
            if (i == r) continue;
            double* pi = &at(i, 0);
            const double f = pi[col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < w_; ++j) pi[j] -= f * pr[j];
            pi[col] = 0.0;
        }
        basis_[static_cast<std::size_t>(r)] = col;
        ++pivots_;
    }

    SolveStatus run(const std::vector<double>& c, const std::vector<char>& allowed, long pivot_limit) {
        const int cols = static_cast<int>(c.size());
        std::vector<double> d(static_cast<std::size_t>(cols));
        std::vector<char> is_basic(static_cast<std::size_t>(cols), 0);
        while (true) {
            std::fill(is_basic.begin(), is_basic.end(), 0);
            for (int b : basis_) is_basic[static_cast<std::size_t>(b)] = 1;
            // Reduced costs d_j = c_j - c_B B^-1 A_j, recomputed for stability.
            int enter = -1;
            for (int j = 0; j < cols && enter < 0; ++j) {
                if (!allowed[static_cast<std::size_t>(j)] || is_basic[static_cast<std::size_t>(j)]) continue;
                double dj = c[static_cast<std::size_t>(j)];
                for (int i = 0; i < m_; ++i) {
                    const double a = at(i, j);
                    if (a != 0.0) dj -= c[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] * a;
                }
                if (dj < -kEps) enter = j;
            }
            if (enter < 0) return SolveStatus::optimal;
            if (pivots_ >= pivot_limit) return SolveStatus::iteration_limit;
            double best = kInf;
            for (int i = 0; i < m_; ++i) {
                const double a = at(i, enter);
                if (a > kPivot) best = std::min(best, std::max(0.0, rhs(i)) / a);
            }
            int leave = -1;
            for (int i = 0; i < m_; ++i) {
                const double a = at(i, enter);
                if (a <= kPivot || std::max(0.0, rhs(i)) / a > best + 1e-12) continue;
                if (leave < 0 || basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]) leave = i;
            }
            if (leave < 0) return SolveStatus::unbounded;
            pivot(leave, enter);
        }
    }

    int m_, n_;
    std::size_t w_;
    std::vector<double> t_;
    std::vector<int> basis_;
    long pivots_ = 0;
};

/// Affine map from standard-form columns back to the original variables.
struct Column {
    int var;
    double sign;
};

} // namespace lp_detail

/// LP relaxation (binary flags ignored) by two-phase dense simplex.
inline Solution solve_lp(const LinearProgram& p, const SolverOptions& opt = {}) {
    using namespace lp_detail;
    p.check();
    const int n = p.size();
    std::vector<double> offset(static_cast<std::size_t>(n), 0.0);
    std::vector<Column> cols;
    std::vector<std::vector<Term>> yterms(static_cast<std::size_t>(n)); // y-columns per variable
    struct Row { std::vector<std::pair<int, double>> a; double b; };
    std::vector<Row> rows;

    for (int j = 0; j < n; ++j) {
        const double l = p.lo[static_cast<std::size_t>(j)], u = p.hi[static_cast<std::size_t>(j)];
        if (std::isfinite(l)) {
            offset[static_cast<std::size_t>(j)] = l;
            cols.push_back({j, 1.0});
            yterms[static_cast<std::size_t>(j)].push_back({static_cast<int>(cols.size()) - 1, 1.0});
            if (std::isfinite(u)) rows.push_back({{{static_cast<int>(cols.size()) - 1, 1.0}}, u - l});
        } else if (std::isfinite(u)) {
            offset[static_cast<std::size_t>(j)] = u;
            cols.push_back({j, -1.0});
            yterms[static_cast<std::size_t>(j)].push_back({static_cast<int>(cols.size()) - 1, -1.0});
        } else {
            cols.push_back({j, 1.0});
            yterms[static_cast<std::size_t>(j)].push_back({static_cast<int>(cols.size()) - 1, 1.0});
            cols.push_back({j, -1.0});
            yterms[static_cast<std::size_t>(j)].push_back({static_cast<int>(cols.size()) - 1, -1.0});
        }
    }
    for (const auto& c : p.constraints) {
        std::vector<std::pair<int, double>> a;
        double b = c.rhs;
        for (const auto& t : c.terms) {
            b -= t.coef * offset[static_cast<std::size_t>(t.var)];
            for (const auto& y : yterms[static_cast<std::size_t>(t.var)]) a.emplace_back(y.var, t.coef * y.coef);
        }
        if (c.rel != Relation::ge) rows.push_back({a, b});
        if (c.rel != Relation::le) {
            for (auto& e : a) e.second = -e.second;
            rows.push_back({a, -b});
        }
    }

    const int ny = static_cast<int>(cols.size());
    Tableau tab(static_cast<int>(rows.size()), ny);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [j, v] : rows[i].a) tab.at(static_cast<int>(i), j) += v;
        tab.rhs(static_cast<int>(i)) = rows[i].b;
    }
    const double sgn = p.sense == Sense::maximize ? -1.0 : 1.0;
    std::vector<double> cy(static_cast<std::size_t>(ny));
    for (int k = 0; k < ny; ++k)
        cy[static_cast<std::size_t>(k)] = sgn * p.objective[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)].var)] * cols[static_cast<std::size_t>(k)].sign;

    Solution s;
    std::vector<double> y;
    double v = 0.0;
    s.status = tab.solve(cy, y, v, opt.pivot_limit);
    if (s.status != SolveStatus::optimal) return s;
    s.values = offset;
    for (int k = 0; k < ny; ++k)
        s.values[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)].var)] += cols[static_cast<std::size_t>(k)].sign * y[static_cast<std::size_t>(k)];
    for (int j = 0; j < n; ++j)
        s.values[static_cast<std::size_t>(j)] = std::clamp(s.values[static_cast<std::size_t>(j)], p.lo[static_cast<std::size_t>(j)], p.hi[static_cast<std::size_t>(j)]);
    s.objective_value = 0.0;
    for (int j = 0; j < n; ++j) s.objective_value += p.objective[static_cast<std::size_t>(j)] * s.values[static_cast<std::size_t>(j)];
    return s;
}

/// Largest constraint violation of x.
inline double max_violation(const LinearProgram& p, const std::vector<double>& x) {
    double worst = 0.0;
    for (const auto& c : p.constraints) {
        double a = 0.0;
        for (const auto& t : c.terms) a += t.coef * x[static_cast<std::size_t>(t.var)];
        const double r = a - c.rhs;
        if (c.rel != Relation::ge) worst = std::max(worst, r);
        if (c.rel != Relation::le) worst = std::max(worst, -r);
    }
    for (int j = 0; j < p.size(); ++j) {
        worst = std::max(worst, p.lo[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
        worst = std::max(worst, x[static_cast<std::size_t>(j)] - p.hi[static_cast<std::size_t>(j)]);
    }
    return worst;
}

/// Best-first branch and bound on binaries; lowest fractional index, down branch first.
inline Solution solve_milp(const LinearProgram& p, const SolverOptions& opt = {}) {
    p.check();
    if (!p.has_binaries()) return solve_lp(p, opt);
    const double sgn = p.sense == Sense::maximize ? -1.0 : 1.0;
    struct Node {
        double bound;
        long id;
        std::vector<double> lo, hi;
    };
    auto worse = [](const Node& a, const Node& b) { return a.bound != b.bound ? a.bound > b.bound : a.id > b.id; };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
    long next_id = 0;
    open.push({-kInf, next_id++, p.lo, p.hi});

    Solution best;
    best.status = SolveStatus::infeasible;
    double incumbent = kInf;
    long nodes = 0;
    LinearProgram sub = p;
    while (!open.empty()) {
        Node nd = open.top();
        open.pop();
        if (nd.bound >= incumbent - opt.gap_tol) continue;
        if (nodes >= opt.node_limit) {
            best.status = SolveStatus::iteration_limit;
            best.nodes = nodes;
            return best;
        }
        ++nodes;
        sub.lo = nd.lo;
        sub.hi = nd.hi;
        Solution r = solve_lp(sub, opt);
        if (r.status == SolveStatus::unbounded) {
            r.nodes = nodes;
            return r;
        }
        if (r.status != SolveStatus::optimal) continue;
        const double val = sgn * r.objective_value;
        if (val >= incumbent - opt.gap_tol) continue;
        int frac = -1;
        for (int j = 0; j < p.size(); ++j) {
            if (!p.binary[static_cast<std::size_t>(j)]) continue;
            const double x = r.values[static_cast<std::size_t>(j)];
            if (std::abs(x - std::round(x)) > 1e-6) { frac = j; break; }
        }
        if (frac < 0) {
            for (int j = 0; j < p.size(); ++j)
                if (p.binary[static_cast<std::size_t>(j)]) r.values[static_cast<std::size_t>(j)] = std::round(r.values[static_cast<std::size_t>(j)]);
            r.objective_value = 0.0;
            for (int j = 0; j < p.size(); ++j) r.objective_value += p.objective[static_cast<std::size_t>(j)] * r.values[static_cast<std::size_t>(j)];
            incumbent = sgn * r.objective_value;
            best = r;
            continue;
        }
        Node down{val, next_id++, nd.lo, nd.hi};
        down.hi[static_cast<std::size_t>(frac)] = 0.0;
        Node up{val, next_id++, std::move(nd.lo), std::move(nd.hi)};
        up.lo[static_cast<std::size_t>(frac)] = 1.0;
        open.push(std::move(down));
        open.push(std::move(up));
    }
    best.nodes = nodes;
    return best;
}

/// CPLEX-LP-like text rendering for debugging.
inline std::string dump_lp(const LinearProgram& p) {
    std::ostringstream o;
    o.precision(12);
    auto name = [&](int j) { return p.names[static_cast<std::size_t>(j)].empty() ? "x" + std::to_string(j) : p.names[static_cast<std::size_t>(j)]; };
    auto expr = [&](const std::vector<Term>& ts) {
        bool first = true;
        for (const auto& t : ts) {
            if (t.coef == 0.0) continue;
            o << (t.coef < 0 ? " - " : first ? " " : " + ") << std::abs(t.coef) << ' ' << name(t.var);
            first = false;
        }
        if (first) o << " 0";
    };
    o << (p.sense == Sense::maximize ? "Maximize\n obj:" : "Minimize\n obj:");
    std::vector<Term> obj;
    for (int j = 0; j < p.size(); ++j) obj.push_back({j, p.objective[static_cast<std::size_t>(j)]});
    expr(obj);
    o << "\nSubject To\n";
    for (std::size_t i = 0; i < p.constraints.size(); ++i) {
        const auto& c = p.constraints[i];
        o << ' ' << (c.name.empty() ? "c" + std::to_string(i) : c.name) << ':';
        expr(c.terms);
        o << (c.rel == Relation::le ? " <= " : c.rel == Relation::ge ? " >= " : " = ") << c.rhs << '\n';
    }
    o << "Bounds\n";
    for (int j = 0; j < p.size(); ++j) {
        if (p.binary[static_cast<std::size_t>(j)]) continue;
        const double l = p.lo[static_cast<std::size_t>(j)], u = p.hi[static_cast<std::size_t>(j)];
        o << ' ';
        if (std::isfinite(l)) o << l << " <= "; else o << "-inf <= ";
        o << name(j);
        if (std::isfinite(u)) o << " <= " << u; else o << " <= +inf";
        o << '\n';
    }
    o << "Binaries\n";
    for (int j = 0; j < p.size(); ++j)
        if (p.binary[static_cast<std::size_t>(j)]) o << ' ' << name(j) << '\n';
    o << "End\n";
    return o.str();
}

} // namespace wdn
