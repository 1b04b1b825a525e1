#include "homoglab/solver.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "homoglab/error.hpp"
#include "homoglab/stencil.hpp"

namespace homoglab {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

/// Node equation mode_c [ sum_v w_cv (2u_p - u_{p+v} - u_{p-v}) + delta u_p + k_c ] = f_p.
/// Neighbor entries >= 0 are unknowns; entries < 0 encode fixed value -1 - e.
struct Scheme {
    int unknowns = 0;
    double delta = 0.0;
    std::vector<std::array<int, 8>> nbr;
    std::vector<BellmanMode> mode;
    std::vector<int> ctrl_begin;
    std::vector<StencilWeights> weights;
    std::vector<double> k;
    std::vector<double> fixed;
    std::vector<double> rhs;

    int controls(int p) const { return ctrl_begin[p + 1] - ctrl_begin[p]; }

    double neighbor(const Vec& x, int e) const { return e >= 0 ? x[e] : fixed[static_cast<std::size_t>(-1 - e)]; }

    double control_value(const Vec& x, int p, int c) const {
        const int idx = ctrl_begin[p] + c;
        const auto& w = weights[idx];
        const auto& nb = nbr[p];
        double s = delta * x[p] + k[idx];
        for (int v = 0; v < 4; ++v) s += w[v] * (2.0 * x[p] - neighbor(x, nb[2 * v]) - neighbor(x, nb[2 * v + 1]));
        return s;
    }

    /// Optimal control and its value at p; ties keep `current`.
    std::pair<int, double> best(const Vec& x, int p, int current) const {
        const int nc = controls(p);
        int arg = current >= 0 && current < nc ? current : 0;
        double val = control_value(x, p, arg);
        const bool is_min = mode[p] == BellmanMode::Min;
        for (int c = 0; c < nc; ++c) {
            if (c == arg) continue;
            const double v = control_value(x, p, c);
            const double margin = 1e-13 * (1.0 + std::abs(val));
            if (is_min ? v < val - margin : v > val + margin) {
                arg = c;
                val = v;
            }
        }
        return {arg, val};
    }

    bool linear() const {
        for (int p = 0; p < unknowns; ++p)
            if (controls(p) != 1) return false;
        return true;
    }
};

void add_controls(Scheme& s, const ControlSet& cs, double h2, const std::string& where) {
    s.mode.push_back(cs.mode);
    for (const auto& c : cs.controls) {
        const auto w = stencil_weights(c.a);
        if (!w)
            throw StencilError("coefficient " + c.a.to_string() + " at " + where +
                               " is not decomposable over the monotone stencil");
        StencilWeights scaled = *w;
        for (double& v : scaled) v /= h2;
        s.weights.push_back(scaled);
        s.k.push_back(c.c);
    }
    s.ctrl_begin.push_back(static_cast<int>(s.weights.size()));
}

std::string node_name(double x, double y) {
    std::ostringstream os;
    os << "node (" << x << ", " << y << ")";
    return os.str();
}

class HowardEngine {
public:
    explicit HowardEngine(const Scheme* scheme) : s_(scheme) {}

    /// Solves in place; `policy` is used as the starting policy when sized correctly.
    SolveReport run(Vec& x, std::vector<int>& policy, const SolveOptions& opt) {
        const auto t0 = std::chrono::steady_clock::now();
        SolveReport rep;
        const int n = s_->unknowns;
        if (static_cast<int>(policy.size()) != n) {
            policy.assign(static_cast<std::size_t>(n), 0);
            for (int p = 0; p < n; ++p) policy[p] = s_->best(x, p, 0).first;
        }
        for (int it = 1; it <= opt.max_iterations; ++it) {
            rep.iterations = it;
            if (!factored_ || policy != factored_policy_) factor(policy);
            Vec b = rhs(policy);
            x = lu_.solve(b);
            if (lu_.info() != Eigen::Success) throw NonConvergence("sparse factorization solve failed");
            auto [res, next] = residual_and_policy(x, policy);
            if (res > opt.tol) {
                // One step of iterative refinement against roundoff.
                Vec r = b - mat_ * x;
                x += lu_.solve(r);
                std::tie(res, next) = residual_and_policy(x, policy);
            }
            // Floor at the roundoff level of the residual evaluation.
            const double floor = 256.0 * std::numeric_limits<double>::epsilon() *
                                 mat_.diagonal().cwiseAbs().maxCoeff() * std::max(1.0, x.lpNorm<Eigen::Infinity>());
            const double tol = std::max(opt.tol, floor);
            rep.residual_history.push_back(res);
            rep.residual = res;
            std::size_t switches = 0;
            for (int p = 0; p < n; ++p) switches += next[p] != policy[p];
            rep.policy_switches += switches;
            if (res <= tol) break;
            if (switches == 0) {
                rep.wall_seconds = elapsed(t0);
                throw NonConvergence("policy stable but residual " + std::to_string(res) + " exceeds tolerance " +
                                     std::to_string(opt.tol) + " after " + std::to_string(it) + " iterations");
            }
            policy = std::move(next);
            if (it == opt.max_iterations) {
                rep.wall_seconds = elapsed(t0);
                throw NonConvergence("policy iteration reached " + std::to_string(it) + " iterations, residual " +
                                     std::to_string(res));
            }
        }
        rep.wall_seconds = elapsed(t0);
        return rep;
    }

    void invalidate() { factored_ = false; }

private:
    static double elapsed(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void factor(const std::vector<int>& policy) {
        const int n = s_->unknowns;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(n) * 9);
        for (int p = 0; p < n; ++p) {
            const auto& w = s_->weights[s_->ctrl_begin[p] + policy[p]];
            double diag = s_->delta;
            // Every neighbor gets an entry, so the sparsity pattern is policy independent.
            for (int v = 0; v < 4; ++v) {
                diag += 2.0 * w[v];
                for (int side = 0; side < 2; ++side) {
                    const int e = s_->nbr[p][2 * v + side];
                    if (e >= 0) trip.emplace_back(p, e, -w[v]);
                }
            }
            trip.emplace_back(p, p, diag);
        }
        mat_.resize(n, n);
        mat_.setFromTriplets(trip.begin(), trip.end());
        mat_.makeCompressed();
        if (!analyzed_) {
            lu_.analyzePattern(mat_);
            analyzed_ = true;
        }
        lu_.factorize(mat_);
        if (lu_.info() != Eigen::Success) throw NonConvergence("sparse factorization failed");
        factored_policy_ = policy;
        factored_ = true;
    }

    Vec rhs(const std::vector<int>& policy) const {
        const int n = s_->unknowns;
        Vec b(n);
        for (int p = 0; p < n; ++p) {
            const int idx = s_->ctrl_begin[p] + policy[p];
            const auto& w = s_->weights[idx];
            double v = (s_->rhs.empty() ? 0.0 : s_->rhs[p]) - s_->k[idx];
            for (int d = 0; d < 4; ++d) {
                if (w[d] == 0.0) continue;
                for (int side = 0; side < 2; ++side) {
                    const int e = s_->nbr[p][2 * d + side];
                    if (e < 0) v += w[d] * s_->fixed[static_cast<std::size_t>(-1 - e)];
                }
            }
            b[p] = v;
        }
        return b;
    }

    std::pair<double, std::vector<int>> residual_and_policy(const Vec& x, const std::vector<int>& policy) const {
        const int n = s_->unknowns;
        std::vector<int> next(static_cast<std::size_t>(n));
        double res = 0.0;
        for (int p = 0; p < n; ++p) {
            const auto [arg, val] = s_->best(x, p, policy[p]);
            next[p] = arg;
            res = std::max(res, std::abs(val - (s_->rhs.empty() ? 0.0 : s_->rhs[p])));
        }
        return {res, next};
    }

    const Scheme* s_;
    SpMat mat_;
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
    bool analyzed_ = false;
    bool factored_ = false;
    std::vector<int> factored_policy_;
};

}  // namespace

// ---------------------------------------------------------------- boundary data

BoundaryData BoundaryData::zero() { return BoundaryData{}; }

BoundaryData BoundaryData::affine(std::array<double, 2> p, double c, std::array<double, 2> origin) {
    BoundaryData g;
    g.kind_ = Kind::Affine;
    g.p_ = p;
    g.c_ = c;
    g.origin_ = origin;
    return g;
}

BoundaryData BoundaryData::quadratic(SymMatrix a, std::array<double, 2> p, double c, std::array<double, 2> origin) {
    if (a.dim() != 2) throw InvalidInput("quadratic boundary data needs a 2x2 matrix");
    BoundaryData g;
    g.kind_ = Kind::Quadratic;
    g.a_ = std::move(a);
    g.p_ = p;
    g.c_ = c;
    g.origin_ = origin;
    return g;
}

BoundaryData BoundaryData::samples(GridFunction values) {
    BoundaryData g;
    g.kind_ = Kind::Samples;
    g.samples_ = std::make_shared<const GridFunction>(std::move(values));
    return g;
}

double BoundaryData::at(const GridFunction& grid, int i, int j) const {
    const double dx = grid.x(i) - origin_[0];
    const double dy = grid.y(j) - origin_[1];
    switch (kind_) {
        case Kind::Zero:
            return 0.0;
        case Kind::Affine:
            return p_[0] * dx + p_[1] * dy + c_;
        case Kind::Quadratic:
            return 0.5 * (a_(0, 0) * dx * dx + 2.0 * a_(0, 1) * dx * dy + a_(1, 1) * dy * dy) + p_[0] * dx +
                   p_[1] * dy + c_;
        case Kind::Samples:
            if (samples_->n() != grid.n()) throw InvalidInput("boundary samples have a different grid size");
            return (*samples_)(i, j);
    }
    return 0.0;
}

void BoundaryData::fill(GridFunction& u) const {
    const int n = u.n();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (u.is_boundary(i, j)) u(i, j) = at(u, i, j);
}

std::string BoundaryData::describe() const {
    std::ostringstream os;
    switch (kind_) {
        case Kind::Zero:
            return "zero";
        case Kind::Affine:
            os << "affine(p=[" << p_[0] << "," << p_[1] << "],c=" << c_ << ")";
            break;
        case Kind::Quadratic:
            os << "quadratic(A=" << a_.to_string() << ",p=[" << p_[0] << "," << p_[1] << "],c=" << c_ << ")";
            break;
        case Kind::Samples:
            return "samples";
    }
    return os.str();
}

// ---------------------------------------------------------------- Dirichlet problems

struct DirichletProblem::Impl {
    Box box;
    int n;
    Scheme scheme;
    HowardEngine engine{&scheme};
    std::vector<int> policy;

    Impl(const OperatorField& field, Box b, int n_) : box(b), n(n_) {
        if (n < 3) throw InvalidInput("Dirichlet problems need at least one interior node");
        if (field.dim() != 2) throw InvalidInput("the finite-difference solver is two-dimensional");
        const GridFunction probe(box, n);
        const double h = probe.h();
        const int m = n - 2;
        scheme.unknowns = m * m;
        scheme.nbr.resize(static_cast<std::size_t>(m) * m);
        scheme.ctrl_begin.push_back(0);
        std::vector<int> boundary_slot(static_cast<std::size_t>(n) * n, -1);
        int slots = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (probe.is_boundary(i, j)) boundary_slot[probe.index(i, j)] = slots++;
        scheme.fixed.assign(static_cast<std::size_t>(slots), 0.0);
        auto encode = [&](int i, int j) {
            if (probe.is_boundary(i, j)) return -1 - boundary_slot[probe.index(i, j)];
            return (j - 1) * m + (i - 1);
        };
        for (int j = 1; j <= m; ++j) {
            for (int i = 1; i <= m; ++i) {
                const int p = (j - 1) * m + (i - 1);
                for (int v = 0; v < 4; ++v) {
                    const auto& dv = kStencilDirections[v];
                    scheme.nbr[p][2 * v] = encode(i + dv[0], j + dv[1]);
                    scheme.nbr[p][2 * v + 1] = encode(i - dv[0], j - dv[1]);
                }
                const std::array<double, 2> x{probe.x(i), probe.y(j)};
                add_controls(scheme, field.controls_at(x), h * h, node_name(x[0], x[1]));
            }
        }
    }

    void load_boundary(const GridFunction& u) {
        int slot = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (u.is_boundary(i, j)) scheme.fixed[static_cast<std::size_t>(slot++)] = u(i, j);
    }
};

DirichletProblem::DirichletProblem(const OperatorField& field, Box box, int n)
    : impl_(std::make_unique<Impl>(field, box, n)) {}
DirichletProblem::~DirichletProblem() = default;
DirichletProblem::DirichletProblem(DirichletProblem&&) noexcept = default;
DirichletProblem& DirichletProblem::operator=(DirichletProblem&&) noexcept = default;

const Box& DirichletProblem::box() const { return impl_->box; }
int DirichletProblem::n() const { return impl_->n; }
bool DirichletProblem::linear() const { return impl_->scheme.linear(); }

SolveResult DirichletProblem::solve(const BoundaryData& g, const GridFunction* rhs, const SolveOptions& options) {
    if (!(options.tol > 0.0)) throw InvalidInput("solve: tol must be positive");
    Impl& im = *impl_;
    GridFunction u(im.box, im.n);
    g.fill(u);
    im.load_boundary(u);
    const int m = im.n - 2;
    im.scheme.rhs.clear();
    if (rhs) {
        if (rhs->n() != im.n) throw InvalidInput("solve: right-hand side has a different grid size");
        im.scheme.rhs.resize(static_cast<std::size_t>(m) * m);
        for (int j = 1; j <= m; ++j)
            for (int i = 1; i <= m; ++i) im.scheme.rhs[(j - 1) * m + (i - 1)] = (*rhs)(i, j);
    }
    Vec x = Vec::Zero(m * m);
    SolveReport rep = im.engine.run(x, im.policy, options);
    for (int j = 1; j <= m; ++j)
        for (int i = 1; i <= m; ++i) u(i, j) = x[(j - 1) * m + (i - 1)];
    return SolveResult{std::move(u), std::move(rep)};
}

GridFunction DirichletProblem::apply(const GridFunction& u) const {
    const Impl& im = *impl_;
    if (u.n() != im.n) throw InvalidInput("apply: grid size mismatch");
    Scheme s = im.scheme;
    s.rhs.clear();
    int slot = 0;
    for (int j = 0; j < im.n; ++j)
        for (int i = 0; i < im.n; ++i)
            if (u.is_boundary(i, j)) s.fixed[static_cast<std::size_t>(slot++)] = u(i, j);
    const int m = im.n - 2;
    Vec x(m * m);
    for (int j = 1; j <= m; ++j)
        for (int i = 1; i <= m; ++i) x[(j - 1) * m + (i - 1)] = u(i, j);
    GridFunction out(u.box(), u.n());
    for (int j = 1; j <= m; ++j)
        for (int i = 1; i <= m; ++i) out(i, j) = s.best(x, (j - 1) * m + (i - 1), 0).second;
    return out;
}

int DirichletProblem::relax_upward(GridFunction& u, int max_sweeps, double tol) const {
    const Impl& im = *impl_;
    if (u.n() != im.n) throw InvalidInput("relax_upward: grid size mismatch");
    Scheme s = im.scheme;
    s.rhs.clear();
    int slot = 0;
    for (int j = 0; j < im.n; ++j)
        for (int i = 0; i < im.n; ++i)
            if (u.is_boundary(i, j)) s.fixed[static_cast<std::size_t>(slot++)] = u(i, j);
    const int m = im.n - 2;
    Vec x(m * m);
    for (int j = 1; j <= m; ++j)
        for (int i = 1; i <= m; ++i) x[(j - 1) * m + (i - 1)] = u(i, j);
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double moved = 0.0;
        for (int p = 0; p < m * m; ++p) {
            // Each control is affine and increasing in x[p]; solve for its root.
            const bool is_min = s.mode[p] == BellmanMode::Min;
            double target = is_min ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
            for (int c = 0; c < s.controls(p); ++c) {
                const double at = s.control_value(x, p, c);
                const auto& w = s.weights[s.ctrl_begin[p] + c];
                const double slope = s.delta + 2.0 * (w[0] + w[1] + w[2] + w[3]);
                const double root = x[p] - at / slope;
                target = is_min ? std::max(target, root) : std::min(target, root);
            }
            if (target > x[p]) {
                moved = std::max(moved, target - x[p]);
                x[p] = target;
            }
        }
        if (moved <= tol) break;
    }
    for (int j = 1; j <= m; ++j)
        for (int i = 1; i <= m; ++i) u(i, j) = x[(j - 1) * m + (i - 1)];
    return sweep;
}

SolveResult solve_dirichlet(const OperatorField& field, Box box, int n, const BoundaryData& g, const GridFunction* rhs,
                            const SolveOptions& options) {
    DirichletProblem problem(field, box, n);
    return problem.solve(g, rhs, options);
}

GridFunction apply_operator(const OperatorField& field, const GridFunction& u) {
    return DirichletProblem(field, u.box(), u.n()).apply(u);
}

double min_interior(const GridFunction& u) {
    double m = std::numeric_limits<double>::infinity();
    for (int j = 1; j < u.n() - 1; ++j)
        for (int i = 1; i < u.n() - 1; ++i) m = std::min(m, u(i, j));
    return m;
}

// ---------------------------------------------------------------- cell problem

CellSolve solve_cell(std::shared_ptr<const Realization> realization, const SymMatrix& a, double delta, int per_unit,
                     const SolveOptions& options, std::vector<int>* warm_policy) {
    if (!realization) throw InvalidInput("solve_cell: null realization");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidInput("solve_cell: delta must be positive");
    if (per_unit < 1) throw InvalidInput("solve_cell: per_unit must be positive");
    const Window& win = realization->window();
    if (win.nx != win.ny) throw InvalidInput("solve_cell: the torus window must be square");
    const int n = static_cast<int>(win.nx) * per_unit;
    const double h = 1.0 / per_unit;
    const OperatorField field = periodic_field_of(realization).translate(a);

    Scheme s;
    s.delta = delta;
    s.unknowns = n * n;
    s.nbr.resize(static_cast<std::size_t>(n) * n);
    s.ctrl_begin.push_back(0);
    auto wrap = [n](int v) { return ((v % n) + n) % n; };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int p = j * n + i;
            for (int v = 0; v < 4; ++v) {
                const auto& dv = kStencilDirections[v];
                s.nbr[p][2 * v] = wrap(j + dv[1]) * n + wrap(i + dv[0]);
                s.nbr[p][2 * v + 1] = wrap(j - dv[1]) * n + wrap(i - dv[0]);
            }
            const std::array<double, 2> x{static_cast<double>(win.x0) + static_cast<double>(i) / per_unit,
                                          static_cast<double>(win.y0) + static_cast<double>(j) / per_unit};
            add_controls(s, field.controls_at(x), h * h, node_name(x[0], x[1]));
        }
    }
    HowardEngine engine(&s);
    std::vector<int> local;
    std::vector<int>& policy = warm_policy ? *warm_policy : local;
    Vec x = Vec::Zero(n * n);
    SolveReport rep = engine.run(x, policy, options);
    GridFunction w(Box{static_cast<double>(win.x0), static_cast<double>(win.y0), static_cast<double>(win.nx)}, n + 1);
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) w(i, j) = x[(j % n) * n + (i % n)];
    return CellSolve{std::move(w), delta * x[0], std::move(rep)};
}

double richardson_to_zero(const std::vector<double>& deltas, const std::vector<double>& values) {
    if (deltas.size() != values.size() || deltas.empty()) throw InvalidInput("richardson: mismatched inputs");
    const std::size_t k = std::min<std::size_t>(3, deltas.size());
    const std::size_t first = deltas.size() - k;
    double total = 0.0;
    for (std::size_t i = first; i < deltas.size(); ++i) {
        double weight = 1.0;
        for (std::size_t j = first; j < deltas.size(); ++j) {
            if (j == i) continue;
            if (deltas[i] == deltas[j]) throw InvalidInput("richardson: repeated delta");
            weight *= (0.0 - deltas[j]) / (deltas[i] - deltas[j]);
        }
        total += weight * values[i];
    }
    return total;
}

CellSchedule solve_cell_schedule(std::shared_ptr<const Realization> realization, const SymMatrix& a,
                                 const std::vector<double>& deltas, int per_unit, const SolveOptions& options) {
    if (deltas.empty()) throw InvalidInput("solve_cell_schedule: empty schedule");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] < deltas[i - 1])) throw InvalidInput("solve_cell_schedule: schedule must decrease");
    CellSchedule out;
    std::vector<int> policy;
    for (double d : deltas) {
        const CellSolve cs = solve_cell(realization, a, d, per_unit, options, &policy);
        out.deltas.push_back(d);
        out.values.push_back(cs.value);
    }
    out.extrapolated = richardson_to_zero(out.deltas, out.values);
    return out;
}

}  // namespace homoglab
