#pragma once

// Linear assignment: forward auction with epsilon scaling over dense,
// sparse (candidate list) and lazily generated rows; an exhaustive solver
// for small instances; and Hopcroft-Karp feasibility checks.

#include "bayesmap/common.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <queue>
#include <variant>

namespace bayesmap {

enum class Sense { minimize, maximize };

/// Thrown when no perfect matching exists on the allowed pairs.
class InfeasibleAssignment : public Error {
public:
    using Error::Error;
};

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One candidate (column, cost) of a sparse row.
struct Candidate {
    Index column;
    double cost;
};

/// Square assignment problem. Forbidden pairs carry an infinite cost
/// (+inf when minimising, -inf when maximising) or are simply absent from
/// a sparse row.
class AssignmentProblem {
public:
    using RowOracle = std::function<void(Index row, Eigen::Ref<VectorXd> out)>;

    static AssignmentProblem dense(const MatrixXd& cost, Sense sense = Sense::minimize)
    {
        if (cost.rows() != cost.cols())
            throw InvalidInput("AssignmentProblem: cost matrix must be square");
        AssignmentProblem p(cost.rows(), sense);
        p.dense_ = RowMajorMatrix(cost);
        for (Index i = 0; i < cost.rows(); ++i)
            for (Index j = 0; j < cost.cols(); ++j)
                p.check_entry(cost(i, j));
        return p;
    }

    static AssignmentProblem sparse(std::vector<std::vector<Candidate>> rows, Sense sense = Sense::minimize)
    {
        AssignmentProblem p(static_cast<Index>(rows.size()), sense);
        p.sparse_.offsets.assign(1, 0);
        for (const auto& row : rows) {
            for (const auto& c : row) {
                if (c.column < 0 || c.column >= p.n_)
                    throw InvalidInput("AssignmentProblem: candidate column out of range");
                p.check_entry(c.cost);
                if (std::isinf(c.cost))
                    continue;
                p.sparse_.columns.push_back(c.column);
                p.sparse_.costs.push_back(c.cost);
            }
            p.sparse_.offsets.push_back(static_cast<Index>(p.sparse_.columns.size()));
        }
        p.kind_ = Kind::sparse;
        return p;
    }

    static AssignmentProblem oracle(Index n, RowOracle rows, Sense sense = Sense::minimize)
    {
        AssignmentProblem p(n, sense);
        p.oracle_ = std::move(rows);
        p.kind_ = Kind::oracle;
        return p;
    }

    Index size() const { return n_; }
    Sense sense() const { return sense_; }
    bool is_sparse() const { return kind_ == Kind::sparse; }
    bool is_oracle() const { return kind_ == Kind::oracle; }

    /// Calls fn(column, cost) for every allowed pair of row i.
    template <typename Fn>
    void for_each_in_row(Index i, Fn&& fn, VectorXd& scratch) const
    {
        switch (kind_) {
        case Kind::dense:
            for (Index j = 0; j < n_; ++j) {
                const double c = dense_(i, j);
                if (!std::isinf(c))
                    fn(j, c);
            }
            break;
        case Kind::sparse:
            for (Index e = sparse_.offsets[static_cast<std::size_t>(i)];
                 e < sparse_.offsets[static_cast<std::size_t>(i) + 1]; ++e)
                fn(sparse_.columns[static_cast<std::size_t>(e)], sparse_.costs[static_cast<std::size_t>(e)]);
            break;
        case Kind::oracle:
            scratch.resize(n_);
            oracle_(i, scratch);
            for (Index j = 0; j < n_; ++j) {
                check_entry(scratch[j]);
                if (!std::isinf(scratch[j]))
                    fn(j, scratch[j]);
            }
            break;
        }
    }

    /// Cost of pair (i, j); infinite when forbidden.
    double cost(Index i, Index j) const
    {
        if (kind_ == Kind::dense)
            return dense_(i, j);
        double found = forbidden_cost();
        VectorXd scratch;
        for_each_in_row(i, [&](Index col, double c) {
            if (col == j)
                found = c;
        }, scratch);
        return found;
    }

    double forbidden_cost() const
    {
        return sense_ == Sense::minimize ? std::numeric_limits<double>::infinity()
                                         : -std::numeric_limits<double>::infinity();
    }

    const RowMajorMatrix* dense_costs() const { return kind_ == Kind::dense ? &dense_ : nullptr; }

    /// Allowed columns per row.
    std::vector<std::vector<Index>> structure() const
    {
        std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n_));
        VectorXd scratch;
        for (Index i = 0; i < n_; ++i)
            for_each_in_row(i, [&](Index j, double) { adj[static_cast<std::size_t>(i)].push_back(j); }, scratch);
        return adj;
    }

    bool has_forbidden_entries() const
    {
        if (kind_ == Kind::dense)
            return !dense_.allFinite();
        if (kind_ == Kind::sparse)
            return static_cast<Index>(sparse_.columns.size()) < n_ * n_;
        return false;
    }

private:
    enum class Kind { dense, sparse, oracle };

    AssignmentProblem(Index n, Sense sense) : n_(n), sense_(sense) {}

    void check_entry(double c) const
    {
        if (std::isnan(c) || (std::isinf(c) && c != forbidden_cost()))
            throw InvalidInput("AssignmentProblem: non-finite cost other than the forbidden marker");
    }

    struct Csr {
        std::vector<Index> offsets;
        std::vector<Index> columns;
        std::vector<double> costs;
    };

    Index n_ = 0;
    Sense sense_ = Sense::minimize;
    Kind kind_ = Kind::dense;
    RowMajorMatrix dense_;
    Csr sparse_;
    RowOracle oracle_;
};

struct AssignmentResult {
    /// assignment[row] = column.
    std::vector<Index> assignment;
    double objective = 0.0;
    VectorXd prices;
    double eps_final = 0.0;
    /// Objective is within this distance of the optimum.
    double gap_bound = 0.0;
    int phases = 0;
    long long bids = 0;
};

/// Maximum bipartite matching on row -> allowed columns (Hopcroft-Karp).
/// Returns match[row] (or -1).
inline std::vector<Index> maximum_matching(const std::vector<std::vector<Index>>& adj, Index num_columns)
{
    const auto n = static_cast<Index>(adj.size());
    constexpr Index unmatched = -1;
    std::vector<Index> match_row(static_cast<std::size_t>(n), unmatched);
    std::vector<Index> match_col(static_cast<std::size_t>(num_columns), unmatched);
    std::vector<Index> layer(static_cast<std::size_t>(n));
    constexpr Index inf = std::numeric_limits<Index>::max();

    auto bfs = [&] {
        std::deque<Index> q;
        bool found = false;
        for (Index i = 0; i < n; ++i) {
            if (match_row[static_cast<std::size_t>(i)] == unmatched) {
                layer[static_cast<std::size_t>(i)] = 0;
                q.push_back(i);
            } else {
                layer[static_cast<std::size_t>(i)] = inf;
            }
        }
        while (!q.empty()) {
            Index i = q.front();
            q.pop_front();
            for (Index j : adj[static_cast<std::size_t>(i)]) {
                Index r = match_col[static_cast<std::size_t>(j)];
                if (r == unmatched)
                    found = true;
                else if (layer[static_cast<std::size_t>(r)] == inf) {
                    layer[static_cast<std::size_t>(r)] = layer[static_cast<std::size_t>(i)] + 1;
                    q.push_back(r);
                }
            }
        }
        return found;
    };

    std::vector<std::size_t> next_edge(static_cast<std::size_t>(n));
    // Iterative DFS along layered augmenting paths.
    auto augment = [&](Index root) {
        std::vector<Index> stack{root};
        while (!stack.empty()) {
            Index i = stack.back();
            auto& e = next_edge[static_cast<std::size_t>(i)];
            const auto& nb = adj[static_cast<std::size_t>(i)];
            bool advanced = false;
            while (e < nb.size()) {
                Index j = nb[e];
                Index r = match_col[static_cast<std::size_t>(j)];
                if (r == unmatched) {
                    // Flip the path recorded on the stack.
                    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                        Index row = *it;
                        Index col = adj[static_cast<std::size_t>(row)][next_edge[static_cast<std::size_t>(row)]];
                        match_row[static_cast<std::size_t>(row)] = col;
                        match_col[static_cast<std::size_t>(col)] = row;
                    }
                    return true;
                }
                if (layer[static_cast<std::size_t>(r)] == layer[static_cast<std::size_t>(i)] + 1) {
                    stack.push_back(r);
                    advanced = true;
                    break;
                }
                ++e;
            }
            if (!advanced) {
                layer[static_cast<std::size_t>(i)] = inf;
                stack.pop_back();
                if (!stack.empty())
                    ++next_edge[static_cast<std::size_t>(stack.back())];
            }
        }
        return false;
    };

    while (bfs()) {
        std::fill(next_edge.begin(), next_edge.end(), 0);
        for (Index i = 0; i < n; ++i)
            if (match_row[static_cast<std::size_t>(i)] == unmatched)
                augment(i);
    }
    return match_row;
}

inline bool has_perfect_matching(const std::vector<std::vector<Index>>& adj, Index num_columns)
{
    if (static_cast<Index>(adj.size()) != num_columns)
        return false;
    const auto m = maximum_matching(adj, num_columns);
    return std::none_of(m.begin(), m.end(), [](Index j) { return j < 0; });
}

struct AuctionOptions {
    /// Starting epsilon; <= 0 selects cost range / 2.
    double eps0 = 0.0;
    double eps_factor = 5.0;
    /// Final epsilon; <= 0 selects cost range * 1e-9 / n (floored at 1e-300).
    double eps_final = 0.0;
    /// Run the perfect-matching pre-check on oracle problems as well.
    bool check_oracle_feasibility = false;
    /// Called after every scaling phase with (eps, assignment, prices).
    std::function<void(double, const std::vector<Index>&, const VectorXd&)> on_phase;
};

namespace detail {

inline double objective_of(const AssignmentProblem& p, const std::vector<Index>& assignment)
{
    double total = 0.0;
    if (auto* d = p.dense_costs()) {
        for (Index i = 0; i < p.size(); ++i)
            total += (*d)(i, assignment[static_cast<std::size_t>(i)]);
        return total;
    }
    VectorXd scratch;
    for (Index i = 0; i < p.size(); ++i) {
        const Index target = assignment[static_cast<std::size_t>(i)];
        double c = p.forbidden_cost();
        p.for_each_in_row(i, [&](Index j, double cost) {
            if (j == target)
                c = cost;
        }, scratch);
        total += c;
    }
    return total;
}

inline std::pair<double, double> finite_cost_range(const AssignmentProblem& p)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    if (auto* d = p.dense_costs()) {
        for (Index i = 0; i < d->size(); ++i) {
            const double c = d->data()[i];
            if (!std::isinf(c))
                lo = std::min(lo, c), hi = std::max(hi, c);
        }
    } else {
        VectorXd scratch;
        for (Index i = 0; i < p.size(); ++i)
            p.for_each_in_row(i, [&](Index, double c) { lo = std::min(lo, c), hi = std::max(hi, c); }, scratch);
    }
    return {lo, hi};
}

} // namespace detail

/// Forward auction with epsilon scaling (Gauss-Seidel bidding, lowest
/// unassigned row bids first). The result is within n * eps_final of the
/// optimum.
inline AssignmentResult solve_auction(const AssignmentProblem& p, const AuctionOptions& opt = {})
{
    const Index n = p.size();
    AssignmentResult result;
    if (n == 0)
        return result;
    if (!(opt.eps_factor > 1.0))
        throw InvalidInput("solve_auction: eps_factor must exceed 1");

    if ((p.has_forbidden_entries() || (p.is_oracle() && opt.check_oracle_feasibility)) &&
        !has_perfect_matching(p.structure(), n))
        throw InfeasibleAssignment("solve_auction: allowed pairs admit no perfect matching");

    auto [lo, hi] = detail::finite_cost_range(p);
    if (!std::isfinite(lo))
        throw InfeasibleAssignment("solve_auction: no allowed pairs");
    double range = hi - lo;
    if (!(range > 0.0))
        range = std::max(1.0, std::abs(hi));
    const double sign = p.sense() == Sense::maximize ? 1.0 : -1.0;

    double eps = opt.eps0 > 0.0 ? opt.eps0 : 0.5 * range;
    const double eps_final =
        opt.eps_final > 0.0 ? opt.eps_final : std::max(range * 1e-9 / static_cast<double>(n), 1e-300);
    eps = std::max(eps, eps_final);
    const double lone_bid = range;

    VectorXd prices = VectorXd::Zero(n);
    std::vector<Index> row_to_col(static_cast<std::size_t>(n)), col_to_row(static_cast<std::size_t>(n));
    VectorXd scratch;
    const RowMajorMatrix* dense = p.dense_costs();
    constexpr double ninf = -std::numeric_limits<double>::infinity();

    for (;;) {
        std::fill(row_to_col.begin(), row_to_col.end(), -1);
        std::fill(col_to_row.begin(), col_to_row.end(), -1);
        std::priority_queue<Index, std::vector<Index>, std::greater<>> unassigned;
        for (Index i = 0; i < n; ++i)
            unassigned.push(i);

        while (!unassigned.empty()) {
            const Index i = unassigned.top();
            unassigned.pop();
            double best = ninf, second = ninf;
            Index best_j = -1;
            auto consider = [&](Index j, double c) {
                const double value = sign * c - prices[j];
                if (value > best) {
                    second = best;
                    best = value;
                    best_j = j;
                } else if (value > second) {
                    second = value;
                }
            };
            if (dense) {
                const double* row = dense->data() + i * n;
                const double* pr = prices.data();
                for (Index j = 0; j < n; ++j) {
                    const double c = row[j];
                    if (std::isinf(c))
                        continue;
                    const double value = sign * c - pr[j];
                    if (value > second) {
                        if (value > best) {
                            second = best;
                            best = value;
                            best_j = j;
                        } else {
                            second = value;
                        }
                    }
                }
            } else {
                p.for_each_in_row(i, consider, scratch);
            }
            if (best_j < 0)
                throw InfeasibleAssignment("solve_auction: row " + std::to_string(i) + " has no allowed column");
            const double increment = (second == ninf ? lone_bid : best - second) + eps;
            prices[best_j] += increment;
            const Index previous = col_to_row[static_cast<std::size_t>(best_j)];
            if (previous >= 0) {
                row_to_col[static_cast<std::size_t>(previous)] = -1;
                unassigned.push(previous);
            }
            col_to_row[static_cast<std::size_t>(best_j)] = i;
            row_to_col[static_cast<std::size_t>(i)] = best_j;
            ++result.bids;
        }
        ++result.phases;
        if (opt.on_phase)
            opt.on_phase(eps, row_to_col, prices);
        if (eps <= eps_final)
            break;
        eps = std::max(eps / opt.eps_factor, eps_final);
    }

    result.assignment = row_to_col;
    result.objective = detail::objective_of(p, row_to_col);
    result.prices = std::move(prices);
    result.eps_final = eps;
    result.gap_bound = static_cast<double>(n) * eps;
    return result;
}

/// Largest violation of epsilon-complementary slackness,
/// max_i [max_k (b_ik - p_k) - (b_i,a(i) - p_a(i))], in benefit units.
inline double eps_cs_violation(const AssignmentProblem& p, const std::vector<Index>& assignment,
                               const VectorXd& prices)
{
    const double sign = p.sense() == Sense::maximize ? 1.0 : -1.0;
    double worst = 0.0;
    VectorXd scratch;
    for (Index i = 0; i < p.size(); ++i) {
        const Index a = assignment[static_cast<std::size_t>(i)];
        double best = -std::numeric_limits<double>::infinity(), own = best;
        p.for_each_in_row(i, [&](Index j, double c) {
            const double v = sign * c - prices[j];
            best = std::max(best, v);
            if (j == a)
                own = v;
        }, scratch);
        worst = std::max(worst, best - own);
    }
    return worst;
}

/// Exact optimum by enumeration (n <= 10); ties resolve to the
/// lexicographically smallest permutation.
inline AssignmentResult solve_bruteforce(const AssignmentProblem& p)
{
    const Index n = p.size();
    if (n > 10)
        throw InvalidInput("solve_bruteforce: n = " + std::to_string(n) + " is too large (max 10)");
    MatrixXd c(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            c(i, j) = p.cost(i, j);
    const double sign = p.sense() == Sense::maximize ? -1.0 : 1.0;
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    AssignmentResult result;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (Index i = 0; i < n; ++i)
            total += sign * c(i, perm[static_cast<std::size_t>(i)]);
        if (total < best) {
            best = total;
            result.assignment = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (!std::isfinite(best))
        throw InfeasibleAssignment("solve_bruteforce: no feasible permutation");
    result.objective = sign * best;
    return result;
}

} // namespace bayesmap
