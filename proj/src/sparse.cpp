#include "ebus/sparse.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <queue>
#include <sstream>

#include "ebus/dense.hpp"

namespace ebus {

SparseComplexMatrix SparseComplexMatrix::from_triplets(int n, const std::vector<int>& rows,
                                                       const std::vector<int>& cols,
                                                       const CVec& values, double drop_tol) {
    if (rows.size() != cols.size() || rows.size() != values.size())
        throw NumericError("from_triplets: length mismatch");
    struct T {
        int r, c;
        Complex v;
    };
    std::vector<T> ts;
    ts.reserve(rows.size());
    double vmax = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= n || cols[k] < 0 || cols[k] >= n)
            throw NumericError("from_triplets: index out of range");
        ts.push_back({rows[k], cols[k], values[k]});
        vmax = std::max(vmax, std::abs(values[k]));
    }
    std::sort(ts.begin(), ts.end(), [](const T& a, const T& b) {
        return a.c != b.c ? a.c < b.c : a.r < b.r;
    });
    SparseComplexMatrix m(n);
    double drop = drop_tol * vmax;
    std::size_t i = 0;
    for (int c = 0; c < n; ++c) {
        m.col_ptr_[c] = static_cast<int>(m.row_idx_.size());
        while (i < ts.size() && ts[i].c == c) {
            int r = ts[i].r;
            Complex v = 0.0;
            while (i < ts.size() && ts[i].c == c && ts[i].r == r) v += ts[i++].v;
            if (std::abs(v) > drop || (drop == 0.0 && v != Complex(0.0, 0.0))) {
                m.row_idx_.push_back(r);
                m.values_.push_back(v);
            }
        }
    }
    m.col_ptr_[n] = static_cast<int>(m.row_idx_.size());
    return m;
}

Complex SparseComplexMatrix::at(int r, int c) const {
    for (int p = col_ptr_[c]; p < col_ptr_[c + 1]; ++p)
        if (row_idx_[p] == r) return values_[p];
    return {0.0, 0.0};
}

CVec SparseComplexMatrix::multiply(const CVec& x) const {
    if (static_cast<int>(x.size()) != n_) throw NumericError("sparse multiply: size mismatch");
    CVec y(n_, Complex(0.0, 0.0));
    for (int c = 0; c < n_; ++c) {
        Complex xc = x[c];
        if (xc == Complex(0.0, 0.0)) continue;
        for (int p = col_ptr_[c]; p < col_ptr_[c + 1]; ++p) y[row_idx_[p]] += values_[p] * xc;
    }
    return y;
}

void SparseComplexMatrix::set_identity_row(int r) {
    bool diag_seen = false;
    for (int c = 0; c < n_; ++c)
        for (int p = col_ptr_[c]; p < col_ptr_[c + 1]; ++p)
            if (row_idx_[p] == r) {
                values_[p] = (c == r) ? Complex(1.0, 0.0) : Complex(0.0, 0.0);
                diag_seen |= (c == r);
            }
    if (!diag_seen) throw NumericError("set_identity_row: missing structural diagonal");
}

std::string SparseComplexMatrix::to_matrix_market() const {
    std::ostringstream os;
    os.precision(16);
    os << "%%MatrixMarket matrix coordinate complex general\n";
    os << n_ << " " << n_ << " " << nnz() << "\n";
    for (int c = 0; c < n_; ++c)
        for (int p = col_ptr_[c]; p < col_ptr_[c + 1]; ++p)
            os << row_idx_[p] + 1 << " " << c + 1 << " " << values_[p].real() << " "
               << values_[p].imag() << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// minimum-degree ordering
// ---------------------------------------------------------------------------

namespace {

std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::vector<int> amd_order(const SparseComplexMatrix& a) {
    const int n = a.n();
    // symmetrized pattern, no diagonal
    std::vector<std::vector<int>> adj(n);
    for (int c = 0; c < n; ++c)
        for (int p = a.col_ptr()[c]; p < a.col_ptr()[c + 1]; ++p) {
            int r = a.row_idx()[p];
            if (r == c) continue;
            adj[r].push_back(c);
            adj[c].push_back(r);
        }
    for (auto& v : adj) v = sorted_unique(std::move(v));

    std::vector<std::vector<int>> elem_vars;        // element id -> member variables
    std::vector<std::vector<int>> elems_of(n);      // variable -> element ids
    std::vector<bool> dead(n, false);
    std::vector<int> degree(n);

    auto external_degree = [&](int v) {
        std::vector<int> u = adj[v];
        for (int e : elems_of[v]) u.insert(u.end(), elem_vars[e].begin(), elem_vars[e].end());
        u = sorted_unique(std::move(u));
        int d = 0;
        for (int w : u)
            if (w != v && !dead[w]) ++d;
        return d;
    };
    for (int i = 0; i < n; ++i) degree[i] = static_cast<int>(adj[i].size());

    using Key = std::pair<int, int>;  // (degree, node), lazy heap
    std::priority_queue<Key, std::vector<Key>, std::greater<Key>> heap;
    for (int i = 0; i < n; ++i) heap.push({degree[i], i});

    std::vector<int> perm;
    perm.reserve(n);
    while (!heap.empty()) {
        auto [d, p] = heap.top();
        heap.pop();
        if (dead[p] || d != degree[p]) continue;  // stale entry
        dead[p] = true;
        perm.push_back(p);

        // new element: everything reachable from p
        std::vector<int> lp = adj[p];
        for (int e : elems_of[p]) lp.insert(lp.end(), elem_vars[e].begin(), elem_vars[e].end());
        lp = sorted_unique(std::move(lp));
        lp.erase(std::remove_if(lp.begin(), lp.end(), [&](int v) { return dead[v]; }), lp.end());
        if (lp.empty()) continue;

        int eid = static_cast<int>(elem_vars.size());
        std::vector<int> absorbed = elems_of[p];
        std::sort(absorbed.begin(), absorbed.end());
        elem_vars.push_back(lp);

        for (int v : lp) {
            // adjacency now carried by the element
            std::vector<int> keep;
            keep.reserve(adj[v].size());
            for (int w : adj[v])
                if (!dead[w] && !std::binary_search(lp.begin(), lp.end(), w)) keep.push_back(w);
            adj[v] = std::move(keep);
            std::vector<int> es;
            es.reserve(elems_of[v].size() + 1);
            for (int e : elems_of[v])
                if (!std::binary_search(absorbed.begin(), absorbed.end(), e)) es.push_back(e);
            es.push_back(eid);
            elems_of[v] = std::move(es);
            degree[v] = external_degree(v);
            heap.push({degree[v], v});
        }
    }
    return perm;
}

// ---------------------------------------------------------------------------
// left-looking LU
// ---------------------------------------------------------------------------

namespace {

// Nonzero pattern of the solution of L x = b(:,j) via depth-first search.
// pivot_pos maps a raw row to its pivot position (-1 when not yet pivotal).
// Returns the stack top; pattern is xi[top..n-1] in topological order.
int reach(const std::vector<int>& l_colptr, const std::vector<int>& l_rowidx,
          const std::vector<int>& pivot_pos, int col_limit,
          const int* b_rows, int b_count,
          std::vector<int>& xi, std::vector<int>& pstack, std::vector<int>& mark, int stamp) {
    const int n = static_cast<int>(pivot_pos.size());
    int top = n;
    std::vector<int>& stack = pstack;  // reuse: first half row stack, second half position
    for (int k = 0; k < b_count; ++k) {
        int root = b_rows[k];
        if (mark[root] == stamp) continue;
        int head = 0;
        stack[0] = root;
        while (head >= 0) {
            int r = stack[head];
            int kcol = pivot_pos[r];
            if (mark[r] != stamp) {
                mark[r] = stamp;
                stack[n + head] = (kcol >= 0 && kcol < col_limit) ? l_colptr[kcol] : -1;
            }
            bool descended = false;
            if (kcol >= 0 && kcol < col_limit) {
                int& pp = stack[n + head];
                for (; pp < l_colptr[kcol + 1]; ++pp) {
                    int child = l_rowidx[pp];
                    if (child == r) continue;       // unit diagonal entry
                    if (mark[child] != stamp) {
                        ++pp;
                        stack[++head] = child;
                        descended = true;
                        break;
                    }
                }
            }
            if (!descended) {
                --head;
                xi[--top] = r;
            }
        }
    }
    return top;
}

}  // namespace

static LuFactors gp_lu(const SparseComplexMatrix& a, const std::vector<int>& perm,
                       bool static_pivot) {
    const int n = a.n();
    if (static_cast<int>(perm.size()) != n) throw NumericError("lu_factor: bad permutation");
    auto t0 = std::chrono::steady_clock::now();

    std::vector<int> perm_inv(n);
    for (int k = 0; k < n; ++k) perm_inv[perm[k]] = k;

    // B = A with symmetric permutation applied, CSC
    std::vector<int> b_rows, b_cols;
    CVec b_vals;
    b_rows.reserve(a.nnz());
    b_cols.reserve(a.nnz());
    b_vals.reserve(a.nnz());
    for (int c = 0; c < n; ++c)
        for (int p = a.col_ptr()[c]; p < a.col_ptr()[c + 1]; ++p) {
            b_rows.push_back(perm_inv[a.row_idx()[p]]);
            b_cols.push_back(perm_inv[c]);
            b_vals.push_back(a.values()[p]);
        }
    SparseComplexMatrix b = SparseComplexMatrix::from_triplets(n, b_rows, b_cols, b_vals);

    LuFactors f;
    f.n = n;
    f.perm = perm;
    f.perm_inv = perm_inv;
    f.pivot_fallback = !static_pivot;
    f.l_colptr.assign(n + 1, 0);
    f.u_colptr.assign(n + 1, 0);

    std::vector<int> pivot_pos(n, -1);
    if (static_pivot)
        for (int i = 0; i < n; ++i) pivot_pos[i] = i;

    CVec x(n, Complex(0.0, 0.0));
    std::vector<int> xi(n), pstack(2 * n), mark(n, -1);
    std::vector<int> prow_of(n, -1);  // pivot position -> raw B row

    for (int j = 0; j < n; ++j) {
        int cstart = b.col_ptr()[j], cend = b.col_ptr()[j + 1];
        int top = reach(f.l_colptr, f.l_rowidx, pivot_pos, j, b.row_idx().data() + cstart,
                        cend - cstart, xi, pstack, mark, j);
        for (int p = cstart; p < cend; ++p) x[b.row_idx()[p]] = b.values()[p];

        // eliminate in topological order
        for (int px = top; px < n; ++px) {
            int r = xi[px];
            int k = pivot_pos[r];
            if (k < 0 || k >= j) continue;
            Complex xk = x[r];
            if (xk == Complex(0.0, 0.0)) continue;
            for (int q = f.l_colptr[k]; q < f.l_colptr[k + 1]; ++q) {
                int rr = f.l_rowidx[q];
                if (rr == r) continue;  // unit diagonal
                x[rr] -= f.l_values[q] * xk;
            }
        }

        // pivot
        int pivot_row = -1;
        double colmax = 0.0;
        for (int px = top; px < n; ++px) {
            int r = xi[px];
            if (pivot_pos[r] >= 0 && pivot_pos[r] < j) continue;
            double m = std::abs(x[r]);
            colmax = std::max(colmax, m);
            if (static_pivot) {
                if (r == j) pivot_row = r;
            } else {
                double cur = pivot_row < 0 ? -1.0 : std::abs(x[pivot_row]);
                if (m > cur || (m == cur && pivot_row >= 0 && r < pivot_row)) pivot_row = r;
            }
        }
        if (colmax == 0.0)
            throw NumericError("lu_factor: structurally singular at column " + std::to_string(j));
        if (static_pivot && pivot_row < 0) {
            // diagonal absent from this column's pattern; rerun with pivoting
            LuFactors g = gp_lu(a, perm, false);
            g.pivot_fallback = true;
            return g;
        }
        Complex pivot = x[pivot_row];
        if (static_pivot && std::abs(pivot) <= 1e-14 * colmax) {
            // static pivoting collapsed, redo the whole factorization with
            // partial pivoting
            LuFactors g = gp_lu(a, perm, false);
            g.pivot_fallback = true;
            return g;
        }
        if (std::abs(pivot) == 0.0)
            throw NumericError("lu_factor: zero pivot at column " + std::to_string(j));

        pivot_pos[pivot_row] = j;
        prow_of[j] = pivot_row;

        // U column j (rows are pivot positions), diagonal last
        for (int px = top; px < n; ++px) {
            int r = xi[px];
            int k = pivot_pos[r];
            if (k >= 0 && k < j) {
                f.u_rowidx.push_back(k);
                f.u_values.push_back(x[r]);
                x[r] = 0.0;  // lower entries stay for the L pass
            }
        }
        f.u_rowidx.push_back(j);
        f.u_values.push_back(pivot);
        f.u_colptr[j + 1] = static_cast<int>(f.u_rowidx.size());

        // L column j: unit diagonal plus scaled lower entries (raw rows here,
        // remapped to pivot positions after the loop)
        f.l_rowidx.push_back(pivot_row);
        f.l_values.push_back(Complex(1.0, 0.0));
        for (int px = top; px < n; ++px) {
            int r = xi[px];
            if (pivot_pos[r] >= 0 && pivot_pos[r] <= j) {
                x[r] = 0.0;
                continue;
            }
            f.l_rowidx.push_back(r);
            f.l_values.push_back(x[r] / pivot);
            x[r] = 0.0;
        }
        f.l_colptr[j + 1] = static_cast<int>(f.l_rowidx.size());
    }

    // remap L rows from raw positions to pivot positions and sort columns
    for (auto& r : f.l_rowidx) r = pivot_pos[r];
    for (int j = 0; j < n; ++j) {
        auto sort_range = [](std::vector<int>& rows, CVec& vals, int lo, int hi) {
            std::vector<std::pair<int, Complex>> tmp;
            tmp.reserve(hi - lo);
            for (int p = lo; p < hi; ++p) tmp.push_back({rows[p], vals[p]});
            std::sort(tmp.begin(), tmp.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (int p = lo; p < hi; ++p) {
                rows[p] = tmp[p - lo].first;
                vals[p] = tmp[p - lo].second;
            }
        };
        sort_range(f.l_rowidx, f.l_values, f.l_colptr[j], f.l_colptr[j + 1]);
        sort_range(f.u_rowidx, f.u_values, f.u_colptr[j], f.u_colptr[j + 1]);
    }

    f.u_diag_pos.assign(n, -1);
    for (int j = 0; j < n; ++j)
        for (int p = f.u_colptr[j]; p < f.u_colptr[j + 1]; ++p)
            if (f.u_rowidx[p] == j) f.u_diag_pos[j] = p;

    // row_perm[k] = original A row pivotal at position k
    f.row_perm.resize(n);
    for (int k = 0; k < n; ++k) f.row_perm[k] = perm[prow_of[k]];

    f.nnz_l = f.count_l();
    f.nnz_u = f.count_u();
    f.factor_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return f;
}

LuFactors lu_factor(const SparseComplexMatrix& a, const std::vector<int>& perm) {
    return gp_lu(a, perm, true);
}

CVec solve(const LuFactors& f, const CVec& b) {
    const int n = f.n;
    if (static_cast<int>(b.size()) != n) throw NumericError("solve: size mismatch");
    CVec y(n);
    for (int k = 0; k < n; ++k) y[k] = b[f.row_perm[k]];
    // L y' = y (unit lower)
    for (int k = 0; k < n; ++k) {
        Complex yk = y[k];
        if (yk == Complex(0.0, 0.0)) continue;
        for (int p = f.l_colptr[k]; p < f.l_colptr[k + 1]; ++p) {
            int r = f.l_rowidx[p];
            if (r == k) continue;
            y[r] -= f.l_values[p] * yk;
        }
    }
    // U x' = y'
    for (int k = n - 1; k >= 0; --k) {
        y[k] /= f.u_values[f.u_diag_pos[k]];
        Complex yk = y[k];
        if (yk == Complex(0.0, 0.0)) continue;
        for (int p = f.u_colptr[k]; p < f.u_colptr[k + 1]; ++p) {
            int r = f.u_rowidx[p];
            if (r == k) continue;
            y[r] -= f.u_values[p] * yk;
        }
    }
    CVec x(n);
    for (int k = 0; k < n; ++k) x[f.perm[k]] = y[k];
    return x;
}

CVec solve_transpose(const LuFactors& f, const CVec& b) {
    const int n = f.n;
    if (static_cast<int>(b.size()) != n) throw NumericError("solve_transpose: size mismatch");
    CVec z(n);
    for (int k = 0; k < n; ++k) z[k] = b[f.perm[k]];
    // U^T w = z : forward over columns of U
    for (int k = 0; k < n; ++k) {
        Complex acc = z[k];
        for (int p = f.u_colptr[k]; p < f.u_colptr[k + 1]; ++p) {
            int r = f.u_rowidx[p];
            if (r != k) acc -= f.u_values[p] * z[r];
        }
        z[k] = acc / f.u_values[f.u_diag_pos[k]];
    }
    // L^T v = w : backward over columns of L (unit diagonal)
    for (int k = n - 1; k >= 0; --k) {
        Complex acc = z[k];
        for (int p = f.l_colptr[k]; p < f.l_colptr[k + 1]; ++p) {
            int r = f.l_rowidx[p];
            if (r != k) acc -= f.l_values[p] * z[r];
        }
        z[k] = acc;
    }
    CVec x(n);
    for (int k = 0; k < n; ++k) x[f.row_perm[k]] = z[k];
    return x;
}

namespace {

CompensationResult refactor_fallback(const SparseComplexMatrix& a,
                                     const std::vector<int>& perm,
                                     const std::vector<MatrixMod>& mods, const CVec& b) {
    std::vector<int> rows, cols;
    CVec vals;
    const int n = a.n();
    rows.reserve(a.nnz() + mods.size());
    cols.reserve(a.nnz() + mods.size());
    vals.reserve(a.nnz() + mods.size());
    for (int c = 0; c < n; ++c)
        for (int p = a.col_ptr()[c]; p < a.col_ptr()[c + 1]; ++p) {
            rows.push_back(a.row_idx()[p]);
            cols.push_back(c);
            vals.push_back(a.values()[p]);
        }
    for (const auto& m : mods) {
        rows.push_back(m.row);
        cols.push_back(m.col);
        vals.push_back(m.delta);
    }
    SparseComplexMatrix am = SparseComplexMatrix::from_triplets(n, rows, cols, vals);
    LuFactors f = lu_factor(am, perm);
    return {solve(f, b), true};
}

}  // namespace

namespace {

// Dense full-pivot elimination of the modification block: returns rank-one
// factors so the update solve carries the true rank of the change, not one
// column per touched entry.
struct RankFactors {
    std::vector<CVec> u;             // length |rows| each
    std::vector<CVec> v;             // length |cols| each
    std::vector<int> rows, cols;     // support
};

RankFactors compress_mods(const std::vector<MatrixMod>& mods) {
    RankFactors rf;
    for (const auto& md : mods) {
        rf.rows.push_back(md.row);
        rf.cols.push_back(md.col);
    }
    std::sort(rf.rows.begin(), rf.rows.end());
    rf.rows.erase(std::unique(rf.rows.begin(), rf.rows.end()), rf.rows.end());
    std::sort(rf.cols.begin(), rf.cols.end());
    rf.cols.erase(std::unique(rf.cols.begin(), rf.cols.end()), rf.cols.end());
    const std::size_t nr = rf.rows.size(), nc = rf.cols.size();
    auto rpos = [&](int r) {
        return std::lower_bound(rf.rows.begin(), rf.rows.end(), r) - rf.rows.begin();
    };
    auto cpos = [&](int c) {
        return std::lower_bound(rf.cols.begin(), rf.cols.end(), c) - rf.cols.begin();
    };
    CMat d(nr, nc);
    for (const auto& md : mods) d(rpos(md.row), cpos(md.col)) += md.delta;
    double tol = 1e-14 * std::max(d.norm_max(), 1e-300);
    for (std::size_t step = 0; step < std::min(nr, nc); ++step) {
        std::size_t pi = 0, pj = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j)
                if (std::abs(d(i, j)) > best) {
                    best = std::abs(d(i, j));
                    pi = i;
                    pj = j;
                }
        if (best <= tol) break;
        Complex piv = d(pi, pj);
        CVec ucol(nr), vrow(nc);
        for (std::size_t i = 0; i < nr; ++i) ucol[i] = d(i, pj);
        for (std::size_t j = 0; j < nc; ++j) vrow[j] = d(pi, j) / piv;
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) d(i, j) -= ucol[i] * vrow[j];
        rf.u.push_back(std::move(ucol));
        rf.v.push_back(std::move(vrow));
    }
    return rf;
}

}  // namespace

CompensationResult compensate(const SparseComplexMatrix& a, const LuFactors& f,
                              const std::vector<MatrixMod>& mods, const CVec& b) {
    if (mods.empty()) return {solve(f, b), false};
    const int n = f.n;
    RankFactors rf = compress_mods(mods);
    const int m = static_cast<int>(rf.u.size());
    if (m == 0) return {solve(f, b), false};

    CVec x0 = solve(f, b);
    std::vector<CVec> z(m);
    CVec e(n, Complex(0.0, 0.0));
    for (int k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < rf.rows.size(); ++i) e[rf.rows[i]] = rf.u[k][i];
        z[k] = solve(f, e);
        for (std::size_t i = 0; i < rf.rows.size(); ++i) e[rf.rows[i]] = 0.0;
    }
    CMat s(m, m);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
            Complex acc = (j == k) ? Complex(1.0, 0.0) : Complex(0.0, 0.0);
            for (std::size_t c = 0; c < rf.cols.size(); ++c)
                acc += rf.v[j][c] * z[k][rf.cols[c]];
            s(j, k) = acc;
        }
    CVec rhs(m);
    for (int j = 0; j < m; ++j) {
        Complex acc = 0.0;
        for (std::size_t c = 0; c < rf.cols.size(); ++c) acc += rf.v[j][c] * x0[rf.cols[c]];
        rhs[j] = acc;
    }
    CVec w;
    try {
        w = s.solve(rhs);
    } catch (const NumericError&) {
        return refactor_fallback(a, f.perm, mods, b);
    }
    CVec x = x0;
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) x[i] -= z[k][i] * w[k];
    return {x, false};
}

CompensatedSolver::CompensatedSolver(const SparseComplexMatrix& a, const LuFactors& f,
                                     std::vector<MatrixMod> mods)
    : f_(&f), mods_(std::move(mods)) {
    const int n = f.n;
    if (mods_.empty()) return;
    RankFactors rf = compress_mods(mods_);
    const int m = static_cast<int>(rf.u.size());
    if (m == 0) return;
    v_factors_.resize(m);
    for (int k = 0; k < m; ++k) {
        v_factors_[k].clear();
        for (std::size_t c = 0; c < rf.cols.size(); ++c)
            if (rf.v[k][c] != Complex(0.0, 0.0)) v_factors_[k].push_back({rf.cols[c], rf.v[k][c]});
    }
    z_.resize(m);
    CVec e(n, Complex(0.0, 0.0));
    for (int k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < rf.rows.size(); ++i) e[rf.rows[i]] = rf.u[k][i];
        z_[k] = ebus::solve(f, e);
        for (std::size_t i = 0; i < rf.rows.size(); ++i) e[rf.rows[i]] = 0.0;
    }
    s_lu_ = CMat(m, m);
    for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
            Complex acc = (j == k) ? Complex(1.0, 0.0) : Complex(0.0, 0.0);
            for (const auto& [c, vc] : v_factors_[j]) acc += vc * z_[k][c];
            s_lu_(j, k) = acc;
        }
    // probe the capacitance matrix once; on singularity keep a refactored copy
    try {
        CVec probe(m, Complex(1.0, 0.0));
        (void)s_lu_.solve(probe);
    } catch (const NumericError&) {
        std::vector<int> rows, cols;
        CVec vals;
        for (int c = 0; c < a.n(); ++c)
            for (int p = a.col_ptr()[c]; p < a.col_ptr()[c + 1]; ++p) {
                rows.push_back(a.row_idx()[p]);
                cols.push_back(c);
                vals.push_back(a.values()[p]);
            }
        for (const auto& md : mods_) {
            rows.push_back(md.row);
            cols.push_back(md.col);
            vals.push_back(md.delta);
        }
        SparseComplexMatrix am = SparseComplexMatrix::from_triplets(a.n(), rows, cols, vals);
        fallback_ = std::make_unique<LuFactors>(lu_factor(am, f.perm));
    }
}

CVec CompensatedSolver::solve(const CVec& b) const {
    if (fallback_) return ebus::solve(*fallback_, b);
    CVec x0 = ebus::solve(*f_, b);
    const int m = static_cast<int>(z_.size());
    if (m == 0) return x0;
    CVec rhs(m);
    for (int j = 0; j < m; ++j) {
        Complex acc = 0.0;
        for (const auto& [c, vc] : v_factors_[j]) acc += vc * x0[c];
        rhs[j] = acc;
    }
    CVec w = s_lu_.solve(rhs);
    for (int k = 0; k < m; ++k) {
        Complex wk = w[k];
        if (wk == Complex(0.0, 0.0)) continue;
        const CVec& zk = z_[k];
        for (std::size_t i = 0; i < x0.size(); ++i) x0[i] -= zk[i] * wk;
    }
    return x0;
}

MemoryReport memory_report(const std::vector<SubsystemMemory>& subsystems,
                           std::int64_t transform_nnz, std::int64_t baseline_nnz) {
    MemoryReport rep;
    rep.subsystems = subsystems;
    rep.transform_nnz = transform_nnz;
    rep.total_nnz = transform_nnz;
    for (const auto& s : subsystems) rep.total_nnz += s.nnz_l + s.nnz_u;
    rep.bytes = 16 * rep.total_nnz;
    rep.baseline_nnz = baseline_nnz;
    rep.reduction_percent =
        baseline_nnz > 0 ? 100.0 * (1.0 - static_cast<double>(rep.total_nnz) /
                                              static_cast<double>(baseline_nnz))
                         : 0.0;
    return rep;
}

std::string memory_report_csv(const MemoryReport& rep) {
    std::ostringstream os;
    os << "subsystem,nnz_L,nnz_U,total,reduction_percent\n";
    for (const auto& s : rep.subsystems)
        os << s.name << "," << s.nnz_l << "," << s.nnz_u << "," << (s.nnz_l + s.nnz_u) << ",\n";
    os << "transforms,,," << rep.transform_nnz << ",\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", rep.reduction_percent);
    os << "total,,," << rep.total_nnz << "," << buf << "\n";
    return os.str();
}

}  // namespace ebus
