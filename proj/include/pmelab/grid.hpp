#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmelab {

/// Uniform rectilinear space-time grid over Omega_T, Omega = (0,Lx) or
/// (0,Lx)x(0,Ly), time levels t0 + n*dt for n = 0..nt-1.
///
/// Cells are square in 2-D by construction: h = Lx/nx and Ly := ny*h.
/// Fields live on nodes; discrete measures and compact sets live on
/// space-time cells, one cell per (interior node, time level >= 1).
struct Grid {
    int dim = 1;
    int nx = 0;
    int ny = 0;        // 0 when dim == 1
    int nt = 0;
    double h = 0.0;
    double dt = 0.0;
    double t0 = 0.0;
    double Lx = 0.0;
    double Ly = 0.0;   // 0 when dim == 1

    static Grid make_1d(int nx, int nt, double Lx, double dt, double t0 = 0.0) {
        if (nx < 2 || nt < 2) throw std::invalid_argument("Grid: nx and nt must be >= 2");
        if (Lx <= 0.0 || dt <= 0.0) throw std::invalid_argument("Grid: Lx and dt must be positive");
        Grid g;
        g.dim = 1;
        g.nx = nx;
        g.ny = 0;
        g.nt = nt;
        g.Lx = Lx;
        g.h = Lx / nx;
        g.dt = dt;
        g.t0 = t0;
        return g;
    }

    static Grid make_2d(int nx, int ny, int nt, double Lx, double dt, double t0 = 0.0) {
        if (nx < 2 || ny < 2 || nt < 2) throw std::invalid_argument("Grid: nx, ny, nt must be >= 2");
        if (Lx <= 0.0 || dt <= 0.0) throw std::invalid_argument("Grid: Lx and dt must be positive");
        Grid g;
        g.dim = 2;
        g.nx = nx;
        g.ny = ny;
        g.nt = nt;
        g.Lx = Lx;
        g.h = Lx / nx;
        g.Ly = ny * g.h;  // square cells
        g.dt = dt;
        g.t0 = t0;
        return g;
    }

    /// Same spatial grid, more time levels.
    Grid extended_in_time(int new_nt) const {
        if (new_nt < nt) throw std::invalid_argument("Grid: extension must not shrink nt");
        Grid g = *this;
        g.nt = new_nt;
        return g;
    }

    bool operator==(const Grid& o) const = default;

    // -- node indexing ------------------------------------------------------

    int nodes_per_level() const { return dim == 1 ? nx + 1 : (nx + 1) * (ny + 1); }
    int node_index(int ix, int iy = 0) const { return dim == 1 ? ix : iy * (nx + 1) + ix; }
    int node_ix(int node) const { return dim == 1 ? node : node % (nx + 1); }
    int node_iy(int node) const { return dim == 1 ? 0 : node / (nx + 1); }

    bool is_boundary_node(int node) const {
        const int ix = node_ix(node);
        if (ix == 0 || ix == nx) return true;
        if (dim == 2) {
            const int iy = node_iy(node);
            if (iy == 0 || iy == ny) return true;
        }
        return false;
    }

    int interior_count() const { return dim == 1 ? nx - 1 : (nx - 1) * (ny - 1); }

    /// Rank of an interior node in 0..interior_count()-1; -1 for boundary.
    int interior_rank(int node) const {
        const int ix = node_ix(node);
        if (ix <= 0 || ix >= nx) return -1;
        if (dim == 1) return ix - 1;
        const int iy = node_iy(node);
        if (iy <= 0 || iy >= ny) return -1;
        return (iy - 1) * (nx - 1) + (ix - 1);
    }

    int interior_node(int rank) const {
        if (dim == 1) return rank + 1;
        const int ix = rank % (nx - 1) + 1;
        const int iy = rank / (nx - 1) + 1;
        return node_index(ix, iy);
    }

    double x_of(int node) const { return node_ix(node) * h; }
    double y_of(int node) const { return node_iy(node) * h; }
    double t_of(int level) const { return t0 + level * dt; }

    /// Spatial stencil neighbors (2*dim of them for interior nodes).
    void neighbors(int node, std::vector<int>& out) const {
        out.clear();
        const int ix = node_ix(node);
        const int iy = node_iy(node);
        if (ix > 0) out.push_back(node_index(ix - 1, iy));
        if (ix < nx) out.push_back(node_index(ix + 1, iy));
        if (dim == 2) {
            if (iy > 0) out.push_back(node_index(ix, iy - 1));
            if (iy < ny) out.push_back(node_index(ix, iy + 1));
        }
    }

    // -- space-time cell indexing -------------------------------------------
    // Cell (rank, level): the control volume h^d * dt owned by interior node
    // `interior_node(rank)` over the time slab (t_{level-1}, t_level],
    // level = 1..nt-1.

    int cell_count() const { return interior_count() * (nt - 1); }

    int cell_index(int rank, int level) const {
        return (level - 1) * interior_count() + rank;
    }

    int cell_rank(int cell) const { return cell % interior_count(); }
    int cell_level(int cell) const { return cell / interior_count() + 1; }

    double cell_volume() const { return (dim == 1 ? h : h * h) * dt; }

    /// A cell is admissible for a compact set iff its closure keeps one cell
    /// of distance from the lateral boundary, the initial level, and the
    /// final level (the discrete form of K compactly inside Omega_T).
    bool cell_admissible_for_compact(int rank, int level) const {
        const int node = interior_node(rank);
        const int ix = node_ix(node);
        if (ix < 2 || ix > nx - 2) return false;
        if (dim == 2) {
            const int iy = node_iy(node);
            if (iy < 2 || iy > ny - 2) return false;
        }
        return level >= 2 && level <= nt - 2;
    }

    /// Stable identity string; hashed for serialization mismatch checks.
    std::string signature() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "d%d nx%d ny%d nt%d h%.17g dt%.17g t0%.17g",
                      dim, nx, ny, nt, h, dt, t0);
        return buf;
    }

    std::uint64_t hash() const {
        std::uint64_t f = 0xcbf29ce484222325ULL;
        for (unsigned char c : signature()) {
            f ^= c;
            f *= 0x100000001b3ULL;
        }
        return f;
    }
};

/// A space-time node (node, level) pair.
struct SpaceTimeNode {
    int node;
    int level;
    bool operator==(const SpaceTimeNode&) const = default;
};

enum class BoundaryPiece { Parabolic, Lateral, Top };

/// Node sets of the discrete parabolic boundary: parabolic = initial level
/// plus lateral nodes at all later levels; top = interior nodes of the final
/// level.
inline std::vector<SpaceTimeNode> boundary_nodes(const Grid& g, BoundaryPiece which) {
    std::vector<SpaceTimeNode> out;
    const int npl = g.nodes_per_level();
    switch (which) {
        case BoundaryPiece::Parabolic:
            for (int node = 0; node < npl; ++node) out.push_back({node, 0});
            [[fallthrough]];
        case BoundaryPiece::Lateral:
            for (int level = 1; level < g.nt; ++level)
                for (int node = 0; node < npl; ++node)
                    if (g.is_boundary_node(node)) out.push_back({node, level});
            break;
        case BoundaryPiece::Top:
            for (int node = 0; node < npl; ++node)
                if (!g.is_boundary_node(node)) out.push_back({node, g.nt - 1});
            break;
    }
    return out;
}

/// A set of space-time cells without compactness requirements (the open
/// neighborhoods E_i, exhaustion compacts, test sets).
struct CellSet {
    Grid grid;
    std::vector<std::uint8_t> mask;  // size grid.cell_count()

    static CellSet empty(const Grid& g) {
        CellSet s;
        s.grid = g;
        s.mask.assign(static_cast<std::size_t>(g.cell_count()), 0);
        return s;
    }

    static CellSet of_cells(const Grid& g, const std::vector<int>& cells) {
        CellSet s = empty(g);
        for (int c : cells) {
            if (c < 0 || c >= g.cell_count()) throw std::out_of_range("CellSet: cell index out of range");
            s.mask[static_cast<std::size_t>(c)] = 1;
        }
        return s;
    }

    bool contains(int cell) const { return mask[static_cast<std::size_t>(cell)] != 0; }

    int size() const {
        int n = 0;
        for (auto m : mask) n += m != 0;
        return n;
    }

    std::vector<int> cells() const {
        std::vector<int> out;
        for (int c = 0; c < static_cast<int>(mask.size()); ++c)
            if (mask[static_cast<std::size_t>(c)]) out.push_back(c);
        return out;
    }

    bool subset_of(const CellSet& other) const {
        if (!(grid == other.grid)) throw std::invalid_argument("CellSet: grid mismatch");
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i] && !other.mask[i]) return false;
        return true;
    }

    CellSet unite(const CellSet& other) const {
        if (!(grid == other.grid)) throw std::invalid_argument("CellSet: grid mismatch");
        CellSet s = *this;
        for (std::size_t i = 0; i < mask.size(); ++i) s.mask[i] = mask[i] | other.mask[i];
        return s;
    }

    /// Cells within graph distance <= radius of this set (Manhattan metric
    /// on the (space, time) cell lattice).
    CellSet dilated(int radius) const {
        CellSet out = *this;
        std::vector<int> dist = distance_map();
        for (std::size_t c = 0; c < mask.size(); ++c)
            if (dist[c] <= radius) out.mask[c] = 1;
        return out;
    }

    /// BFS distance from the set over the cell lattice; INT_MAX/2 where
    /// unreachable (empty set).
    std::vector<int> distance_map() const {
        const int total = grid.cell_count();
        const int far = 1 << 29;
        std::vector<int> dist(static_cast<std::size_t>(total), far);
        std::queue<int> q;
        for (int c = 0; c < total; ++c)
            if (mask[static_cast<std::size_t>(c)]) {
                dist[static_cast<std::size_t>(c)] = 0;
                q.push(c);
            }
        std::vector<int> nbr;
        while (!q.empty()) {
            const int c = q.front();
            q.pop();
            cell_neighbors(c, nbr);
            for (int d : nbr)
                if (dist[static_cast<std::size_t>(d)] > dist[static_cast<std::size_t>(c)] + 1) {
                    dist[static_cast<std::size_t>(d)] = dist[static_cast<std::size_t>(c)] + 1;
                    q.push(d);
                }
        }
        return dist;
    }

    void cell_neighbors(int cell, std::vector<int>& out) const {
        out.clear();
        const int rank = grid.cell_rank(cell);
        const int level = grid.cell_level(cell);
        const int node = grid.interior_node(rank);
        const int ix = grid.node_ix(node);
        const int iy = grid.node_iy(node);
        auto push = [&](int jx, int jy, int n) {
            const int r = grid.interior_rank(grid.node_index(jx, jy));
            if (r >= 0 && n >= 1 && n <= grid.nt - 1) out.push_back(grid.cell_index(r, n));
        };
        if (ix > 1) push(ix - 1, iy, level);
        if (ix < grid.nx - 1) push(ix + 1, iy, level);
        if (grid.dim == 2) {
            if (iy > 1) push(ix, iy - 1, level);
            if (iy < grid.ny - 1) push(ix, iy + 1, level);
        }
        push(ix, iy, level - 1);
        push(ix, iy, level + 1);
    }
};

/// A closed union of space-time cells compactly inside Omega_T.
///
/// The margin invariant (no cell touching the lateral boundary, the initial
/// level, or the final level) is validated here, at construction, and never
/// re-checked downstream.
struct CompactSet {
    Grid grid;
    std::vector<std::uint8_t> mask;

    static CompactSet empty(const Grid& g) {
        CompactSet k;
        k.grid = g;
        k.mask.assign(static_cast<std::size_t>(g.cell_count()), 0);
        return k;
    }

    static CompactSet of_cells(const Grid& g, const std::vector<int>& cells) {
        if (cells.empty()) throw std::invalid_argument("CompactSet: use empty() for the empty set");
        CompactSet k = empty(g);
        for (int c : cells) {
            if (c < 0 || c >= g.cell_count()) throw std::out_of_range("CompactSet: cell index out of range");
            if (!g.cell_admissible_for_compact(g.cell_rank(c), g.cell_level(c)))
                throw std::invalid_argument("CompactSet: cell violates the one-cell margin rule");
            k.mask[static_cast<std::size_t>(c)] = 1;
        }
        return k;
    }

    /// Axis-aligned block of cells: spatial node range x level range.
    static CompactSet of_box(const Grid& g, int ix0, int ix1, int n0, int n1,
                             int iy0 = 0, int iy1 = 0) {
        std::vector<int> cells;
        for (int n = n0; n <= n1; ++n)
            for (int ix = ix0; ix <= ix1; ++ix) {
                if (g.dim == 1) {
                    cells.push_back(g.cell_index(g.interior_rank(ix), n));
                } else {
                    for (int iy = iy0; iy <= iy1; ++iy)
                        cells.push_back(g.cell_index(g.interior_rank(g.node_index(ix, iy)), n));
                }
            }
        return of_cells(g, cells);
    }

    bool contains(int cell) const { return mask[static_cast<std::size_t>(cell)] != 0; }
    bool is_empty() const { return std::find(mask.begin(), mask.end(), 1) == mask.end(); }
    int size() const { return as_cellset().size(); }

    CellSet as_cellset() const {
        CellSet s;
        s.grid = grid;
        s.mask = mask;
        return s;
    }

    /// Re-embed in a time-extended copy of the same spatial grid.
    CompactSet on_extended_grid(const Grid& g2) const {
        if (g2.dim != grid.dim || g2.nx != grid.nx || g2.ny != grid.ny ||
            g2.h != grid.h || g2.dt != grid.dt || g2.nt < grid.nt)
            throw std::invalid_argument("CompactSet: incompatible extension grid");
        CompactSet k = empty(g2);
        for (int c = 0; c < grid.cell_count(); ++c)
            if (mask[static_cast<std::size_t>(c)])
                k.mask[static_cast<std::size_t>(g2.cell_index(grid.cell_rank(c), grid.cell_level(c)))] = 1;
        return k;
    }

    int last_level() const {
        int last = 0;
        for (int c = 0; c < static_cast<int>(mask.size()); ++c)
            if (mask[static_cast<std::size_t>(c)]) last = std::max(last, grid.cell_level(c));
        return last;
    }
};

/// Nested open neighborhoods E_1 > E_2 > ... around K with intersection K:
/// E_i = cells at graph distance strictly below ceil(r/i). The threshold
/// reaches 1 for i >= r, so late sets collapse onto K itself.
///
/// Throws when K sits too close to the boundary for E_1 to keep a one-cell
/// margin inside the cell lattice.
inline std::vector<CellSet> shrink_neighborhoods(const CompactSet& K, int i_max, int r = 3) {
    if (K.is_empty()) throw std::invalid_argument("shrink_neighborhoods: K must be nonempty");
    if (i_max < 1) throw std::invalid_argument("shrink_neighborhoods: i_max must be >= 1");
    const Grid& g = K.grid;

    const int radius1 = r - 1;  // largest realized dilation: distance < ceil(r/1)
    for (int c = 0; c < g.cell_count(); ++c) {
        if (!K.mask[static_cast<std::size_t>(c)]) continue;
        const int node = g.interior_node(g.cell_rank(c));
        const int ix = g.node_ix(node);
        const int level = g.cell_level(c);
        bool fits = ix - radius1 >= 2 && ix + radius1 <= g.nx - 2 &&
                    level - radius1 >= 2 && level + radius1 <= g.nt - 2;
        if (g.dim == 2) {
            const int iy = g.node_iy(node);
            fits = fits && iy - radius1 >= 2 && iy + radius1 <= g.ny - 2;
        }
        if (!fits)
            throw std::invalid_argument("shrink_neighborhoods: K too close to the boundary to admit E_1");
    }

    const std::vector<int> dist = K.as_cellset().distance_map();
    std::vector<CellSet> out;
    out.reserve(static_cast<std::size_t>(i_max));
    for (int i = 1; i <= i_max; ++i) {
        const int threshold = (r + i - 1) / i;  // ceil(r/i)
        CellSet e = CellSet::empty(g);
        for (int c = 0; c < g.cell_count(); ++c)
            if (dist[static_cast<std::size_t>(c)] < threshold) e.mask[static_cast<std::size_t>(c)] = 1;
        out.push_back(std::move(e));
    }
    return out;
}

/// One grid-aligned space-time box: the open set
/// (x_{ix0}, x_{ix1}) x (t_{n0}, t_{n1})   (times (y_{iy0}, y_{iy1}) in 2-D),
/// given by node index ranges.
struct Box {
    int ix0, ix1;
    int n0, n1;
    int iy0 = 0, iy1 = 0;
};

/// Finite union of space-time boxes with its boundary decomposition into
/// lateral (sigma), top, and bottom node sets. Tops and bottoms exclude
/// nodes interior to the union; nodes on several pieces are assigned with
/// priority lateral > top > bottom so the three sets partition the boundary.
struct SpaceTimeUnion {
    Grid grid;
    std::vector<Box> boxes;

    SpaceTimeUnion(const Grid& g, std::vector<Box> bs) : grid(g), boxes(std::move(bs)) {
        for (const Box& b : boxes) {
            if (b.ix0 < 0 || b.ix1 > grid.nx || b.ix0 + 1 >= b.ix1 || b.n0 < 0 ||
                b.n1 > grid.nt - 1 || b.n0 + 1 >= b.n1)
                throw std::invalid_argument("SpaceTimeUnion: box not grid-aligned or degenerate");
            if (grid.dim == 2 && (b.iy0 < 0 || b.iy1 > grid.ny || b.iy0 + 1 >= b.iy1))
                throw std::invalid_argument("SpaceTimeUnion: box y-range invalid");
        }
        build();
    }

    bool inside(int node, int level) const {
        return inside_mask_[idx(node, level)] != 0;
    }

    const std::vector<SpaceTimeNode>& lateral() const { return lateral_; }
    const std::vector<SpaceTimeNode>& tops() const { return tops_; }
    const std::vector<SpaceTimeNode>& bottoms() const { return bottoms_; }

    std::vector<SpaceTimeNode> interior_nodes() const {
        std::vector<SpaceTimeNode> out;
        for (int n = 0; n < grid.nt; ++n)
            for (int node = 0; node < grid.nodes_per_level(); ++node)
                if (inside(node, n)) out.push_back({node, n});
        return out;
    }

    int min_inside_level() const { return min_level_; }
    int max_inside_level() const { return max_level_; }

private:
    std::size_t idx(int node, int level) const {
        return static_cast<std::size_t>(level) * grid.nodes_per_level() + node;
    }

    bool box_inside(const Box& b, int node, int level) const {
        const int ix = grid.node_ix(node);
        if (ix <= b.ix0 || ix >= b.ix1) return false;
        if (grid.dim == 2) {
            const int iy = grid.node_iy(node);
            if (iy <= b.iy0 || iy >= b.iy1) return false;
        }
        return level > b.n0 && level < b.n1;
    }

    bool box_closure(const Box& b, int node, int level) const {
        const int ix = grid.node_ix(node);
        if (ix < b.ix0 || ix > b.ix1) return false;
        if (grid.dim == 2) {
            const int iy = grid.node_iy(node);
            if (iy < b.iy0 || iy > b.iy1) return false;
        }
        return level >= b.n0 && level <= b.n1;
    }

    bool box_lateral(const Box& b, int node, int level) const {
        if (level < b.n0 || level > b.n1) return false;
        const int ix = grid.node_ix(node);
        bool on_side = ix == b.ix0 || ix == b.ix1;
        bool in_range = ix >= b.ix0 && ix <= b.ix1;
        if (grid.dim == 2) {
            const int iy = grid.node_iy(node);
            on_side = (on_side && iy >= b.iy0 && iy <= b.iy1) ||
                      ((iy == b.iy0 || iy == b.iy1) && in_range);
            return on_side;
        }
        return on_side;
    }

    void build() {
        const int npl = grid.nodes_per_level();
        inside_mask_.assign(static_cast<std::size_t>(npl) * grid.nt, 0);
        min_level_ = grid.nt;
        max_level_ = 0;
        for (int n = 0; n < grid.nt; ++n)
            for (int node = 0; node < npl; ++node)
                for (const Box& b : boxes)
                    if (box_inside(b, node, n)) {
                        inside_mask_[idx(node, n)] = 1;
                        min_level_ = std::min(min_level_, n);
                        max_level_ = std::max(max_level_, n);
                        break;
                    }

        std::vector<std::uint8_t> taken(inside_mask_.size(), 0);
        auto claim = [&](int node, int n, std::vector<SpaceTimeNode>& dst) {
            if (inside_mask_[idx(node, n)] || taken[idx(node, n)]) return;
            taken[idx(node, n)] = 1;
            dst.push_back({node, n});
        };
        for (int n = 0; n < grid.nt; ++n)
            for (int node = 0; node < npl; ++node) {
                for (const Box& b : boxes)
                    if (box_lateral(b, node, n)) {
                        claim(node, n, lateral_);
                        break;
                    }
            }
        for (const Box& b : boxes)
            for (int node = 0; node < npl; ++node) {
                if (box_closure(b, node, b.n1)) claim(node, b.n1, tops_);
                if (box_closure(b, node, b.n0)) claim(node, b.n0, bottoms_);
            }
    }

    std::vector<std::uint8_t> inside_mask_;
    std::vector<SpaceTimeNode> lateral_, tops_, bottoms_;
    int min_level_ = 0, max_level_ = 0;
};

} // namespace pmelab
