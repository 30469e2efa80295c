#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmelab/grid.hpp"

namespace pmelab {

/// Nodal values of u (or u^m, or an obstacle) over all time levels.
class Field {
public:
    Field() = default;

    Field(const Grid& g, double fill = 0.0, std::string name = "u")
        : grid_(g),
          values_(static_cast<std::size_t>(g.nt) * g.nodes_per_level(), fill),
          name_(std::move(name)) {}

    static Field from_function(const Grid& g,
                               const std::function<double(double, double, double)>& f,
                               std::string name = "u") {
        Field out(g, 0.0, std::move(name));
        for (int n = 0; n < g.nt; ++n)
            for (int node = 0; node < g.nodes_per_level(); ++node)
                out.at(n, node) = f(g.x_of(node), g.y_of(node), g.t_of(n));
        return out;
    }

    const Grid& grid() const { return grid_; }
    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

    double& at(int level, int node) {
        return values_[static_cast<std::size_t>(level) * grid_.nodes_per_level() + node];
    }
    double at(int level, int node) const {
        return values_[static_cast<std::size_t>(level) * grid_.nodes_per_level() + node];
    }

    std::span<double> level(int n) {
        return {values_.data() + static_cast<std::size_t>(n) * grid_.nodes_per_level(),
                static_cast<std::size_t>(grid_.nodes_per_level())};
    }
    std::span<const double> level(int n) const {
        return {values_.data() + static_cast<std::size_t>(n) * grid_.nodes_per_level(),
                static_cast<std::size_t>(grid_.nodes_per_level())};
    }

    std::span<const double> raw() const { return values_; }
    std::span<double> raw() { return values_; }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    double min_value() const {
        double m = values_.empty() ? 0.0 : values_.front();
        for (double v : values_) m = std::min(m, v);
        return m;
    }

    double max_value() const {
        double m = values_.empty() ? 0.0 : values_.front();
        for (double v : values_) m = std::max(m, v);
        return m;
    }

    bool all_finite() const {
        for (double v : values_) if (!std::isfinite(v)) return false;
        return true;
    }

    /// Nonnegativity up to roundoff: min >= -1e-12 * max(1, max).
    bool effectively_nonnegative() const {
        return min_value() >= -1e-12 * std::max(1.0, max_value());
    }

    /// Value of a space-time cell: by convention the value of its owning
    /// interior node at the cell's (upper) time level.
    double cell_value(int cell) const {
        return at(grid_.cell_level(cell), grid_.interior_node(grid_.cell_rank(cell)));
    }

    double sup_norm_diff(const Field& other) const {
        if (!(grid_ == other.grid_)) throw std::invalid_argument("Field: grid mismatch");
        double m = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i)
            m = std::max(m, std::abs(values_[i] - other.values_[i]));
        return m;
    }

    // -- CSV: one row per time level, first column the time value, then all
    //    nodes in row-major order; header row mandatory. ------------------

    void write_csv(std::ostream& os) const {
        os << "time";
        for (int node = 0; node < grid_.nodes_per_level(); ++node) os << ",n" << node;
        os << "\n";
        char buf[32];
        for (int n = 0; n < grid_.nt; ++n) {
            std::snprintf(buf, sizeof buf, "%.17g", grid_.t_of(n));
            os << buf;
            for (int node = 0; node < grid_.nodes_per_level(); ++node) {
                std::snprintf(buf, sizeof buf, "%.17g", at(n, node));
                os << ',' << buf;
            }
            os << "\n";
        }
    }

    void save_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("Field: cannot open " + path);
        write_csv(os);
    }

    static Field read_csv(std::istream& is, const Grid& g, std::string name = "u") {
        Field out(g, 0.0, std::move(name));
        std::string line;
        if (!std::getline(is, line) || line.rfind("time", 0) != 0)
            throw std::runtime_error("Field CSV: missing header row");
        for (int n = 0; n < g.nt; ++n) {
            if (!std::getline(is, line))
                throw std::runtime_error("Field CSV: truncated at level " + std::to_string(n));
            std::istringstream ss(line);
            std::string tok;
            if (!std::getline(ss, tok, ',')) throw std::runtime_error("Field CSV: bad row");
            for (int node = 0; node < g.nodes_per_level(); ++node) {
                if (!std::getline(ss, tok, ','))
                    throw std::runtime_error("Field CSV: short row at level " + std::to_string(n));
                out.at(n, node) = std::stod(tok);
            }
        }
        return out;
    }

    static Field load_csv(const std::string& path, const Grid& g, std::string name = "u") {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("Field: cannot open " + path);
        return read_csv(is, g, std::move(name));
    }

private:
    Grid grid_;
    std::vector<double> values_;
    std::string name_;
};

} // namespace pmelab
