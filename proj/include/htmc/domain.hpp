#pragma once

#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace htmc {

/// Axis-aligned hyper-rectangle [lo_i, lo_i + width_i].
struct DomainRect {
    std::vector<double> lo;
    std::vector<double> width;

    DomainRect() = default;
    DomainRect(std::vector<double> lo_, std::vector<double> width_)
        : lo(std::move(lo_)), width(std::move(width_)) {
        validate();
    }

    static DomainRect unit_cube(int dim) {
        return DomainRect(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
    }

    static DomainRect centered(int dim, double half_side) {
        return DomainRect(std::vector<double>(dim, -half_side),
                          std::vector<double>(dim, 2 * half_side));
    }

    int dim() const { return static_cast<int>(lo.size()); }

    void validate() const {
        if (lo.size() != width.size()) throw std::invalid_argument("domain: lo/width size mismatch");
        for (double w : width)
            if (!(w > 0)) throw std::invalid_argument("domain: side lengths must be positive");
    }

    bool contains(const std::vector<double>& x, double tol = 1e-12) const {
        if (static_cast<int>(x.size()) != dim()) return false;
        for (int i = 0; i < dim(); ++i)
            if (x[i] < lo[i] - tol || x[i] > lo[i] + width[i] + tol) return false;
        return true;
    }

    bool operator==(const DomainRect& o) const { return lo == o.lo && width == o.width; }
};

inline nlohmann::ordered_json domain_to_json(const DomainRect& d) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (int i = 0; i < d.dim(); ++i) j.push_back({d.lo[i], d.lo[i] + d.width[i]});
    return j;
}

inline DomainRect domain_from_json(const nlohmann::json& j) {
    DomainRect d;
    for (const auto& pair : j) {
        double a = pair.at(0).get<double>();
        double b = pair.at(1).get<double>();
        d.lo.push_back(a);
        d.width.push_back(b - a);
    }
    d.validate();
    return d;
}

}  // namespace htmc
