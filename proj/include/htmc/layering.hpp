#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "circuit.hpp"

namespace htmc {

/// Assignment of gates to layers 1..depth. A gate's layer strictly exceeds
/// the layers of all its gate arguments (inputs sit at layer 0).
struct Layering {
    std::vector<int> layer_of_gate;  // 1-based layers
    std::vector<int> layer_sizes;    // n_1..n_L

    int depth() const { return static_cast<int>(layer_sizes.size()); }
};

struct SizePResult {
    double value = 0.0;
    Layering layering;
    bool exact = false;
};

inline double layering_cost(const std::vector<int>& sizes, double p) {
    double s = 0.0;
    for (int n : sizes)
        if (n > 0) s += std::pow(static_cast<double>(n), p);
    return s;
}

inline std::vector<int> sizes_from_layers(const std::vector<int>& layer_of_gate) {
    int depth = 0;
    for (int l : layer_of_gate) depth = std::max(depth, l);
    std::vector<int> sizes(depth, 0);
    for (int l : layer_of_gate)
        if (l > 0) sizes[l - 1]++;
    return sizes;
}

namespace detail {

inline std::vector<std::vector<int>> gate_preds(const Circuit& c) {
    std::vector<std::vector<int>> preds(c.gate_count());
    for (int g = 0; g < c.gate_count(); ++g) {
        const Gate& gate = c.gates[g];
        for (int j = 0; j < gate_arity(gate.kind); ++j)
            if (gate.args[j] >= c.num_inputs) preds[g].push_back(gate.args[j] - c.num_inputs);
    }
    return preds;
}

inline std::vector<std::vector<int>> gate_succs(const Circuit& c) {
    std::vector<std::vector<int>> succs(c.gate_count());
    for (int g = 0; g < c.gate_count(); ++g) {
        const Gate& gate = c.gates[g];
        for (int j = 0; j < gate_arity(gate.kind); ++j)
            if (gate.args[j] >= c.num_inputs) succs[gate.args[j] - c.num_inputs].push_back(g);
    }
    return succs;
}

inline void compress_layers(std::vector<int>& layer_of_gate) {
    auto sizes = sizes_from_layers(layer_of_gate);
    std::vector<int> remap(sizes.size() + 1, 0);
    int next = 0;
    for (size_t l = 0; l < sizes.size(); ++l) remap[l + 1] = sizes[l] > 0 ? ++next : 0;
    for (int& l : layer_of_gate) l = remap[l];
}

}  // namespace detail

inline Layering asap_layering(const Circuit& c) {
    auto preds = detail::gate_preds(c);
    Layering lay;
    lay.layer_of_gate.assign(c.gate_count(), 1);
    for (int g = 0; g < c.gate_count(); ++g)
        for (int p : preds[g])
            lay.layer_of_gate[g] = std::max(lay.layer_of_gate[g], lay.layer_of_gate[p] + 1);
    lay.layer_sizes = sizes_from_layers(lay.layer_of_gate);
    return lay;
}

/// Brute-force minimum of sum n_l^p over all valid layerings, by dynamic
/// programming over downward-closed gate sets. Feasible up to ~12 gates.
inline SizePResult size_p_exact(const Circuit& c, double p, int gate_cap = 12) {
    if (c.gate_count() > gate_cap)
        throw std::invalid_argument("exact layering limited to " + std::to_string(gate_cap) +
                                    " gates, circuit has " + std::to_string(c.gate_count()));
    int n = c.gate_count();
    SizePResult res;
    res.exact = true;
    if (n == 0) {
        res.value = 0.0;
        return res;
    }
    auto preds = detail::gate_preds(c);
    std::vector<uint32_t> pred_mask(n, 0);
    for (int g = 0; g < n; ++g)
        for (int q : preds[g]) pred_mask[g] |= (1u << q);

    uint32_t full = (1u << n) - 1;
    std::vector<double> best(static_cast<size_t>(full) + 1,
                             std::numeric_limits<double>::infinity());
    std::vector<uint32_t> choice(static_cast<size_t>(full) + 1, 0);
    best[full] = 0.0;

    // A transition S -> S | T adds bits, so S | T > S numerically; a single
    // descending sweep sees every successor before its predecessors.
    for (uint32_t S = full; S-- > 0;) {
        uint32_t ready = 0;
        for (int g = 0; g < n; ++g)
            if (!(S >> g & 1) && (pred_mask[g] & ~S) == 0) ready |= (1u << g);
        double b = std::numeric_limits<double>::infinity();
        uint32_t pick = 0;
        for (uint32_t T = ready; T; T = (T - 1) & ready) {
            double cost = std::pow(static_cast<double>(__builtin_popcount(T)), p) + best[S | T];
            if (cost < b - 1e-15) {
                b = cost;
                pick = T;
            }
        }
        best[S] = b;
        choice[S] = pick;
    }

    // Reconstruct layering.
    res.layering.layer_of_gate.assign(n, 0);
    uint32_t S = 0;
    int layer = 0;
    while (S != full) {
        uint32_t T = choice[S];
        ++layer;
        for (int g = 0; g < n; ++g)
            if (T >> g & 1) res.layering.layer_of_gate[g] = layer;
        S |= T;
    }
    res.layering.layer_sizes = sizes_from_layers(res.layering.layer_of_gate);
    res.value = std::pow(layering_cost(res.layering.layer_sizes, p), 1.0 / p);
    return res;
}

/// ASAP (and ALAP) start followed by greedy improvement: merge adjacent
/// layers whenever no edge crosses between them (always profitable for
/// p < 1), then single-gate moves within feasible ranges, repeated to a
/// fixed point. Returns the better of the two starts.
inline SizePResult size_p_heuristic(const Circuit& c, double p) {
    int n = c.gate_count();
    SizePResult res;
    res.exact = false;
    if (n == 0) {
        res.value = 0.0;
        return res;
    }
    auto preds = detail::gate_preds(c);
    auto succs = detail::gate_succs(c);

    auto improve = [&](std::vector<int> layer) {
        detail::compress_layers(layer);
        bool changed = true;
        while (changed) {
            changed = false;
            // Merge passes.
            auto sizes = sizes_from_layers(layer);
            int depth = static_cast<int>(sizes.size());
            for (int l = 1; l < depth; ++l) {
                bool edge_across = false;
                for (int g = 0; g < n && !edge_across; ++g) {
                    if (layer[g] != l + 1) continue;
                    for (int q : preds[g])
                        if (layer[q] == l) edge_across = true;
                }
                if (!edge_across) {
                    for (int g = 0; g < n; ++g)
                        if (layer[g] == l + 1) layer[g] = l;
                    detail::compress_layers(layer);
                    sizes = sizes_from_layers(layer);
                    depth = static_cast<int>(sizes.size());
                    changed = true;
                    --l;
                }
            }
            // Single-gate moves.
            sizes = sizes_from_layers(layer);
            depth = static_cast<int>(sizes.size());
            for (int g = 0; g < n; ++g) {
                int lo = 1, hi = depth;
                for (int q : preds[g]) lo = std::max(lo, layer[q] + 1);
                for (int s : succs[g]) hi = std::min(hi, layer[s] - 1);
                int cur = layer[g];
                int best_l = cur;
                double best_delta = -1e-12;
                for (int l = lo; l <= hi; ++l) {
                    if (l == cur) continue;
                    double delta = std::pow(double(sizes[cur - 1] - 1), p) -
                                   std::pow(double(sizes[cur - 1]), p) +
                                   std::pow(double(sizes[l - 1] + 1), p) -
                                   std::pow(double(sizes[l - 1]), p);
                    if (delta < best_delta) {
                        best_delta = delta;
                        best_l = l;
                    }
                }
                if (best_l != cur) {
                    sizes[cur - 1]--;
                    sizes[best_l - 1]++;
                    layer[g] = best_l;
                    changed = true;
                }
            }
            detail::compress_layers(layer);
        }
        return layer;
    };

    // ASAP start.
    Layering asap = asap_layering(c);
    std::vector<int> best_layer = improve(asap.layer_of_gate);
    double best_cost = layering_cost(sizes_from_layers(best_layer), p);

    // ALAP start.
    int depth = asap.depth();
    std::vector<int> alap(n, depth);
    for (int g = n - 1; g >= 0; --g)
        for (int s : succs[g]) alap[g] = std::min(alap[g], alap[s] - 1);
    std::vector<int> cand = improve(alap);
    double cand_cost = layering_cost(sizes_from_layers(cand), p);
    if (cand_cost < best_cost - 1e-12) {
        best_cost = cand_cost;
        best_layer = cand;
    }

    res.layering.layer_of_gate = best_layer;
    res.layering.layer_sizes = sizes_from_layers(best_layer);
    res.value = std::pow(best_cost, 1.0 / p);
    return res;
}

enum class SizePMode { Exact, Heuristic };

/// |C|_p over layerings; exact mode brute-forces (gate cap), heuristic mode
/// is local search. Heuristic value is always >= the exact optimum.
inline SizePResult size_p(const Circuit& c, double p, SizePMode mode, int exact_cap = 12) {
    if (p <= 0.0) throw std::invalid_argument("p must be positive");
    return mode == SizePMode::Exact ? size_p_exact(c, p, exact_cap) : size_p_heuristic(c, p);
}

inline int size(const Circuit& c) { return c.gate_count(); }

}  // namespace htmc
