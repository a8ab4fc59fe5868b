#pragma once

#include <htmc/circuit.hpp>
#include <htmc/rng.hpp>

#include <vector>

namespace testutil {

/// Random valid circuit: gates draw arguments uniformly from earlier wires.
inline htmc::Circuit random_circuit(htmc::Rng& rng, int num_inputs, int num_gates,
                                    int num_outputs, bool allow_const = true) {
    htmc::Circuit c;
    c.num_inputs = num_inputs;
    for (int g = 0; g < num_gates; ++g) {
        int avail = c.wire_count();
        int kinds = allow_const && avail == 0 ? 2 : (allow_const ? 5 : 3);
        htmc::GateKind kind;
        if (avail == 0) {
            kind = rng.below(2) ? htmc::GateKind::Const1 : htmc::GateKind::Const0;
        } else {
            switch (rng.below(kinds)) {
                case 0: kind = htmc::GateKind::And; break;
                case 1: kind = htmc::GateKind::Or; break;
                case 2: kind = htmc::GateKind::Not; break;
                case 3: kind = htmc::GateKind::Const0; break;
                default: kind = htmc::GateKind::Const1; break;
            }
        }
        int a = htmc::gate_arity(kind) > 0 ? static_cast<int>(rng.below(avail)) : -1;
        int b = htmc::gate_arity(kind) > 1 ? static_cast<int>(rng.below(avail)) : -1;
        c.add(kind, a, b);
    }
    for (int o = 0; o < num_outputs; ++o)
        c.outputs.push_back(static_cast<int>(rng.below(c.wire_count())));
    c.validate();
    return c;
}

inline std::vector<bool> bits_of(uint64_t v, int width) {
    std::vector<bool> b(width);
    for (int i = 0; i < width; ++i) b[i] = (v >> (width - 1 - i)) & 1;
    return b;
}

inline uint64_t int_of(const std::vector<bool>& bits, size_t off, int width) {
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 1) | uint64_t(bits[off + i]);
    return v;
}

}  // namespace testutil
