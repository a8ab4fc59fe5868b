#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "circuit.hpp"
#include "fixed_point.hpp"

namespace htmc {

/// Wire group, MSB first.
using Word = std::vector<int>;

/// Incremental circuit construction with word-level arithmetic helpers.
/// All arithmetic is verified against integer oracles in the test suite.
class CircuitBuilder {
public:
    explicit CircuitBuilder(int num_inputs) { c_.num_inputs = num_inputs; }

    Circuit take(std::vector<int> outputs) {
        c_.outputs = std::move(outputs);
        c_.validate();
        return std::move(c_);
    }

    const Circuit& peek() const { return c_; }
    int gate_count() const { return c_.gate_count(); }

    int input(int i) const {
        if (i < 0 || i >= c_.num_inputs) throw std::invalid_argument("input index out of range");
        return i;
    }

    Word input_word(int first, int width) const {
        Word w(width);
        for (int i = 0; i < width; ++i) w[i] = input(first + i);
        return w;
    }

    int not_(int a) { return c_.add(GateKind::Not, a); }
    int and_(int a, int b) { return c_.add(GateKind::And, a, b); }
    int or_(int a, int b) { return c_.add(GateKind::Or, a, b); }

    int const0() {
        if (const0_ < 0) const0_ = c_.add(GateKind::Const0);
        return const0_;
    }
    int const1() {
        if (const1_ < 0) const1_ = c_.add(GateKind::Const1);
        return const1_;
    }
    int const_bit(bool v) { return v ? const1() : const0(); }

    // XOR expands to 2 NOT + 2 AND + 1 OR.
    int xor_(int a, int b) { return or_(and_(a, not_(b)), and_(not_(a), b)); }

    int xnor_(int a, int b) { return or_(and_(a, b), and_(not_(a), not_(b))); }

    /// sel ? a : b
    int mux(int sel, int a, int b) { return or_(and_(sel, a), and_(not_(sel), b)); }

    Word mux_word(int sel, const Word& a, const Word& b) {
        if (a.size() != b.size()) throw std::invalid_argument("mux_word width mismatch");
        Word out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = mux(sel, a[i], b[i]);
        return out;
    }

    Word const_word(uint64_t v, int width) {
        Word w(width);
        for (int i = 0; i < width; ++i) w[i] = const_bit((v >> (width - 1 - i)) & 1);
        return w;
    }

    /// Unsigned ripple-carry sum, width max(|a|,|b|)+1.
    Word add_u(const Word& a, const Word& b) {
        int wa = static_cast<int>(a.size()), wb = static_cast<int>(b.size());
        int w = std::max(wa, wb);
        Word out(w + 1);
        int carry = -1;
        for (int i = 0; i < w; ++i) {
            int ai = i < wa ? a[wa - 1 - i] : -1;  // LSB order
            int bi = i < wb ? b[wb - 1 - i] : -1;
            int sum, cout;
            full_add(ai, bi, carry, sum, cout);
            out[w - i] = sum;
            carry = cout;
        }
        out[0] = carry < 0 ? const0() : carry;
        return out;
    }

    /// Unsigned difference a - b; caller guarantees a >= b.
    Word sub_u(const Word& a, const Word& b) {
        int wa = static_cast<int>(a.size()), wb = static_cast<int>(b.size());
        if (wb > wa) throw std::invalid_argument("sub_u: subtrahend wider than minuend");
        Word out(wa);
        int borrow = -1;
        for (int i = 0; i < wa; ++i) {
            int ai = a[wa - 1 - i];
            int bi = i < wb ? b[wb - 1 - i] : -1;
            // diff = a ^ b ^ borrow ; new borrow = (!a & (b | borrow)) | (b & borrow)
            int axb = bi < 0 ? ai : xor_(ai, bi);
            int diff = borrow < 0 ? axb : xor_(axb, borrow);
            int nb;
            int na = not_(ai);
            if (bi < 0 && borrow < 0)
                nb = -1;
            else if (bi < 0)
                nb = and_(na, borrow);
            else if (borrow < 0)
                nb = and_(na, bi);
            else
                nb = or_(and_(na, or_(bi, borrow)), and_(bi, borrow));
            out[wa - 1 - i] = diff;
            borrow = nb;
        }
        return out;
    }

    /// a < b over unsigned words (widths may differ).
    int less_u(const Word& a, const Word& b) {
        int wa = static_cast<int>(a.size()), wb = static_cast<int>(b.size());
        int w = std::max(wa, wb);
        int lt = -1;  // -1 encodes constant false so far
        int eq = -1;  // -1 encodes constant true so far
        for (int i = 0; i < w; ++i) {
            int ca = i < w - wa ? const0() : a[i - (w - wa)];
            int cb = i < w - wb ? const0() : b[i - (w - wb)];
            int here = and_(not_(ca), cb);  // a_i < b_i
            int lt_here = eq < 0 ? here : and_(eq, here);
            lt = lt < 0 ? lt_here : or_(lt, lt_here);
            int eq_here = xnor_(ca, cb);
            eq = eq < 0 ? eq_here : and_(eq, eq_here);
        }
        return lt < 0 ? const0() : lt;
    }

    int equal_u(const Word& a, const Word& b) {
        int wa = static_cast<int>(a.size()), wb = static_cast<int>(b.size());
        int w = std::max(wa, wb);
        int eq = -1;
        for (int i = 0; i < w; ++i) {
            int ca = i < w - wa ? const0() : a[i - (w - wa)];
            int cb = i < w - wb ? const0() : b[i - (w - wb)];
            int eq_here = xnor_(ca, cb);
            eq = eq < 0 ? eq_here : and_(eq, eq_here);
        }
        return eq < 0 ? const1() : eq;
    }

    /// Clamp an unsigned word to [lo, hi]; result width unchanged.
    Word clamp_u(const Word& a, uint64_t lo, uint64_t hi) {
        if (lo > hi) throw std::invalid_argument("clamp_u: lo > hi");
        int w = static_cast<int>(a.size());
        Word lo_w = const_word(lo, w);
        Word hi_w = const_word(hi, w);
        int below = less_u(a, lo_w);
        Word r = mux_word(below, lo_w, a);
        int above = less_u(hi_w, r);
        return mux_word(above, hi_w, r);
    }

    /// Multiply an unsigned word by a nonnegative integer constant
    /// (shift-and-add). Result width grows to fit.
    Word mul_const_u(const Word& a, uint64_t k) {
        if (k == 0) return Word{const0()};
        Word acc;
        bool first = true;
        for (int t = 63; t >= 0; --t) {
            if (!(k >> t & 1)) continue;
            Word shifted = a;
            for (int j = 0; j < t; ++j) shifted.push_back(const0());
            if (first) {
                acc = shifted;
                first = false;
            } else {
                acc = add_u(acc, shifted);
            }
        }
        return acc;
    }

    /// Sign-magnitude addition. Inputs (sa, ma), (sb, mb); output magnitude is
    /// one bit wider than the wider input.
    std::pair<int, Word> add_s(int sa, Word ma, int sb, Word mb) {
        int w = static_cast<int>(std::max(ma.size(), mb.size()));
        while (static_cast<int>(ma.size()) < w) ma.insert(ma.begin(), const0());
        while (static_cast<int>(mb.size()) < w) mb.insert(mb.begin(), const0());
        Word sum = add_u(ma, mb);                  // width w+1
        int lt = less_u(ma, mb);                   // |a| < |b|
        Word big = mux_word(lt, mb, ma);
        Word small = mux_word(lt, ma, mb);
        Word diff = sub_u(big, small);             // width w
        diff.insert(diff.begin(), const0());       // align to w+1
        int same = xnor_(sa, sb);
        Word mag = mux_word(same, sum, diff);
        int sign_diff = mux(lt, sb, sa);
        int sign = mux(same, sa, sign_diff);
        return {sign, mag};
    }

    std::pair<int, Word> negate_s(int s, const Word& m) { return {not_(s), m}; }

    /// Splice another circuit's gates in, feeding the given wires as inputs.
    /// Returns the spliced circuit's output wires.
    std::vector<int> append(const Circuit& sub, const std::vector<int>& inputs) {
        if (static_cast<int>(inputs.size()) != sub.num_inputs)
            throw std::invalid_argument("append: wrong input count");
        std::vector<int> map(sub.wire_count());
        for (int i = 0; i < sub.num_inputs; ++i) map[i] = inputs[i];
        for (int g = 0; g < sub.gate_count(); ++g) {
            const Gate& gate = sub.gates[g];
            int a = gate_arity(gate.kind) > 0 ? map[gate.args[0]] : -1;
            int b = gate_arity(gate.kind) > 1 ? map[gate.args[1]] : -1;
            map[sub.num_inputs + g] = c_.add(gate.kind, a, b);
        }
        std::vector<int> outs(sub.outputs.size());
        for (size_t i = 0; i < sub.outputs.size(); ++i) outs[i] = map[sub.outputs[i]];
        return outs;
    }

private:
    Circuit c_;
    int const0_ = -1;
    int const1_ = -1;

    // Full adder on optional wires (-1 = constant 0). Two XOR (5 gates each)
    // plus majority logic: 13 gates per bit in the general case.
    void full_add(int a, int b, int cin, int& sum, int& cout) {
        std::vector<int> present;
        for (int w : {a, b, cin})
            if (w >= 0) present.push_back(w);
        if (present.empty()) {
            sum = const0();
            cout = -1;
            return;
        }
        if (present.size() == 1) {
            sum = present[0];
            cout = -1;
            return;
        }
        if (present.size() == 2) {
            sum = xor_(present[0], present[1]);
            cout = and_(present[0], present[1]);
            return;
        }
        int axb = xor_(a, b);
        sum = xor_(axb, cin);
        cout = or_(and_(a, b), and_(axb, cin));
    }
};

struct BuiltCircuit {
    Circuit circuit;
    double gates_per_bit = 0.0;
};

/// Ripple adder as a standalone circuit. Unsigned: inputs a|b (MSB first),
/// outputs bits+1. Signed (sign-magnitude): inputs (sa, ma)|(sb, mb),
/// outputs (sign, bits+1 magnitude).
inline BuiltCircuit build_adder(int bits, bool is_signed) {
    if (bits < 1) throw std::invalid_argument("build_adder: bits must be >= 1");
    if (!is_signed) {
        CircuitBuilder b(2 * bits);
        Word a = b.input_word(0, bits), w = b.input_word(bits, bits);
        Word sum = b.add_u(a, w);
        BuiltCircuit out{b.take(sum), 0.0};
        out.gates_per_bit = static_cast<double>(out.circuit.gate_count()) / bits;
        return out;
    }
    CircuitBuilder b(2 * (bits + 1));
    int sa = b.input(0), sb = b.input(bits + 1);
    Word ma = b.input_word(1, bits), mb = b.input_word(bits + 2, bits);
    auto [sign, mag] = b.add_s(sa, ma, sb, mb);
    std::vector<int> outs{sign};
    outs.insert(outs.end(), mag.begin(), mag.end());
    BuiltCircuit out{b.take(outs), 0.0};
    out.gates_per_bit = static_cast<double>(out.circuit.gate_count()) / bits;
    return out;
}

/// Unsigned comparator: inputs a|b, outputs (a<b, a==b).
inline BuiltCircuit build_comparator(int bits) {
    if (bits < 1) throw std::invalid_argument("build_comparator: bits must be >= 1");
    CircuitBuilder b(2 * bits);
    Word a = b.input_word(0, bits), w = b.input_word(bits, bits);
    int lt = b.less_u(a, w);
    int eq = b.equal_u(a, w);
    BuiltCircuit out{b.take({lt, eq}), 0.0};
    out.gates_per_bit = static_cast<double>(out.circuit.gate_count()) / bits;
    return out;
}

/// Integer clamp to [lo, hi] on an unsigned word.
inline BuiltCircuit build_clamp(int bits, uint64_t lo, uint64_t hi) {
    if (bits < 1) throw std::invalid_argument("build_clamp: bits must be >= 1");
    uint64_t top = bits >= 64 ? ~uint64_t(0) : ((uint64_t(1) << bits) - 1);
    if (lo > hi || hi > top) throw std::invalid_argument("build_clamp: bounds not representable");
    CircuitBuilder b(bits);
    Word a = b.input_word(0, bits);
    Word r = b.clamp_u(a, lo, hi);
    BuiltCircuit out{b.take(r), 0.0};
    out.gates_per_bit = static_cast<double>(out.circuit.gate_count()) / bits;
    return out;
}

/// Constant word emitter.
inline BuiltCircuit build_const(int bits, uint64_t value) {
    if (bits < 1) throw std::invalid_argument("build_const: bits must be >= 1");
    CircuitBuilder b(0);
    Word w = b.const_word(value, bits);
    BuiltCircuit out{b.take(w), 0.0};
    out.gates_per_bit = static_cast<double>(out.circuit.gate_count()) / bits;
    return out;
}

/// DNF lookup circuit. tables[o] lists the output bit for every input
/// assignment (index = MSB-first input value), so each table has 2^n rows.
inline Circuit build_lookup(const std::vector<std::vector<bool>>& tables, int num_inputs) {
    if (num_inputs < 0 || num_inputs > 24) throw std::invalid_argument("build_lookup: bad input count");
    size_t rows = size_t(1) << num_inputs;
    for (const auto& t : tables)
        if (t.size() != rows) throw std::invalid_argument("build_lookup: table must have 2^inputs rows");
    CircuitBuilder b(num_inputs);
    std::vector<int> neg(num_inputs);
    bool need_neg = false;
    for (const auto& t : tables)
        for (bool v : t) need_neg |= v;
    if (need_neg && num_inputs > 0)
        for (int i = 0; i < num_inputs; ++i) neg[i] = b.not_(i);
    std::vector<int> minterm(rows, -1);
    auto minterm_wire = [&](size_t row) {
        if (minterm[row] >= 0) return minterm[row];
        int acc = -1;
        for (int i = 0; i < num_inputs; ++i) {
            bool bit = (row >> (num_inputs - 1 - i)) & 1;
            int lit = bit ? i : neg[i];
            acc = acc < 0 ? lit : b.and_(acc, lit);
        }
        if (acc < 0) acc = b.const1();  // zero-input lookup
        minterm[row] = acc;
        return acc;
    };
    std::vector<int> outs;
    for (const auto& t : tables) {
        int acc = -1;
        for (size_t row = 0; row < rows; ++row) {
            if (!t[row]) continue;
            int m = minterm_wire(row);
            acc = acc < 0 ? m : b.or_(acc, m);
        }
        if (acc < 0) acc = b.const0();
        outs.push_back(acc);
    }
    return b.take(outs);
}

/// One stage of a clamped composition: a circuit whose outputs form words of
/// `word_bits` bits; each word may be clamped to an integer range before the
/// next stage reads it.
struct ClampStage {
    Circuit circuit;
    int word_bits = 1;
    std::vector<std::pair<uint64_t, uint64_t>> clamp_ranges;  // empty: no clamps
};

struct ComposeResult {
    Circuit circuit;
    int clamp_gate_overhead = 0;
};

/// Chain stages, inserting per-word integer clamps between consecutive
/// stages. Stage widths must agree.
inline ComposeResult compose_with_clamps(const std::vector<ClampStage>& stages) {
    if (stages.empty()) throw std::invalid_argument("compose_with_clamps: no stages");
    CircuitBuilder b(stages.front().circuit.num_inputs);
    std::vector<int> wires(stages.front().circuit.num_inputs);
    for (size_t i = 0; i < wires.size(); ++i) wires[i] = static_cast<int>(i);
    int clamp_overhead = 0;
    for (size_t s = 0; s < stages.size(); ++s) {
        const ClampStage& st = stages[s];
        if (static_cast<int>(wires.size()) != st.circuit.num_inputs)
            throw std::invalid_argument("compose_with_clamps: stage " + std::to_string(s) +
                                        " expects " + std::to_string(st.circuit.num_inputs) +
                                        " wires, got " + std::to_string(wires.size()));
        wires = b.append(st.circuit, wires);
        if (!st.clamp_ranges.empty()) {
            if (wires.size() % st.word_bits != 0 ||
                wires.size() / st.word_bits != st.clamp_ranges.size())
                throw std::invalid_argument("compose_with_clamps: clamp ranges do not tile outputs");
            int before = b.gate_count();
            std::vector<int> clamped;
            for (size_t w = 0; w < st.clamp_ranges.size(); ++w) {
                Word word(wires.begin() + w * st.word_bits, wires.begin() + (w + 1) * st.word_bits);
                Word cw = b.clamp_u(word, st.clamp_ranges[w].first, st.clamp_ranges[w].second);
                clamped.insert(clamped.end(), cw.begin(), cw.end());
            }
            wires = clamped;
            clamp_overhead += b.gate_count() - before;
        }
    }
    return {b.take(wires), clamp_overhead};
}

}  // namespace htmc
