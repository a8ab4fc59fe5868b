#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace htmc {

enum class GateKind : uint8_t { And, Or, Not, Const0, Const1 };

inline int gate_arity(GateKind k) {
    switch (k) {
        case GateKind::And:
        case GateKind::Or: return 2;
        case GateKind::Not: return 1;
        default: return 0;
    }
}

inline const char* gate_name(GateKind k) {
    switch (k) {
        case GateKind::And: return "AND";
        case GateKind::Or: return "OR";
        case GateKind::Not: return "NOT";
        case GateKind::Const0: return "CONST0";
        case GateKind::Const1: return "CONST1";
    }
    return "?";
}

struct Gate {
    GateKind kind;
    int args[2] = {-1, -1};

    bool operator==(const Gate& o) const {
        return kind == o.kind && args[0] == o.args[0] && args[1] == o.args[1];
    }
};

/// Combinational circuit over AND/OR/NOT/CONST gates stored in topological
/// order. Wire w addresses input w when w < num_inputs, otherwise gate
/// (w - num_inputs). Immutable in practice: every operation takes it const.
struct Circuit {
    int num_inputs = 0;
    std::vector<Gate> gates;
    std::vector<int> outputs;

    int wire_count() const { return num_inputs + static_cast<int>(gates.size()); }
    int gate_count() const { return static_cast<int>(gates.size()); }

    int add(GateKind kind, int a = -1, int b = -1) {
        Gate g;
        g.kind = kind;
        g.args[0] = a;
        g.args[1] = b;
        gates.push_back(g);
        return wire_count() - 1;
    }

    bool operator==(const Circuit& o) const {
        return num_inputs == o.num_inputs && gates == o.gates && outputs == o.outputs;
    }

    /// Structural validity: arities, topological argument order, output range.
    void validate() const {
        for (size_t g = 0; g < gates.size(); ++g) {
            const Gate& gate = gates[g];
            int arity = gate_arity(gate.kind);
            for (int j = 0; j < 2; ++j) {
                if (j < arity) {
                    int w = gate.args[j];
                    if (w < 0 || w >= num_inputs + static_cast<int>(g))
                        throw std::invalid_argument(
                            "gate " + std::to_string(g) + " argument " + std::to_string(w) +
                            " is not an input or earlier gate");
                } else if (gate.args[j] != -1) {
                    throw std::invalid_argument("gate " + std::to_string(g) + ": arity mismatch for " +
                                                gate_name(gate.kind));
                }
            }
        }
        for (int w : outputs)
            if (w < 0 || w >= wire_count())
                throw std::invalid_argument("output wire " + std::to_string(w) + " out of range");
    }

    std::vector<bool> evaluate(const std::vector<bool>& input) const {
        if (static_cast<int>(input.size()) != num_inputs)
            throw std::invalid_argument("expected " + std::to_string(num_inputs) + " input bits, got " +
                                        std::to_string(input.size()));
        std::vector<bool> wire(wire_count());
        for (int i = 0; i < num_inputs; ++i) wire[i] = input[i];
        for (size_t g = 0; g < gates.size(); ++g)
            wire[num_inputs + g] = eval_gate(gates[g], wire);
        std::vector<bool> out(outputs.size());
        for (size_t i = 0; i < outputs.size(); ++i) out[i] = wire[outputs[i]];
        return out;
    }

    /// 64 evaluations at once: input[i] packs one bit lane per sample.
    std::vector<uint64_t> evaluate_packed(const std::vector<uint64_t>& input) const {
        if (static_cast<int>(input.size()) != num_inputs)
            throw std::invalid_argument("packed input width mismatch");
        std::vector<uint64_t> wire(wire_count());
        for (int i = 0; i < num_inputs; ++i) wire[i] = input[i];
        for (size_t g = 0; g < gates.size(); ++g) {
            const Gate& gate = gates[g];
            uint64_t v = 0;
            switch (gate.kind) {
                case GateKind::And: v = wire[gate.args[0]] & wire[gate.args[1]]; break;
                case GateKind::Or: v = wire[gate.args[0]] | wire[gate.args[1]]; break;
                case GateKind::Not: v = ~wire[gate.args[0]]; break;
                case GateKind::Const0: v = 0; break;
                case GateKind::Const1: v = ~uint64_t(0); break;
            }
            wire[num_inputs + g] = v;
        }
        std::vector<uint64_t> out(outputs.size());
        for (size_t i = 0; i < outputs.size(); ++i) out[i] = wire[outputs[i]];
        return out;
    }

private:
    static bool eval_gate(const Gate& g, const std::vector<bool>& wire) {
        switch (g.kind) {
            case GateKind::And: return wire[g.args[0]] && wire[g.args[1]];
            case GateKind::Or: return wire[g.args[0]] || wire[g.args[1]];
            case GateKind::Not: return !wire[g.args[0]];
            case GateKind::Const0: return false;
            case GateKind::Const1: return true;
        }
        return false;
    }
};

inline GateKind gate_kind_from_name(const std::string& s) {
    if (s == "AND") return GateKind::And;
    if (s == "OR") return GateKind::Or;
    if (s == "NOT") return GateKind::Not;
    if (s == "CONST0") return GateKind::Const0;
    if (s == "CONST1") return GateKind::Const1;
    throw std::invalid_argument("unknown gate op '" + s + "'");
}

inline nlohmann::ordered_json circuit_to_json(const Circuit& c) {
    nlohmann::ordered_json j;
    j["num_inputs"] = c.num_inputs;
    j["gates"] = nlohmann::ordered_json::array();
    for (const Gate& g : c.gates) {
        nlohmann::ordered_json jg;
        jg["op"] = gate_name(g.kind);
        jg["args"] = nlohmann::ordered_json::array();
        for (int i = 0; i < gate_arity(g.kind); ++i) jg["args"].push_back(g.args[i]);
        j["gates"].push_back(jg);
    }
    j["outputs"] = c.outputs;
    return j;
}

inline std::string serialize(const Circuit& c) { return circuit_to_json(c).dump(2) + "\n"; }

inline Circuit circuit_from_json(const nlohmann::json& j) {
    Circuit c;
    if (!j.is_object() || !j.contains("num_inputs") || !j.contains("gates") || !j.contains("outputs"))
        throw std::invalid_argument("circuit json must have num_inputs, gates, outputs");
    c.num_inputs = j.at("num_inputs").get<int>();
    if (c.num_inputs < 0) throw std::invalid_argument("negative num_inputs");
    for (const auto& jg : j.at("gates")) {
        GateKind kind = gate_kind_from_name(jg.at("op").get<std::string>());
        const auto& args = jg.at("args");
        if (static_cast<int>(args.size()) != gate_arity(kind))
            throw std::invalid_argument(std::string(gate_name(kind)) + " expects " +
                                        std::to_string(gate_arity(kind)) + " args, got " +
                                        std::to_string(args.size()));
        Gate g;
        g.kind = kind;
        for (size_t i = 0; i < args.size(); ++i) g.args[i] = args[i].get<int>();
        c.gates.push_back(g);
    }
    c.outputs = j.at("outputs").get<std::vector<int>>();
    c.validate();
    return c;
}

inline Circuit parse_circuit(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed circuit json: ") + e.what());
    }
    return circuit_from_json(j);
}

}  // namespace htmc
