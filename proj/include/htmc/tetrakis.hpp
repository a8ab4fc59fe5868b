#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "circuit.hpp"
#include "domain.hpp"
#include "fixed_point.hpp"
#include "gatebuild.hpp"
#include "rng.hpp"

namespace htmc {

/// Thrown when a supplier breaks its declared accuracy contract.
struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Continuous piecewise-linear extension of a circuit's grid values. The
/// circuit reads in_dim coordinates on the integer grid {0..2^M}, each as
/// M+1 bits MSB first, and emits out_dim fixed-point words.
struct TetrakisFunction {
    Circuit circuit;
    int M = 0;
    int in_dim = 1;
    int out_dim = 1;
    FixedPointFormat out_format;
    DomainRect domain;

    int coord_bits() const { return M + 1; }
    int64_t grid_top() const { return int64_t(1) << M; }

    void validate() const {
        circuit.validate();
        domain.validate();
        if (domain.dim() != in_dim) throw std::invalid_argument("tetrakis: domain dim mismatch");
        if (circuit.num_inputs != in_dim * coord_bits())
            throw std::invalid_argument("tetrakis: circuit must read in_dim*(M+1) bits");
        if (static_cast<int>(circuit.outputs.size()) != out_dim * out_format.width())
            throw std::invalid_argument("tetrakis: circuit must emit out_dim*format_width bits");
    }
};

struct SimplexVertex {
    std::vector<int64_t> vertex;  // integer grid coordinates
    double weight = 0.0;
};

/// d_in+1 simplex corners with barycentric weights: weights sum to 1 and
/// sum_k weight_k * vertex_k reproduces the (grid-normalized) input.
using SimplexDecomposition = std::vector<SimplexVertex>;

enum class OutOfDomain { Reject, Clamp };

/// Locate the mirrored-Kuhn simplex containing x and return its corners and
/// weights. Coordinates are normalized to the integer grid {0..2^M}; the
/// corner distances to the per-coordinate nearest even grid line are sorted
/// descending, which is the orientation that makes the barycentric
/// reconstruction identity hold.
inline SimplexDecomposition decompose(const std::vector<double>& x, int M, const DomainRect& domain,
                                      OutOfDomain policy = OutOfDomain::Reject) {
    int d = domain.dim();
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument("decompose: dimension mismatch");
    if (policy == OutOfDomain::Reject && !domain.contains(x, 1e-9))
        throw std::invalid_argument("decompose: point outside domain");
    const double top = std::ldexp(1.0, M);

    std::vector<int64_t> even(d), odd(d);
    std::vector<double> s(d);
    for (int i = 0; i < d; ++i) {
        double u = (x[i] - domain.lo[i]) / domain.width[i] * top;
        u = std::min(std::max(u, 0.0), top);
        int64_t lower = static_cast<int64_t>(std::floor(u));
        if (lower >= static_cast<int64_t>(top)) lower = static_cast<int64_t>(top) - 1;
        double frac = u - static_cast<double>(lower);
        if (lower % 2 == 0) {
            even[i] = lower;
            odd[i] = lower + 1;
            s[i] = frac;
        } else {
            even[i] = lower + 1;
            odd[i] = lower;
            s[i] = 1.0 - frac;
        }
    }

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });

    SimplexDecomposition dec(d + 1);
    std::vector<int64_t> v = even;
    double prev_t = 1.0;
    for (int k = 0; k <= d; ++k) {
        double t_next = (k < d) ? s[order[k]] : 0.0;
        dec[k].vertex = v;
        dec[k].weight = prev_t - t_next;
        if (dec[k].weight < 0 && dec[k].weight > -1e-15) dec[k].weight = 0.0;
        prev_t = t_next;
        if (k < d) v[order[k]] = odd[order[k]];
    }
    return dec;
}

inline std::vector<bool> encode_grid_point(const std::vector<int64_t>& v, int coord_bits) {
    std::vector<bool> bits;
    bits.reserve(v.size() * coord_bits);
    for (int64_t c : v) {
        auto w = to_bits_msb(static_cast<uint64_t>(c), coord_bits);
        bits.insert(bits.end(), w.begin(), w.end());
    }
    return bits;
}

/// Decoded circuit value at one grid point.
inline std::vector<double> tk_grid_value(const TetrakisFunction& tk, const std::vector<int64_t>& v) {
    auto out_bits = tk.circuit.evaluate(encode_grid_point(v, tk.coord_bits()));
    std::vector<double> out(tk.out_dim);
    int w = tk.out_format.width();
    for (int o = 0; o < tk.out_dim; ++o) out[o] = tk.out_format.decode(out_bits, o * w);
    return out;
}

inline std::vector<double> tk_eval(const TetrakisFunction& tk, const std::vector<double>& x,
                                   OutOfDomain policy = OutOfDomain::Reject) {
    auto dec = decompose(x, tk.M, tk.domain, policy);
    std::vector<double> acc(tk.out_dim, 0.0);
    for (const auto& [vertex, weight] : dec) {
        if (weight == 0.0) continue;
        auto val = tk_grid_value(tk, vertex);
        for (int o = 0; o < tk.out_dim; ++o) acc[o] += weight * val[o];
    }
    return acc;
}

/// Batched evaluation; packs 64 circuit evaluations per word.
inline std::vector<std::vector<double>> tk_eval_many(const TetrakisFunction& tk,
                                                     const std::vector<std::vector<double>>& xs,
                                                     OutOfDomain policy = OutOfDomain::Reject) {
    size_t n = xs.size();
    int d = tk.in_dim;
    std::vector<std::vector<double>> result(n, std::vector<double>(tk.out_dim, 0.0));
    struct Job {
        size_t point;
        double weight;
    };
    std::vector<Job> jobs;
    std::vector<std::vector<bool>> encodings;
    for (size_t i = 0; i < n; ++i) {
        auto dec = decompose(xs[i], tk.M, tk.domain, policy);
        for (const auto& [vertex, weight] : dec) {
            if (weight == 0.0) continue;
            jobs.push_back({i, weight});
            encodings.push_back(encode_grid_point(vertex, tk.coord_bits()));
        }
    }
    int in_bits = d * tk.coord_bits();
    int w = tk.out_format.width();
    for (size_t base = 0; base < jobs.size(); base += 64) {
        size_t lanes = std::min<size_t>(64, jobs.size() - base);
        std::vector<uint64_t> packed(in_bits, 0);
        for (size_t l = 0; l < lanes; ++l)
            for (int b = 0; b < in_bits; ++b)
                if (encodings[base + l][b]) packed[b] |= (uint64_t(1) << l);
        auto out = tk.circuit.evaluate_packed(packed);
        for (size_t l = 0; l < lanes; ++l) {
            std::vector<bool> bits(out.size());
            for (size_t b = 0; b < out.size(); ++b) bits[b] = (out[b] >> l) & 1;
            auto& slot = result[jobs[base + l].point];
            for (int o = 0; o < tk.out_dim; ++o)
                slot[o] += jobs[base + l].weight * tk.out_format.decode(bits, o * w);
        }
    }
    return result;
}

struct CoarsenResult {
    TetrakisFunction fine;  // level M+1 function equal to the input everywhere
    double size_ratio = 0.0;
};

/// Level-M function re-expressed on the level-M+1 grid. Each odd fine
/// coordinate is mapped to the even and odd neighbours on the coarse grid;
/// the two circuit values are averaged exactly by widening the output format
/// one bit. TK_{M+1}[B] = TK_M[A] pointwise.
inline CoarsenResult coarsen(const TetrakisFunction& a) {
    a.validate();
    int d = a.in_dim;
    int fine_bits = a.coord_bits() + 1;
    CircuitBuilder b(d * fine_bits);

    std::vector<int> even_inputs, odd_inputs;
    for (int i = 0; i < d; ++i) {
        Word y = b.input_word(i * fine_bits, fine_bits);
        Word w(y.begin(), y.end() - 1);  // floor(y/2)
        int lsb = y.back();
        int parity = y[fine_bits - 2];  // parity of floor(y/2)
        // Even neighbour: floor + 1 when y odd and floor odd; odd neighbour:
        // floor + 1 when y odd and floor even.
        int inc_even = b.and_(lsb, parity);
        int inc_odd = b.and_(lsb, b.not_(parity));
        Word u = b.add_u(w, Word{inc_even});
        Word v = b.add_u(w, Word{inc_odd});
        u.erase(u.begin());  // result fits coord_bits: values stay <= 2^M
        v.erase(v.begin());
        even_inputs.insert(even_inputs.end(), u.begin(), u.end());
        odd_inputs.insert(odd_inputs.end(), v.begin(), v.end());
    }

    std::vector<int> out_e = b.append(a.circuit, even_inputs);
    std::vector<int> out_o = b.append(a.circuit, odd_inputs);

    std::vector<int> outputs;
    int w = a.out_format.width();
    for (int o = 0; o < a.out_dim; ++o) {
        int base = o * w;
        int se, so;
        Word me(a.out_format.frac_bits), mo(a.out_format.frac_bits);
        if (a.out_format.is_signed) {
            se = out_e[base];
            so = out_o[base];
            for (int m = 0; m < a.out_format.frac_bits; ++m) {
                me[m] = out_e[base + 1 + m];
                mo[m] = out_o[base + 1 + m];
            }
        } else {
            se = b.const0();
            so = b.const0();
            for (int m = 0; m < a.out_format.frac_bits; ++m) {
                me[m] = out_e[base + m];
                mo[m] = out_o[base + m];
            }
        }
        // Sign-magnitude sum has frac_bits+1 magnitude bits; reading them as
        // the new fraction halves the value, so the average is exact.
        auto [sign, mag] = b.add_s(se, me, so, mo);
        if (a.out_format.is_signed) outputs.push_back(sign);
        outputs.insert(outputs.end(), mag.begin(), mag.end());
    }

    CoarsenResult res;
    res.fine.circuit = b.take(outputs);
    res.fine.M = a.M + 1;
    res.fine.in_dim = a.in_dim;
    res.fine.out_dim = a.out_dim;
    res.fine.out_format = FixedPointFormat{a.out_format.is_signed, a.out_format.frac_bits + 1};
    res.fine.domain = a.domain;
    res.fine.validate();
    res.size_ratio = a.circuit.gate_count() == 0
                         ? static_cast<double>(res.fine.circuit.gate_count())
                         : static_cast<double>(res.fine.circuit.gate_count()) / a.circuit.gate_count();
    return res;
}

/// Supplier of grid-accurate circuits for a target function: the decoded
/// values at level-M grid points match the target within the stated error.
class GridApproximator {
public:
    virtual ~GridApproximator() = default;
    virtual TetrakisFunction at_level(int M, double grid_err) const = 0;
    virtual std::vector<double> target(const std::vector<double>& x) const = 0;
    virtual const DomainRect& domain() const = 0;
    virtual int out_dim() const = 0;
};

/// Exhaustive lookup-table supplier; the workhorse for tests and probes.
class LookupGridApproximator : public GridApproximator {
public:
    /// With quantize_values set, grid values are rounded to multiples of the
    /// requested grid error, so the supplier sits exactly at its contract.
    LookupGridApproximator(std::function<std::vector<double>(const std::vector<double>&)> f,
                           DomainRect dom, int out_dim, bool signed_out, int padding_gates = 0,
                           bool quantize_values = false)
        : f_(std::move(f)), dom_(std::move(dom)), out_dim_(out_dim), signed_(signed_out),
          padding_(padding_gates), quantize_(quantize_values) {}

    TetrakisFunction at_level(int M, double grid_err) const override {
        int d = dom_.dim();
        int cb = M + 1;
        int in_bits = d * cb;
        if (in_bits > 22) throw std::invalid_argument("lookup supplier: grid too deep");
        // Enough fraction bits that rounding is well below the grid error.
        int frac = std::max(2, static_cast<int>(std::ceil(-std::log2(std::max(grid_err, 1e-12)))) + 2);
        frac = std::min(frac, 40);
        FixedPointFormat fmt{signed_, frac};
        size_t rows = size_t(1) << in_bits;
        std::vector<std::vector<bool>> tables(out_dim_ * fmt.width(),
                                              std::vector<bool>(rows, false));
        std::vector<double> x(d);
        int64_t top = int64_t(1) << M;
        for (size_t row = 0; row < rows; ++row) {
            bool valid = true;
            for (int i = 0; i < d && valid; ++i) {
                uint64_t c = (row >> ((d - 1 - i) * cb)) & ((uint64_t(1) << cb) - 1);
                if (c > static_cast<uint64_t>(top)) valid = false;
                else x[i] = dom_.lo[i] + dom_.width[i] * static_cast<double>(c) / static_cast<double>(top);
            }
            if (!valid) continue;
            auto val = f_(x);
            for (int o = 0; o < out_dim_; ++o) {
                double v = val[o];
                if (quantize_) v = std::round(v / grid_err) * grid_err;
                auto bits = fmt.encode(v);
                for (int m = 0; m < fmt.width(); ++m) tables[o * fmt.width() + m][row] = bits[m];
            }
        }
        TetrakisFunction tk;
        tk.circuit = build_lookup(tables, in_bits);
        for (int p = 0; p < padding_; ++p) tk.circuit.add(GateKind::Const0);
        tk.M = M;
        tk.in_dim = d;
        tk.out_dim = out_dim_;
        tk.out_format = fmt;
        tk.domain = dom_;
        tk.validate();
        return tk;
    }

    std::vector<double> target(const std::vector<double>& x) const override { return f_(x); }
    const DomainRect& domain() const override { return dom_; }
    int out_dim() const override { return out_dim_; }

private:
    std::function<std::vector<double>(const std::vector<double>&)> f_;
    DomainRect dom_;
    int out_dim_;
    bool signed_;
    int padding_;
    bool quantize_;
};

struct TelescopicTerm {
    double scale = 0.0;  // 2^{-k+3}
    int k = 0;
    TetrakisFunction tk;
};

struct TelescopicResult {
    std::vector<TelescopicTerm> terms;
    std::vector<double> term_sup;      // measured sup norm of scale * term_k
    std::vector<double> partial_sup_err;  // measured sup |f - partial sum|
};

inline double telescopic_eval1(const std::vector<TelescopicTerm>& terms,
                               const std::vector<double>& x, int out = 0) {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.scale * tk_eval(t.tk, x)[out];
    return acc;
}

/// Multi-scale decomposition of a target into Tetrakis terms: per level k the
/// supplier's circuit A_k is differenced against the re-gridded A_{k-1} and
/// rescaled by 2^{k-3}, so partial sums telescope to the finest approximation.
inline TelescopicResult telescopic_decompose(const GridApproximator& family, double holder_norm_est,
                                             int K, double alpha, int k_min = 0,
                                             int check_samples = 2000, uint64_t check_seed = 7) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0,1]");
    if (K < k_min) throw std::invalid_argument("K < k_min");
    const DomainRect& dom = family.domain();
    int d = dom.dim();

    auto level_of = [&](int k) {
        double m = std::log2(std::max(holder_norm_est, 1e-12)) / alpha + 0.5 * std::log2(double(d)) +
                   double(k) / alpha;
        return std::max(0, static_cast<int>(std::ceil(m - 1e-12)));
    };

    TelescopicResult res;
    TetrakisFunction prev;  // A_{k-1}
    bool have_prev = false;

    Rng rng(check_seed);
    std::vector<std::vector<double>> sample;
    for (int i = 0; i < check_samples; ++i) {
        std::vector<double> x(d);
        for (int j = 0; j < d; ++j) x[j] = dom.lo[j] + dom.width[j] * rng.uniform();
        sample.push_back(std::move(x));
    }

    for (int k = k_min; k <= K; ++k) {
        int M = level_of(k);
        TetrakisFunction ak = family.at_level(M, std::ldexp(1.0, -k));
        // Contract check on grid-snapped samples.
        {
            auto dec_tol = ak.out_format.resolution();
            for (int i = 0; i < std::min(check_samples, 256); ++i) {
                std::vector<int64_t> v(d);
                std::vector<double> xg(d);
                int64_t top = ak.grid_top();
                for (int j = 0; j < d; ++j) {
                    double u = (sample[i][j] - dom.lo[j]) / dom.width[j] * double(top);
                    v[j] = std::min<int64_t>(top, std::max<int64_t>(0, llround(u)));
                    xg[j] = dom.lo[j] + dom.width[j] * double(v[j]) / double(top);
                }
                auto got = tk_grid_value(ak, v);
                auto want = family.target(xg);
                for (int o = 0; o < family.out_dim(); ++o)
                    if (std::abs(got[o] - want[o]) > std::ldexp(1.0, -k) + dec_tol + 1e-9)
                        throw ContractViolation(
                            "grid approximator missed its accuracy contract at level " +
                            std::to_string(M));
            }
        }

        TetrakisFunction bk;  // A_{k-1} lifted to level M
        bool have_b = false;
        if (have_prev) {
            bk = prev;
            while (bk.M < M) bk = coarsen(bk).fine;
            if (bk.M != M) throw std::logic_error("level schedule must be nondecreasing");
            have_b = true;
        }

        // Difference circuit, rescaled by 2^{k-3}.
        CircuitBuilder b(ak.circuit.num_inputs);
        std::vector<int> in(ak.circuit.num_inputs);
        for (size_t i = 0; i < in.size(); ++i) in[i] = static_cast<int>(i);
        std::vector<int> oa = b.append(ak.circuit, in);
        std::vector<int> ob;
        if (have_b) ob = b.append(bk.circuit, in);

        int wa = ak.out_format.width();
        int wb = have_b ? bk.out_format.width() : 0;
        int frac_a = ak.out_format.frac_bits;
        int frac_b = have_b ? bk.out_format.frac_bits : frac_a;
        int frac = std::max(frac_a, frac_b);
        std::vector<int> outputs;
        int out_frac = 0;
        for (int o = 0; o < family.out_dim(); ++o) {
            int sa = ak.out_format.is_signed ? oa[o * wa] : b.const0();
            Word ma;
            for (int m = 0; m < frac_a; ++m) ma.push_back(oa[o * wa + (ak.out_format.is_signed ? 1 : 0) + m]);
            while (static_cast<int>(ma.size()) < frac) ma.push_back(b.const0());
            int sign;
            Word mag;
            if (have_b) {
                int sb = bk.out_format.is_signed ? ob[o * wb] : b.const0();
                Word mb;
                for (int m = 0; m < frac_b; ++m)
                    mb.push_back(ob[o * wb + (bk.out_format.is_signed ? 1 : 0) + m]);
                while (static_cast<int>(mb.size()) < frac) mb.push_back(b.const0());
                auto sm = b.add_s(sa, ma, b.not_(sb), mb);  // a - b
                sign = sm.first;
                mag = sm.second;  // frac+1 bits, MSB weight 1 (carry)
            } else {
                sign = sa;
                mag = ma;
                mag.insert(mag.begin(), b.const0());
            }
            // mag bits have weights 2^0 (carry), 2^-1, ..., 2^-frac. Scaling
            // by 2^{k-3} shifts the weights; bits pushed above weight 1/2 are
            // provably zero (the summand bound) and are dropped.
            int shift = k - 3;
            Word scaled;
            if (shift >= 0) {
                if (shift + 1 > static_cast<int>(mag.size())) {
                    scaled = Word{b.const0()};
                } else {
                    scaled = Word(mag.begin() + (shift + 1), mag.end());
                }
            } else {
                scaled = mag;  // carry bit becomes a fraction bit
                for (int t = 0; t < -shift - 1; ++t) scaled.insert(scaled.begin(), b.const0());
            }
            out_frac = static_cast<int>(scaled.size());
            outputs.push_back(sign);
            outputs.insert(outputs.end(), scaled.begin(), scaled.end());
        }

        TelescopicTerm term;
        term.k = k;
        term.scale = std::ldexp(1.0, -k + 3);
        term.tk.circuit = b.take(outputs);
        term.tk.M = M;
        term.tk.in_dim = d;
        term.tk.out_dim = family.out_dim();
        term.tk.out_format = FixedPointFormat{true, out_frac};
        term.tk.domain = dom;
        term.tk.validate();
        res.terms.push_back(std::move(term));

        prev = std::move(ak);
        have_prev = true;

        // Measure the term's sup norm and the partial-sum error.
        double term_sup = 0.0, part_err = 0.0;
        auto vals = tk_eval_many(res.terms.back().tk, sample);
        for (int i = 0; i < check_samples; ++i) {
            term_sup = std::max(term_sup, res.terms.back().scale * std::abs(vals[i][0]));
        }
        for (int i = 0; i < std::min(check_samples, 512); ++i) {
            double fx = family.target(sample[i])[0];
            part_err = std::max(part_err, std::abs(fx - telescopic_eval1(res.terms, sample[i])));
        }
        res.term_sup.push_back(term_sup);
        res.partial_sup_err.push_back(part_err);
    }
    return res;
}

inline nlohmann::ordered_json tetrakis_to_json(const TetrakisFunction& tk) {
    nlohmann::ordered_json j;
    j["circuit"] = circuit_to_json(tk.circuit);
    j["M"] = tk.M;
    j["in_dim"] = tk.in_dim;
    j["out_dim"] = tk.out_dim;
    j["format"] = format_to_json(tk.out_format);
    j["domain"] = domain_to_json(tk.domain);
    return j;
}

inline TetrakisFunction tetrakis_from_json(const nlohmann::json& j) {
    TetrakisFunction tk;
    tk.circuit = circuit_from_json(j.at("circuit"));
    tk.M = j.at("M").get<int>();
    tk.in_dim = j.at("in_dim").get<int>();
    tk.out_dim = j.at("out_dim").get<int>();
    tk.out_format = format_from_json(j.at("format"));
    tk.domain = domain_from_json(j.at("domain"));
    tk.validate();
    return tk;
}

}  // namespace htmc
