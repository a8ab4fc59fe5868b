#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <vector>

#include "resnet.hpp"
#include "rng.hpp"

namespace htmc {

/// Optional certificates supplied by a network builder: a tighter
/// sup-coordinate Lipschitz gain per layer, and per-boundary certified
/// activation ranges (both backed by the construction, verified in tests).
struct NetHints {
    std::vector<double> layer_linf_gain;                 // size L, or empty
    std::vector<std::vector<double>> channel_abs_bound;  // size L+1 x d, or empty

    bool has_gains() const { return !layer_linf_gain.empty(); }
    bool has_ranges() const { return !channel_abs_bound.empty(); }
};

namespace detail {

struct ChannelUpdate {
    enum Kind { Linear, Min, Max, Generic };
    int channel = -1;
    Kind kind = Generic;
    Eigen::VectorXd q;  // d+1 coefficients, includes the residual passthrough e_c
    Eigen::VectorXd w;  // second linear form for Min/Max
    std::vector<std::pair<double, Eigen::VectorXd>> extras;  // Generic: (coef, V row)
    double linf_gain = 1.0;
};

struct LayerAnalysis {
    std::vector<ChannelUpdate> updates;
    double linf_gain = 1.0;
};

inline Eigen::VectorXd v_row_dense(const SpMatR& V, int n) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(V.cols());
    for (SpMatR::InnerIterator it(V, n); it; ++it) r(it.col()) = it.value();
    return r;
}

inline bool v_rows_negated(const SpMatR& V, int i, int j) {
    SpMatR::InnerIterator a(V, i), b(V, j);
    while (a && b) {
        if (a.col() != b.col() || a.value() != -b.value()) return false;
        ++a;
        ++b;
    }
    return !a && !b;
}

/// Rewrite each written channel's update. Identity pairs c*(relu(t)-relu(-t))
/// fold into the linear part; a single remaining neuron makes the channel an
/// exact min or max of two linear forms.
inline LayerAnalysis analyze_layer(const ResNet& net, int l) {
    const ResLayer& layer = net.layers[l];
    int d = net.d;
    int w = static_cast<int>(layer.W.cols());
    LayerAnalysis out;

    std::vector<std::vector<std::pair<int, double>>> by_channel(d);
    for (int n = 0; n < w; ++n)
        for (SpMat::InnerIterator it(layer.W, n); it; ++it)
            if (it.value() != 0.0) by_channel[it.row()].push_back({n, it.value()});

    for (int c = 0; c < d; ++c) {
        if (by_channel[c].empty()) continue;
        ChannelUpdate u;
        u.channel = c;
        u.q = Eigen::VectorXd::Zero(d + 1);
        u.q(c) = 1.0;
        auto& neurons = by_channel[c];
        std::vector<bool> used(neurons.size(), false);
        for (size_t i = 0; i < neurons.size(); ++i) {
            if (used[i]) continue;
            for (size_t j = i + 1; j < neurons.size(); ++j) {
                if (used[j]) continue;
                if (neurons[j].second == -neurons[i].second &&
                    v_rows_negated(layer.V, neurons[i].first, neurons[j].first)) {
                    for (SpMatR::InnerIterator it(layer.V, neurons[i].first); it; ++it)
                        u.q(it.col()) += neurons[i].second * it.value();
                    used[i] = used[j] = true;
                    break;
                }
            }
        }
        for (size_t i = 0; i < neurons.size(); ++i)
            if (!used[i]) u.extras.push_back({neurons[i].second, v_row_dense(layer.V, neurons[i].first)});

        if (u.extras.empty()) {
            u.kind = ChannelUpdate::Linear;
            u.linf_gain = u.q.head(d).cwiseAbs().sum();
        } else if (u.extras.size() == 1) {
            double a = u.extras[0].first;
            const Eigen::VectorXd& r = u.extras[0].second;
            u.w = u.q + a * r;  // q + a*relu(r.a) = min/max(q.a, (q+a r).a)
            u.kind = a < 0 ? ChannelUpdate::Min : ChannelUpdate::Max;
            u.extras.clear();
            u.linf_gain = std::max(u.q.head(d).cwiseAbs().sum(), u.w.head(d).cwiseAbs().sum());
        } else {
            u.kind = ChannelUpdate::Generic;
            u.linf_gain = u.q.head(d).cwiseAbs().sum();
            for (const auto& [a, r] : u.extras) u.linf_gain += std::abs(a) * r.head(d).cwiseAbs().sum();
        }
        out.updates.push_back(std::move(u));
    }
    out.linf_gain = 1.0;
    for (const auto& u : out.updates) out.linf_gain = std::max(out.linf_gain, u.linf_gain);
    return out;
}

struct Interval {
    double lo = 0.0, hi = 0.0;
    Interval() = default;
    Interval(double l, double h) : lo(l), hi(h) {}
    Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
    Interval scaled(double s) const { return s >= 0 ? Interval{lo * s, hi * s} : Interval{hi * s, lo * s}; }
    Interval relu() const { return {std::max(lo, 0.0), std::max(hi, 0.0)}; }
    static Interval meet_min(const Interval& a, const Interval& b) {
        return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
    }
    static Interval meet_max(const Interval& a, const Interval& b) {
        return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
    }
};

}  // namespace detail

struct ActivationBounds {
    // Per boundary 0..L: certified per-channel ranges of alpha (d entries; the
    // bias channel is identically 1).
    std::vector<Eigen::VectorXd> lo, hi;

    /// C_l diagonal (d+1 entries, bias entry 1).
    Eigen::VectorXd C(int l) const {
        int d = static_cast<int>(lo[l].size());
        Eigen::VectorXd c(d + 1);
        for (int i = 0; i < d; ++i) c(i) = std::max(std::abs(lo[l](i)), std::abs(hi[l](i)));
        c(d) = 1.0;
        return c;
    }
};

/// Certified activation ranges by interval propagation with exact handling
/// of linear and single-ReLU (min/max) channel updates.
inline ActivationBounds activation_bounds(const ResNet& net, const NetHints* hints = nullptr) {
    using detail::Interval;
    int d = net.d;
    std::vector<Interval> a(d + 1);
    for (int i = 0; i < d; ++i) {
        Interval acc(0.0, 0.0);
        for (int j = 0; j < net.d_in; ++j) {
            Interval xj(net.domain.lo[j], net.domain.lo[j] + net.domain.width[j]);
            acc = acc + xj.scaled(net.W_in(i, j));
        }
        a[i] = acc;
    }
    a[d] = Interval(1.0, 1.0);

    ActivationBounds out;
    auto push = [&](int boundary) {
        Eigen::VectorXd lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            lo(i) = a[i].lo;
            hi(i) = a[i].hi;
        }
        if (hints && hints->has_ranges() && !hints->channel_abs_bound[boundary].empty())
            for (int i = 0; i < d; ++i) {
                double b = hints->channel_abs_bound[boundary][i];
                if (b >= 0) {
                    lo(i) = std::max(lo(i), -b);
                    hi(i) = std::min(hi(i), b);
                    a[i] = Interval(lo(i), hi(i));
                }
            }
        out.lo.push_back(lo);
        out.hi.push_back(hi);
    };
    push(0);

    auto linear_interval = [&](const Eigen::VectorXd& q) {
        Interval acc(0.0, 0.0);
        for (int i = 0; i <= d; ++i)
            if (q(i) != 0.0) acc = acc + a[i].scaled(q(i));
        return acc;
    };

    for (int l = 0; l < net.depth(); ++l) {
        auto analysis = detail::analyze_layer(net, l);
        std::vector<std::pair<int, Interval>> next;
        for (const auto& u : analysis.updates) {
            Interval v;
            switch (u.kind) {
                case detail::ChannelUpdate::Linear: v = linear_interval(u.q); break;
                case detail::ChannelUpdate::Min:
                    v = Interval::meet_min(linear_interval(u.q), linear_interval(u.w));
                    break;
                case detail::ChannelUpdate::Max:
                    v = Interval::meet_max(linear_interval(u.q), linear_interval(u.w));
                    break;
                case detail::ChannelUpdate::Generic: {
                    v = linear_interval(u.q);
                    for (const auto& [coef, r] : u.extras)
                        v = v + linear_interval(r).relu().scaled(coef);
                    break;
                }
            }
            next.push_back({u.channel, v});
        }
        for (const auto& [c, v] : next) a[c] = v;
        push(l + 1);
    }
    return out;
}

/// Empirical counterpart: per-channel max |alpha| over sampled inputs.
/// Always a lower bound on the true sup, hence below the certified bound.
inline std::vector<Eigen::VectorXd> sampled_activation_bounds(const ResNet& net, int n_samples,
                                                              uint64_t seed) {
    std::vector<Eigen::VectorXd> mx(net.depth() + 1, Eigen::VectorXd::Zero(net.d));
    Rng rng(seed);
    Eigen::VectorXd x(net.d_in);
    for (int s = 0; s < n_samples; ++s) {
        for (int j = 0; j < net.d_in; ++j)
            x(j) = net.domain.lo[j] + net.domain.width[j] * rng.uniform();
        auto trace = forward_trace(net, x);
        for (int l = 0; l <= net.depth(); ++l)
            mx[l] = mx[l].cwiseMax(trace.activations[l].head(net.d).cwiseAbs());
    }
    return mx;
}

struct SensitivityBounds {
    // Interval bounds on d f / d alpha_l (d_out x d), per boundary 0..L.
    std::vector<Eigen::MatrixXd> lo, hi;
    std::vector<double> layer_gain;    // certified sup-coordinate gain per layer
    std::vector<double> suffix_gain;   // per boundary: product of gains above
    double z_out = 0.0;                // l2 norm of W_out row l1-norms

    Eigen::MatrixXd sup(int l) const { return lo[l].cwiseAbs().cwiseMax(hi[l].cwiseAbs()); }
    /// Uniform certified Lip_2(alpha_l -> f) via the sup-norm route.
    double lip_uniform(int l) const { return z_out * suffix_gain[l]; }
};

/// Backward interval Jacobian with the same per-channel rewrites as the
/// forward pass; min/max channels contribute the hull of their two branch
/// gradients instead of the loose |W||V| product.
inline SensitivityBounds sensitivity_bounds(const ResNet& net, const NetHints* hints = nullptr) {
    using detail::Interval;
    int d = net.d, L = net.depth();
    SensitivityBounds out;
    out.lo.assign(L + 1, Eigen::MatrixXd());
    out.hi.assign(L + 1, Eigen::MatrixXd());
    out.layer_gain.assign(L, 1.0);
    out.suffix_gain.assign(L + 1, 1.0);

    Eigen::MatrixXd mlo = net.W_out.leftCols(d);
    Eigen::MatrixXd mhi = mlo;
    out.lo[L] = mlo;
    out.hi[L] = mhi;

    for (int l = L - 1; l >= 0; --l) {
        auto analysis = detail::analyze_layer(net, l);
        double gain = analysis.linf_gain;
        if (hints && hints->has_gains()) gain = std::min(gain, hints->layer_linf_gain[l]);
        out.layer_gain[l] = gain;

        Eigen::MatrixXd nlo = mlo, nhi = mhi;
        for (const auto& u : analysis.updates) {
            nlo.col(u.channel).setZero();
            nhi.col(u.channel).setZero();
        }
        auto add_scaled = [&](int col, int k, const Interval& m, double a, double b) {
            // contribution m * [min(a,b), max(a,b)] to entry (k, col)
            double clo = std::min(a, b), chi = std::max(a, b);
            double products[4] = {m.lo * clo, m.lo * chi, m.hi * clo, m.hi * chi};
            double plo = products[0], phi = products[0];
            for (double p : products) {
                plo = std::min(plo, p);
                phi = std::max(phi, p);
            }
            nlo(k, col) += plo;
            nhi(k, col) += phi;
        };
        for (const auto& u : analysis.updates) {
            for (int k = 0; k < net.d_out; ++k) {
                Interval m(mlo(k, u.channel), mhi(k, u.channel));
                if (m.lo == 0.0 && m.hi == 0.0) continue;
                switch (u.kind) {
                    case detail::ChannelUpdate::Linear:
                        for (int i = 0; i < d; ++i)
                            if (u.q(i) != 0.0) add_scaled(i, k, m, u.q(i), u.q(i));
                        break;
                    case detail::ChannelUpdate::Min:
                    case detail::ChannelUpdate::Max:
                        for (int i = 0; i < d; ++i)
                            if (u.q(i) != 0.0 || u.w(i) != 0.0) add_scaled(i, k, m, u.q(i), u.w(i));
                        break;
                    case detail::ChannelUpdate::Generic:
                        for (int i = 0; i < d; ++i) {
                            if (u.q(i) != 0.0) add_scaled(i, k, m, u.q(i), u.q(i));
                            for (const auto& [coef, r] : u.extras)
                                if (r(i) != 0.0) add_scaled(i, k, m, 0.0, coef * r(i));
                        }
                        break;
                }
            }
        }
        mlo = std::move(nlo);
        mhi = std::move(nhi);
        out.lo[l] = mlo;
        out.hi[l] = mhi;
    }

    for (int l = L - 1; l >= 0; --l) out.suffix_gain[l] = out.suffix_gain[l + 1] * out.layer_gain[l];
    double z = 0.0;
    for (int k = 0; k < net.d_out; ++k) {
        double row = net.W_out.row(k).head(d).cwiseAbs().sum();
        z += row * row;
    }
    out.z_out = std::sqrt(z);
    return out;
}

struct DiagonalCandidates {
    // Two feasible diagonals per boundary, each with a certified
    // Lip((alpha_l -> f) o D^-1) <= 1 in l2 by its own route.
    std::vector<Eigen::VectorXd> interval_D;  // per-coordinate, sigma-rescaled
    std::vector<double> interval_cert;        // sigma(sup|M| D^-1), <= 1 + fp
    std::vector<Eigen::VectorXd> uniform_D;   // lip_uniform * ones
};

inline double spectral_norm(const Eigen::MatrixXd& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

/// Per-coordinate sensitivity sups g_{l,i} and the two diagonal candidates.
inline DiagonalCandidates lipschitz_diagonals(const ResNet& net, const SensitivityBounds& sens) {
    int d = net.d, L = net.depth();
    DiagonalCandidates out;
    for (int l = 0; l <= L; ++l) {
        Eigen::MatrixXd U = sens.sup(l);
        Eigen::VectorXd g(d);
        for (int i = 0; i < d; ++i) g(i) = U.col(i).norm();
        std::vector<int> nz;
        for (int i = 0; i < d; ++i)
            if (g(i) > 0) nz.push_back(i);
        double sigma = 0.0;
        if (!nz.empty()) {
            Eigen::MatrixXd B(net.d_out, nz.size());
            for (size_t c = 0; c < nz.size(); ++c) B.col(c) = U.col(nz[c]) / g(nz[c]);
            sigma = spectral_norm(B);
        }
        Eigen::VectorXd D = g * sigma;
        out.interval_D.push_back(D);
        out.interval_cert.push_back(nz.empty() ? 0.0 : 1.0);
        out.uniform_D.push_back(Eigen::VectorXd::Constant(d, sens.lip_uniform(l)));
    }
    return out;
}

struct ComplexityReport {
    double R = 0.0;
    double R23 = 0.0;  // R^{2/3}
    std::vector<double> layer_terms;  // ||D_l |W_l||V_l| C_{l-1}||_1
    double in_term = 0.0;             // ||D_0 W_in S||_1
    double out_term = 0.0;            // ||W_out C_L||_1
    std::vector<Eigen::VectorXd> D;   // chosen diagonals per boundary
    std::vector<char> mode;           // 'i' interval route, 'u' uniform route
    std::vector<Eigen::VectorXd> C;   // certified C_l diagonals (d+1), per boundary
    double lip_fS_cert = 0.0;         // Lip(f o S) <= ||D_0 W_in S||_1
    bool upper_bound_only = true;     // the D search is heuristic, R is an upper bound
};

inline double weighted_l1(const Eigen::VectorXd& D, const Eigen::MatrixXd& P) {
    // ||diag(D) P||_1 with P entrywise nonnegative
    double s = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) s += D(i) * P.row(i).sum();
    return s;
}

/// Row sums of |W_l| |V_l| diag(C), without materializing the product.
inline Eigen::VectorXd layer_abs_rowsums(const ResLayer& layer, const Eigen::VectorXd& C) {
    Eigen::VectorXd vsum = Eigen::VectorXd::Zero(layer.V.rows());
    for (int n = 0; n < layer.V.rows(); ++n)
        for (SpMatR::InnerIterator it(layer.V, n); it; ++it)
            vsum(n) += std::abs(it.value()) * C(it.col());
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(layer.W.rows());
    for (int n = 0; n < layer.W.outerSize(); ++n)
        for (SpMat::InnerIterator it(layer.W, n); it; ++it)
            rowsum(it.row()) += std::abs(it.value()) * vsum(n);
    return rowsum;
}

/// R(theta) with the constructed feasible diagonals (per boundary, the better
/// of the two certificate routes). Always an upper bound on the true minimum.
inline ComplexityReport complexity_R(const ResNet& net, const NetHints* hints = nullptr) {
    net.validate();
    int d = net.d, L = net.depth();
    ActivationBounds act = activation_bounds(net, hints);
    SensitivityBounds sens = sensitivity_bounds(net, hints);
    DiagonalCandidates cand = lipschitz_diagonals(net, sens);

    ComplexityReport rep;
    for (int l = 0; l <= L; ++l) rep.C.push_back(act.C(l));

    // Layer terms: D_l |W_l||V_l| C_{l-1}.
    double r23 = 0.0;
    rep.D.resize(L + 1);
    rep.mode.resize(L + 1);
    for (int l = 1; l <= L; ++l) {
        Eigen::VectorXd rowsum = layer_abs_rowsums(net.layers[l - 1], rep.C[l - 1]);
        double ti = cand.interval_D[l].dot(rowsum);
        double tu = cand.uniform_D[l].dot(rowsum);
        if (ti <= tu) {
            rep.layer_terms.push_back(ti);
            rep.D[l] = cand.interval_D[l];
            rep.mode[l] = 'i';
        } else {
            rep.layer_terms.push_back(tu);
            rep.D[l] = cand.uniform_D[l];
            rep.mode[l] = 'u';
        }
        r23 += std::pow(rep.layer_terms.back(), 2.0 / 3.0);
    }
    // Input term with D_0.
    Eigen::VectorXd S(net.d_in);
    for (int j = 0; j < net.d_in; ++j) S(j) = net.domain.width[j];
    Eigen::MatrixXd WinS = net.W_in.cwiseAbs() * S.asDiagonal();
    double ii = weighted_l1(cand.interval_D[0], WinS);
    double iu = weighted_l1(cand.uniform_D[0], WinS);
    if (ii <= iu) {
        rep.in_term = ii;
        rep.D[0] = cand.interval_D[0];
        rep.mode[0] = 'i';
    } else {
        rep.in_term = iu;
        rep.D[0] = cand.uniform_D[0];
        rep.mode[0] = 'u';
    }
    r23 += std::pow(rep.in_term, 2.0 / 3.0);
    // Output term.
    rep.out_term = (net.W_out.cwiseAbs() * rep.C[L].asDiagonal()).sum();
    r23 += std::pow(rep.out_term, 2.0 / 3.0);

    rep.R23 = r23;
    rep.R = std::pow(r23, 1.5);
    rep.lip_fS_cert = rep.in_term;
    return rep;
}

/// R evaluated at externally supplied diagonals (e.g. the composite diagonals
/// of a parallel merge). C bounds are recomputed from the net.
inline ComplexityReport complexity_R_with_D(const ResNet& net, const std::vector<Eigen::VectorXd>& D,
                                            const NetHints* hints = nullptr) {
    net.validate();
    int L = net.depth();
    if (static_cast<int>(D.size()) != L + 1)
        throw std::invalid_argument("complexity_R_with_D: need L+1 diagonals");
    ActivationBounds act = activation_bounds(net, hints);
    ComplexityReport rep;
    for (int l = 0; l <= L; ++l) rep.C.push_back(act.C(l));
    double r23 = 0.0;
    for (int l = 1; l <= L; ++l) {
        Eigen::VectorXd rowsum = layer_abs_rowsums(net.layers[l - 1], rep.C[l - 1]);
        rep.layer_terms.push_back(D[l].dot(rowsum));
        r23 += std::pow(rep.layer_terms.back(), 2.0 / 3.0);
    }
    Eigen::VectorXd S(net.d_in);
    for (int j = 0; j < net.d_in; ++j) S(j) = net.domain.width[j];
    rep.in_term = weighted_l1(D[0], net.W_in.cwiseAbs() * S.asDiagonal());
    r23 += std::pow(rep.in_term, 2.0 / 3.0);
    rep.out_term = (net.W_out.cwiseAbs() * rep.C[L].asDiagonal()).sum();
    r23 += std::pow(rep.out_term, 2.0 / 3.0);
    rep.D = D;
    rep.R23 = r23;
    rep.R = std::pow(r23, 1.5);
    rep.lip_fS_cert = rep.in_term;
    return rep;
}

// ---------------------------------------------------------------------------
// Parameter-space machinery: flattening, per-sample gradients, R_lin.
// ---------------------------------------------------------------------------

/// Stored-parameter flattening: W_in entries, then per layer the W and V
/// nonzeros in storage order, then W_out entries. Structural zeros are not
/// parameters.
inline Eigen::VectorXd params_to_vector(const ResNet& net) {
    Eigen::VectorXd v(net.param_count());
    Eigen::Index p = 0;
    auto put = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) v(p++) = m(r, c);
    };
    put(net.W_in);
    for (const auto& l : net.layers) {
        for (Eigen::Index k = 0; k < l.W.nonZeros(); ++k) v(p++) = l.W.valuePtr()[k];
        for (Eigen::Index k = 0; k < l.V.nonZeros(); ++k) v(p++) = l.V.valuePtr()[k];
    }
    put(net.W_out);
    return v;
}

inline void params_from_vector(ResNet& net, const Eigen::VectorXd& v) {
    Eigen::Index p = 0;
    auto get = [&](Eigen::MatrixXd& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = v(p++);
    };
    get(net.W_in);
    for (auto& l : net.layers) {
        for (Eigen::Index k = 0; k < l.W.nonZeros(); ++k) l.W.valuePtr()[k] = v(p++);
        for (Eigen::Index k = 0; k < l.V.nonZeros(); ++k) l.V.valuePtr()[k] = v(p++);
    }
    get(net.W_out);
}

/// d_out x P Jacobian of the output w.r.t. every stored parameter at input x.
inline Eigen::MatrixXd parameter_jacobian(const ResNet& net, const Eigen::VectorXd& x) {
    int d = net.d, L = net.depth();
    auto trace = forward_trace(net, x);
    // G_l = d f / d alpha_l (non-bias part), built backwards.
    std::vector<Eigen::MatrixXd> G(L + 1);
    G[L] = net.W_out.leftCols(d);
    for (int l = L; l >= 1; --l) {
        const ResLayer& layer = net.layers[l - 1];
        const Eigen::VectorXd& z = trace.preactivations[l - 1];
        Eigen::VectorXd s = (z.array() > 0).cast<double>();
        Eigen::MatrixXd GWs = (G[l] * layer.W) * s.asDiagonal();   // d_out x w
        Eigen::MatrixXd ext = GWs * layer.V;                       // d_out x (d+1)
        G[l - 1] = G[l] + ext.leftCols(d);
    }
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(net.d_out, net.param_count());
    Eigen::Index p = 0;
    // W_in entries (dense, row-major order).
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < net.d_in; ++c) J.col(p++) = G[0].col(r) * x(c);
    // Layer nonzeros in storage order.
    for (int l = 1; l <= L; ++l) {
        const ResLayer& layer = net.layers[l - 1];
        const Eigen::VectorXd& z = trace.preactivations[l - 1];
        const Eigen::VectorXd& a_prev = trace.activations[l - 1];
        Eigen::VectorXd sz = relu(z);
        Eigen::VectorXd s = (z.array() > 0).cast<double>();
        for (int n = 0; n < layer.W.outerSize(); ++n)
            for (SpMat::InnerIterator it(layer.W, n); it; ++it)
                J.col(p++) = G[l].col(it.row()) * sz(it.col());
        Eigen::MatrixXd GW = G[l] * layer.W;  // d_out x w
        for (int n = 0; n < layer.V.outerSize(); ++n)
            for (SpMatR::InnerIterator it(layer.V, n); it; ++it)
                J.col(p++) = GW.col(it.row()) * (s(it.row()) * a_prev(it.col()));
    }
    // W_out entries.
    for (int k = 0; k < net.d_out; ++k)
        for (int c = 0; c <= d; ++c) {
            J(k, p) = trace.activations[L](c);
            ++p;
        }
    return J;
}

struct RLinResult {
    double value = 0.0;
    double std_error = 0.0;
    Eigen::VectorXd grad_norms;  // ||d f / d theta_i||_pi estimates
    int samples_used = 0;
};

/// Monte Carlo R_lin = sum_i |theta_i| ||d f/d theta_i||_pi via backprop.
/// Samples landing within `kink_margin` of a ReLU kink are redrawn.
inline RLinResult complexity_R_lin(const ResNet& net, int n_samples, uint64_t seed,
                                   double kink_margin = 1e-12) {
    int d = net.d, L = net.depth();
    size_t P = net.param_count();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(P);
    std::vector<double> batch_rlin;
    Eigen::VectorXd batch_acc = Eigen::VectorXd::Zero(P);
    int batch_size = std::max(1, n_samples / 10);
    Rng rng(seed);
    Eigen::VectorXd theta = params_to_vector(net);

    int used = 0, batch_n = 0;
    std::vector<double> batch_vals;
    while (used < n_samples) {
        Eigen::VectorXd x(net.d_in);
        for (int j = 0; j < net.d_in; ++j)
            x(j) = net.domain.lo[j] + net.domain.width[j] * rng.uniform();
        // Kink margin test.
        auto trace = forward_trace(net, x);
        bool kink = false;
        for (const auto& z : trace.preactivations)
            for (Eigen::Index i = 0; i < z.size(); ++i)
                if (std::abs(z(i)) < kink_margin && z(i) != 0.0) kink = true;
        if (kink) continue;
        Eigen::MatrixXd J = parameter_jacobian(net, x);
        Eigen::VectorXd sq = J.colwise().squaredNorm();
        acc += sq;
        batch_acc += sq;
        ++used;
        ++batch_n;
        if (batch_n == batch_size) {
            Eigen::VectorXd norms = (batch_acc / batch_n).cwiseSqrt();
            batch_vals.push_back(theta.cwiseAbs().dot(norms));
            batch_acc.setZero();
            batch_n = 0;
        }
    }
    (void)d;
    (void)L;
    RLinResult res;
    res.samples_used = used;
    res.grad_norms = (acc / used).cwiseSqrt();
    res.value = theta.cwiseAbs().dot(res.grad_norms);
    if (batch_vals.size() > 1) {
        double mean = 0.0;
        for (double v : batch_vals) mean += v;
        mean /= batch_vals.size();
        double var = 0.0;
        for (double v : batch_vals) var += (v - mean) * (v - mean);
        var /= (batch_vals.size() - 1);
        res.std_error = std::sqrt(var / batch_vals.size());
    }
    return res;
}

}  // namespace htmc
