#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "resnet.hpp"
#include "resnet_bounds.hpp"

namespace htmc {

struct MergedParallel {
    ResNet net;
    std::vector<Eigen::VectorXd> composite_D;  // feasible diagonals for the merged net
    std::vector<double> mix;                   // per-boundary mixing weight a_l
};

namespace detail {

inline ResLayer padded_layer(const ResNet& net, int l) {
    if (l < net.depth()) return net.layers[l];
    ResLayer z;
    z.W = SpMat(net.d, 0);
    z.V = SpMatR(0, net.d + 1);
    return z;
}

inline double layer_term(const ResNet& net, const ComplexityReport& rep, int l) {
    if (l < 1 || l > net.depth()) return 0.0;
    return rep.layer_terms[l - 1];
}

inline Eigen::VectorXd boundary_D(const ComplexityReport& rep, int l) {
    int top = static_cast<int>(rep.D.size()) - 1;
    return rep.D[std::min(l, top)];
}

}  // namespace detail

/// Side-by-side composition: block-diagonal hidden state over a shared bias
/// channel, outputs summed. The composite diagonals mix the parts' diagonals
/// with the per-boundary weight that makes the layer terms subadditive.
inline MergedParallel parallel_merge(const ResNet& a, const ResNet& b,
                                     const ComplexityReport& ra, const ComplexityReport& rb) {
    a.validate();
    b.validate();
    if (a.d_in != b.d_in || a.d_out != b.d_out)
        throw std::invalid_argument("parallel_merge: input/output dims must match");
    if (!(a.domain == b.domain)) throw std::invalid_argument("parallel_merge: domains must match");

    int L = std::max(a.depth(), b.depth());
    int da = a.d, db = b.d, d = da + db;
    MergedParallel out;
    ResNet& m = out.net;
    m.d_in = a.d_in;
    m.d = d;
    m.d_out = a.d_out;
    m.domain = a.domain;
    m.W_in = Eigen::MatrixXd(d, a.d_in);
    m.W_in << a.W_in, b.W_in;

    for (int l = 0; l < L; ++l) {
        ResLayer la = detail::padded_layer(a, l);
        ResLayer lb = detail::padded_layer(b, l);
        Eigen::Index wa = la.W.cols(), wb = lb.W.cols();
        ResLayer ml;
        std::vector<Eigen::Triplet<double>> tw, tv;
        for (int n = 0; n < la.W.outerSize(); ++n)
            for (SpMat::InnerIterator it(la.W, n); it; ++it)
                tw.emplace_back(it.row(), it.col(), it.value());
        for (int n = 0; n < lb.W.outerSize(); ++n)
            for (SpMat::InnerIterator it(lb.W, n); it; ++it)
                tw.emplace_back(da + it.row(), wa + it.col(), it.value());
        for (int n = 0; n < la.V.outerSize(); ++n)
            for (SpMatR::InnerIterator it(la.V, n); it; ++it)
                tv.emplace_back(it.row(), it.col() == da ? d : it.col(), it.value());
        for (int n = 0; n < lb.V.outerSize(); ++n)
            for (SpMatR::InnerIterator it(lb.V, n); it; ++it)
                tv.emplace_back(wa + it.row(), it.col() == db ? d : da + it.col(), it.value());
        ml.W = SpMat(d, wa + wb);
        ml.W.setFromTriplets(tw.begin(), tw.end());
        ml.V = SpMatR(wa + wb, d + 1);
        ml.V.setFromTriplets(tv.begin(), tv.end());
        m.layers.push_back(std::move(ml));
    }

    m.W_out = Eigen::MatrixXd(a.d_out, d + 1);
    m.W_out.leftCols(da) = a.W_out.leftCols(da);
    m.W_out.middleCols(da, db) = b.W_out.leftCols(db);
    m.W_out.rightCols(1) = a.W_out.rightCols(1) + b.W_out.rightCols(1);
    m.validate();

    // Composite diagonals: boundary l mixes E_l and F_l with weight a_l
    // minimizing x/sqrt(a) + y/sqrt(1-a); the minimum value is
    // (x^{2/3} + y^{2/3})^{3/2}.
    for (int l = 0; l <= L; ++l) {
        double x = (l == 0) ? ra.in_term : detail::layer_term(a, ra, l);
        double y = (l == 0) ? rb.in_term : detail::layer_term(b, rb, l);
        double mix;
        if (x <= 0 && y <= 0) mix = 0.5;
        else {
            double x23 = std::pow(std::max(x, 0.0), 2.0 / 3.0);
            double y23 = std::pow(std::max(y, 0.0), 2.0 / 3.0);
            mix = x23 / (x23 + y23);
        }
        mix = std::min(1.0 - 1e-12, std::max(1e-12, mix));
        Eigen::VectorXd D(d);
        D.head(da) = detail::boundary_D(ra, l) / std::sqrt(mix);
        D.tail(db) = detail::boundary_D(rb, l) / std::sqrt(1.0 - mix);
        out.composite_D.push_back(D);
        out.mix.push_back(mix);
    }
    return out;
}

/// Sequential composition f(g(x)). The junction loads f's input channels from
/// g's outputs with paired relu(t) - relu(-t) neurons.
inline ResNet compose_nets(const ResNet& f, const ResNet& g) {
    f.validate();
    g.validate();
    if (f.d_in != g.d_out)
        throw std::invalid_argument("compose_nets: f expects " + std::to_string(f.d_in) +
                                    " inputs, g produces " + std::to_string(g.d_out));
    int dg = g.d, df = f.d, d = dg + df;
    ResNet m;
    m.d_in = g.d_in;
    m.d = d;
    m.d_out = f.d_out;
    m.domain = g.domain;
    m.W_in = Eigen::MatrixXd::Zero(d, g.d_in);
    m.W_in.topRows(dg) = g.W_in;

    for (const auto& lg : g.layers) {
        Eigen::Index w = lg.W.cols();
        ResLayer ml;
        std::vector<Eigen::Triplet<double>> tw, tv;
        for (int n = 0; n < lg.W.outerSize(); ++n)
            for (SpMat::InnerIterator it(lg.W, n); it; ++it)
                tw.emplace_back(it.row(), it.col(), it.value());
        for (int n = 0; n < lg.V.outerSize(); ++n)
            for (SpMatR::InnerIterator it(lg.V, n); it; ++it)
                tv.emplace_back(it.row(), it.col() == dg ? d : it.col(), it.value());
        ml.W = SpMat(d, w);
        ml.W.setFromTriplets(tw.begin(), tw.end());
        ml.V = SpMatR(w, d + 1);
        ml.V.setFromTriplets(tv.begin(), tv.end());
        m.layers.push_back(std::move(ml));
    }

    // Junction: T = W_in_f W_out_g maps (g channels, bias) to f's entry state.
    Eigen::MatrixXd T = f.W_in * g.W_out;  // df x (dg+1)
    {
        ResLayer junction;
        std::vector<Eigen::Triplet<double>> tw, tv;
        for (int r = 0; r < df; ++r) {
            tw.emplace_back(dg + r, 2 * r, 1.0);
            tw.emplace_back(dg + r, 2 * r + 1, -1.0);
            for (int c = 0; c < dg; ++c)
                if (T(r, c) != 0.0) {
                    tv.emplace_back(2 * r, c, T(r, c));
                    tv.emplace_back(2 * r + 1, c, -T(r, c));
                }
            if (T(r, dg) != 0.0) {
                tv.emplace_back(2 * r, d, T(r, dg));
                tv.emplace_back(2 * r + 1, d, -T(r, dg));
            }
        }
        junction.W = SpMat(d, 2 * df);
        junction.W.setFromTriplets(tw.begin(), tw.end());
        junction.V = SpMatR(2 * df, d + 1);
        junction.V.setFromTriplets(tv.begin(), tv.end());
        m.layers.push_back(std::move(junction));
    }

    for (const auto& lf : f.layers) {
        Eigen::Index w = lf.W.cols();
        ResLayer ml;
        std::vector<Eigen::Triplet<double>> tw, tv;
        for (int n = 0; n < lf.W.outerSize(); ++n)
            for (SpMat::InnerIterator it(lf.W, n); it; ++it)
                tw.emplace_back(dg + it.row(), it.col(), it.value());
        for (int n = 0; n < lf.V.outerSize(); ++n)
            for (SpMatR::InnerIterator it(lf.V, n); it; ++it)
                tv.emplace_back(it.row(), it.col() == df ? d : dg + it.col(), it.value());
        ml.W = SpMat(d, w);
        ml.W.setFromTriplets(tw.begin(), tw.end());
        ml.V = SpMatR(w, d + 1);
        ml.V.setFromTriplets(tv.begin(), tv.end());
        m.layers.push_back(std::move(ml));
    }

    m.W_out = Eigen::MatrixXd::Zero(f.d_out, d + 1);
    m.W_out.middleCols(dg, df) = f.W_out.leftCols(df);
    m.W_out.rightCols(1) = f.W_out.rightCols(1);
    m.validate();
    return m;
}

}  // namespace htmc
