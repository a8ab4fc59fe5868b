#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "domain.hpp"

namespace htmc {

using SpMat = Eigen::SparseMatrix<double>;                       // column-major
using SpMatR = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ResLayer {
    SpMat W;    // d x w, column per neuron
    SpMatR V;   // w x (d+1), row per neuron; last column reads the bias channel

    static ResLayer from_dense(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V) {
        ResLayer l;
        l.W = W.sparseView();
        l.V = V.sparseView();
        return l;
    }
};

/// Residual network with a pinned bias channel: alpha_0 = (W_in x, 1),
/// alpha_l = alpha_{l-1} + (W_l relu(V_l alpha_{l-1}), 0), f = W_out alpha_L.
/// Layer weights are stored sparse; serialization is dense row-major.
struct ResNet {
    int d_in = 0;
    int d = 0;      // hidden dimension (bias channel excluded)
    int d_out = 0;
    Eigen::MatrixXd W_in;   // d x d_in
    std::vector<ResLayer> layers;
    Eigen::MatrixXd W_out;  // d_out x (d+1)
    DomainRect domain;

    int depth() const { return static_cast<int>(layers.size()); }
    int max_width() const {
        int w = 0;
        for (const auto& l : layers) w = std::max(w, static_cast<int>(l.W.cols()));
        return w;
    }

    void validate() const {
        domain.validate();
        if (domain.dim() != d_in) throw std::invalid_argument("resnet: domain dimension mismatch");
        if (W_in.rows() != d || W_in.cols() != d_in)
            throw std::invalid_argument("resnet: W_in must be d x d_in");
        for (const auto& l : layers) {
            if (l.W.rows() != d || l.V.cols() != d + 1 || l.W.cols() != l.V.rows())
                throw std::invalid_argument("resnet: layer shapes inconsistent");
        }
        if (W_out.rows() != d_out || W_out.cols() != d + 1)
            throw std::invalid_argument("resnet: W_out must be d_out x (d+1)");
    }

    /// Stored parameters: dense W_in/W_out entries plus layer nonzeros.
    size_t param_count() const {
        size_t n = W_in.size() + W_out.size();
        for (const auto& l : layers) n += l.W.nonZeros() + l.V.nonZeros();
        return n;
    }
};

inline Eigen::VectorXd relu(const Eigen::VectorXd& z) { return z.cwiseMax(0.0); }

inline Eigen::VectorXd resnet_state0(const ResNet& net, const Eigen::VectorXd& x) {
    if (x.size() != net.d_in) throw std::invalid_argument("forward: input dimension mismatch");
    Eigen::VectorXd a(net.d + 1);
    a.head(net.d) = net.W_in * x;
    a(net.d) = 1.0;
    return a;
}

inline Eigen::VectorXd forward(const ResNet& net, const Eigen::VectorXd& x) {
    Eigen::VectorXd a = resnet_state0(net, x);
    for (const auto& l : net.layers) {
        Eigen::VectorXd z = l.V * a;
        a.head(net.d) += l.W * relu(z);
    }
    return net.W_out * a;
}

struct ForwardTrace {
    std::vector<Eigen::VectorXd> activations;     // alpha_0 .. alpha_L
    std::vector<Eigen::VectorXd> preactivations;  // z_1 .. z_L
    Eigen::VectorXd output;
};

inline ForwardTrace forward_trace(const ResNet& net, const Eigen::VectorXd& x) {
    ForwardTrace t;
    Eigen::VectorXd a = resnet_state0(net, x);
    t.activations.push_back(a);
    for (const auto& l : net.layers) {
        Eigen::VectorXd z = l.V * a;
        t.preactivations.push_back(z);
        a.head(net.d) += l.W * relu(z);
        t.activations.push_back(a);
    }
    t.output = net.W_out * a;
    return t;
}

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

template <typename Sparse>
nlohmann::ordered_json sparse_to_json(const Sparse& s) {
    return matrix_to_json(Eigen::MatrixXd(s));
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                                        Eigen::Index cols) {
    if (static_cast<Eigen::Index>(j.size()) != rows)
        throw std::invalid_argument("matrix row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(r);
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw std::invalid_argument("matrix column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
}

}  // namespace detail

inline nlohmann::ordered_json resnet_to_json(const ResNet& net) {
    nlohmann::ordered_json j;
    j["d_in"] = net.d_in;
    j["d"] = net.d;
    j["w"] = net.max_width();
    j["L"] = net.depth();
    j["d_out"] = net.d_out;
    j["domain"] = domain_to_json(net.domain);
    j["W_in"] = detail::matrix_to_json(net.W_in);
    j["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : net.layers)
        j["layers"].push_back(nlohmann::ordered_json{{"W", detail::sparse_to_json(l.W)},
                                                     {"V", detail::sparse_to_json(l.V)}});
    j["W_out"] = detail::matrix_to_json(net.W_out);
    return j;
}

inline ResNet resnet_from_json(const nlohmann::json& j) {
    ResNet net;
    net.d_in = j.at("d_in").get<int>();
    net.d = j.at("d").get<int>();
    net.d_out = j.at("d_out").get<int>();
    net.domain = domain_from_json(j.at("domain"));
    net.W_in = detail::matrix_from_json(j.at("W_in"), net.d, net.d_in);
    for (const auto& jl : j.at("layers")) {
        Eigen::Index w = jl.at("V").size();
        Eigen::MatrixXd W = detail::matrix_from_json(jl.at("W"), net.d, w);
        Eigen::MatrixXd V = detail::matrix_from_json(jl.at("V"), w, net.d + 1);
        net.layers.push_back(ResLayer::from_dense(W, V));
    }
    net.W_out = detail::matrix_from_json(j.at("W_out"), net.d_out, net.d + 1);
    net.validate();
    return net;
}

}  // namespace htmc
