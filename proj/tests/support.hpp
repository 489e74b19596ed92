#pragma once

#include "ndlab/fem.hpp"
#include "ndlab/geometry.hpp"
#include "ndlab/mesh.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace ndlab::testing {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

/// Unit cube [0,1]^3 with optional plane interfaces and a Sigma disc on the bottom face.
inline LayeredDomain unit_cube(std::vector<double> planes = {}, double sigma_radius = 0.4) {
    DomainDescription d;
    d.lower = vec({0.0, 0.0});
    d.upper = vec({1.0, 1.0});
    d.top = 1.0;
    d.boundary = InterfaceGraph::plane(0.0, 2.0);
    for (double z : planes) d.interfaces.push_back(InterfaceGraph::plane(z, 2.0));
    d.sigma = {vec({0.5, 0.5}), sigma_radius};
    return build_layered_domain(d);
}

inline Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Random SPD tensor with eigenvalues log-uniform in [lo, hi].
inline SymTensor random_spd(std::mt19937_64& rng, int n, double lo = 0.1, double hi = 10.0) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(std::log(lo), std::log(hi));
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd ev(n);
    for (int i = 0; i < n; ++i) ev[i] = std::exp(unit(rng));
    Eigen::MatrixXd s = q * ev.asDiagonal() * q.transpose();
    s = 0.5 * (s + s.transpose());
    return SymTensor(s);
}

/// Two-layer reference: paraboloid accessible boundary over [-1, 1]^2, flat
/// interface at 0.6, top at 1.3, Sigma disc of radius 0.7.
inline LayeredDomain reference_two_layer() {
    DomainDescription d;
    d.lower = vec({-1.0, -1.0});
    d.upper = vec({1.0, 1.0});
    d.top = 1.3;
    d.boundary = InterfaceGraph::paraboloid(0.0, 0.15, 1.5);
    d.interfaces = {InterfaceGraph::plane(0.6, 1.5)};
    d.sigma = {vec({0.0, 0.0}), 0.95};
    return build_layered_domain(d);
}

/// sigma_1 = I, sigma_2 = diag(2, 2, 0.5) rotated 30 degrees about e_1, q = (0.2, 1.0).
inline CoefficientField reference_two_layer_truth() {
    const Eigen::Matrix3d r = rotation_about(Eigen::Vector3d::UnitX(), std::acos(-1.0) / 6.0);
    const Eigen::Matrix3d s2 = r * Eigen::Vector3d(2.0, 2.0, 0.5).asDiagonal() * r.transpose();
    return CoefficientField({{SymTensor::identity(3), 0.2}, {SymTensor(s2), 1.0}}, 10.0);
}

} // namespace ndlab::testing
