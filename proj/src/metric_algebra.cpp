#include "ndlab/metric_algebra.hpp"

#include "ndlab/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace ndlab {

SymTensor::SymTensor(const Eigen::MatrixXd& full, double tol) : n_(static_cast<int>(full.rows())) {
    if (full.rows() != full.cols()) raise(ErrorCode::InvalidArgument, "tensor must be square");
    const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
    if ((full - full.transpose()).cwiseAbs().maxCoeff() > tol * scale)
        raise(ErrorCode::InvalidArgument, "tensor is not symmetric");
    upper_.reserve(packed_size(n_));
    for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j) upper_.push_back(i == j ? full(i, i) : 0.5 * (full(i, j) + full(j, i)));
}

SymTensor SymTensor::from_upper(int n, std::span<const double> packed) {
    if (packed.size() != packed_size(n)) raise(ErrorCode::InvalidArgument, "packed tensor has the wrong length");
    SymTensor s;
    s.n_ = n;
    s.upper_.assign(packed.begin(), packed.end());
    return s;
}

SymTensor SymTensor::identity(int n) { return SymTensor(Eigen::MatrixXd::Identity(n, n)); }

SymTensor SymTensor::diagonal(const Eigen::VectorXd& d) { return SymTensor(Eigen::MatrixXd(d.asDiagonal())); }

double SymTensor::operator()(int i, int j) const {
    if (i > j) std::swap(i, j);
    // Row i of the upper triangle starts after i rows of decreasing length.
    const int offset = i * n_ - i * (i - 1) / 2;
    return upper_[static_cast<std::size_t>(offset + (j - i))];
}

Eigen::MatrixXd SymTensor::matrix() const {
    Eigen::MatrixXd m(n_, n_);
    std::size_t t = 0;
    for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j) m(i, j) = m(j, i) = upper_[t++];
    return m;
}

Eigen::VectorXd SymTensor::eigenvalues() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(matrix(), Eigen::EigenvaluesOnly).eigenvalues();
}

bool SymTensor::is_spd() const { return n_ > 0 && eigenvalues().minCoeff() > 0.0; }

bool SymTensor::within_ellipticity(double lambda) const {
    const Eigen::VectorXd ev = eigenvalues();
    const double slack = 1e-12;
    return ev.minCoeff() >= (1.0 / lambda) * (1.0 - slack) && ev.maxCoeff() <= lambda * (1.0 + slack);
}

double SymTensor::quadratic(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return a.dot(matrix() * b);
}

SymTensor SymTensor::congruence(const Eigen::MatrixXd& q) const {
    const Eigen::MatrixXd m = q.transpose() * matrix() * q;
    return SymTensor(0.5 * (m + m.transpose()));
}

namespace {

// Cholesky-based SPD check; returns the factor for determinant and inverse.
Eigen::LLT<Eigen::MatrixXd> spd_factor(const SymTensor& s, const char* what) {
    if (s.dim() < 3) raise(ErrorCode::DimensionTooSmall, std::string(what) + ": n must be >= 3");
    Eigen::LLT<Eigen::MatrixXd> llt(s.matrix());
    if (llt.info() != Eigen::Success || !s.is_spd())
        raise(ErrorCode::NotSPD, std::string(what) + ": tensor is not positive definite");
    return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

SymTensor symmetric(const Eigen::MatrixXd& m) { return SymTensor(0.5 * (m + m.transpose()), 1e-8); }

} // namespace

SymTensor g_from_sigma(const SymTensor& sigma) {
    const auto llt = spd_factor(sigma, "g_from_sigma");
    const int n = sigma.dim();
    const double factor = std::exp(log_det(llt) / (n - 2));
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    return symmetric(factor * inv);
}

SymTensor sigma_from_g(const SymTensor& g) {
    const auto llt = spd_factor(g, "sigma_from_g");
    const int n = g.dim();
    const double factor = std::exp(0.5 * log_det(llt));
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    return symmetric(factor * inv);
}

double TangentialForm::evaluate(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double plane_tol) const {
    const Eigen::VectorXd ca = basis.transpose() * a;
    const Eigen::VectorXd cb = basis.transpose() * b;
    if ((basis * ca - a).norm() > plane_tol * std::max(1.0, a.norm()) ||
        (basis * cb - b).norm() > plane_tol * std::max(1.0, b.norm()))
        raise(ErrorCode::InconsistentForms, "vector does not lie in the tangent plane of the form");
    return ca.dot(values * cb);
}

TangentialForm tangential_form(const SymTensor& g, const Eigen::MatrixXd& basis) {
    const int n = g.dim();
    if (basis.rows() != n || basis.cols() != n - 1)
        raise(ErrorCode::InvalidArgument, "tangent basis must be n x (n-1)");
    const Eigen::MatrixXd gram = basis.transpose() * basis;
    if ((gram - Eigen::MatrixXd::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff() > 1e-10)
        raise(ErrorCode::NonOrthonormalBasis, "tangent basis is not orthonormal");
    Eigen::MatrixXd values = basis.transpose() * g.matrix() * basis;
    values = 0.5 * (values + values.transpose()).eval();
    return {basis, values};
}

std::array<Eigen::MatrixXd, 3> canonical_plane_bases(const GammaTriple& gammas) {
    const int n = gammas.dimension();
    const int last = n - 1;   // e_n
    const int second = n - 2; // e_{n-1}
    const int third = n - 3;  // e_{n-2}
    auto unit = [n](int i) { return Eigen::VectorXd::Unit(n, i); };

    Eigen::MatrixXd pi1(n, n - 1), pi2(n, n - 1), pi3(n, n - 1);
    for (int i = 0; i < n - 1; ++i) pi1.col(i) = unit(i);

    for (int i = 0; i < n - 2; ++i) pi2.col(i) = unit(i);
    pi2.col(n - 2) = (unit(second) + gammas.gamma1 * unit(last)).normalized();

    for (int i = 0; i < n - 3; ++i) pi3.col(i) = unit(i);
    const Eigen::VectorXd a = (unit(third) + gammas.gamma3 * unit(last)).normalized();
    Eigen::VectorXd b = unit(second) + gammas.gamma2 * unit(last);
    b -= b.dot(a) * a;
    pi3.col(n - 3) = a;
    pi3.col(n - 2) = b.normalized();

    const Eigen::MatrixXd& q = gammas.rotation;
    return {q * pi1, q * pi2, q * pi3};
}

namespace {

Eigen::Matrix<double, 3, 2> system_matrix(const GammaTriple& t) {
    Eigen::Matrix<double, 3, 2> a;
    a << 2.0, t.gamma1, 0.0, t.gamma3 * t.gamma3, 2.0 * t.gamma2, t.gamma2 * t.gamma2;
    return a;
}

Eigen::Matrix2d block(const Eigen::Matrix<double, 3, 2>& a, GammaBranch branch) {
    Eigen::Matrix2d b;
    b.row(0) = a.row(0);
    b.row(1) = branch == GammaBranch::A1 ? a.row(1) : a.row(2);
    return b;
}

} // namespace

std::array<double, 2> block_determinants(const GammaTriple& gammas) {
    const auto a = system_matrix(gammas);
    return {block(a, GammaBranch::A1).determinant(), block(a, GammaBranch::A2).determinant()};
}

AssemblyResult assemble_g_detailed(const std::array<TangentialForm, 3>& forms, const GammaTriple& t,
                                   const AssembleOptions& options) {
    const int n = t.dimension();
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "assemble_g needs n >= 3");
    if (!gammas_admissible(t.gamma1, t.gamma2, t.gamma3, options.eps_flat))
        raise(ErrorCode::InadmissibleGammas, "gamma triple violates the admissibility condition");
    for (const auto& f : forms)
        if (f.basis.rows() != n || f.values.rows() != n - 1 || f.values.cols() != n - 1)
            raise(ErrorCode::InvalidArgument, "tangential form dimensions do not match the gamma triple");

    const Eigen::MatrixXd& q = t.rotation;
    const int last = n - 1, second = n - 2, third = n - 3;
    auto e = [&](int i) -> Eigen::VectorXd { return q.col(i); };
    const double g1 = t.gamma1, g2 = t.gamma2, g3 = t.gamma3;

    Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(n, n);
    // Upper-left block from Pi_1.
    for (int i = 0; i < n - 1; ++i)
        for (int j = i; j < n - 1; ++j) gc(i, j) = gc(j, i) = forms[0].evaluate(e(i), e(j));

    // g_{n,i}, i <= n-2, from the cross terms on Pi_2.
    const Eigen::VectorXd v2 = e(second) + g1 * e(last);
    for (int i = 0; i <= third; ++i) {
        const double s = forms[1].evaluate(e(i), v2);
        gc(last, i) = gc(i, last) = (s - gc(second, i)) / g1;
    }

    const Eigen::VectorXd v3a = e(third) + g3 * e(last);
    const Eigen::VectorXd v3b = e(second) + g2 * e(last);
    AssemblySystem sys;
    sys.A = system_matrix(t);
    sys.rhs << (forms[1].evaluate(v2, v2) - gc(second, second)) / g1,
        forms[2].evaluate(v3a, v3a) - gc(third, third) - 2.0 * g3 * gc(third, last),
        forms[2].evaluate(v3b, v3b) - gc(second, second);

    const bool a1_ok = std::abs(g3) >= options.eps_flat;
    const bool a2_ok = std::abs(g2) >= options.eps_flat && std::abs(g1 - g2) >= options.eps_flat;
    const auto dets = block_determinants(t);
    if (a1_ok && a2_ok)
        sys.branch = std::abs(dets[0]) >= std::abs(dets[1]) ? GammaBranch::A1 : GammaBranch::A2;
    else
        sys.branch = a1_ok ? GammaBranch::A1 : GammaBranch::A2;
    sys.det = sys.branch == GammaBranch::A1 ? dets[0] : dets[1];
    if (std::abs(sys.det) < options.eps_det)
        raise(ErrorCode::IllConditionedAssembly, "|det| of the selected block is " + std::to_string(sys.det));

    const Eigen::Matrix2d blk = block(sys.A, sys.branch);
    Eigen::Vector2d rhs_blk(sys.rhs[0], sys.branch == GammaBranch::A1 ? sys.rhs[1] : sys.rhs[2]);
    sys.G = blk.partialPivLu().solve(rhs_blk);
    const Eigen::JacobiSVD<Eigen::Matrix2d> svd(blk);
    sys.condition = svd.singularValues()[0] / svd.singularValues()[1];

    const int unused = sys.branch == GammaBranch::A1 ? 2 : 1;
    const double scale = std::max(sys.A.norm() * sys.G.norm(), sys.rhs.norm());
    sys.inconsistency = scale > 0.0 ? std::abs(sys.A.row(unused).dot(sys.G) - sys.rhs[unused]) / scale : 0.0;
    if (sys.inconsistency > options.consistency_tol)
        raise(ErrorCode::InconsistentForms,
              "over-determined rows disagree (relative residual " + std::to_string(sys.inconsistency) + ")");
    if (sys.A.row(unused).norm() > 0.0) {
        sys.G = sys.A.colPivHouseholderQr().solve(sys.rhs);
        sys.least_squares = true;
    }

    gc(second, last) = gc(last, second) = sys.G[0];
    gc(last, last) = sys.G[1];
    const Eigen::MatrixXd gw = q * gc * q.transpose();
    return {SymTensor(0.5 * (gw + gw.transpose()), 1e-8), sys};
}

SymTensor assemble_g(const std::array<TangentialForm, 3>& forms, const GammaTriple& gammas,
                     const AssembleOptions& options) {
    return assemble_g_detailed(forms, gammas, options).g;
}

} // namespace ndlab
