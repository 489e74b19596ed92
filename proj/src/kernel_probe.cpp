#include "ndlab/kernel_probe.hpp"

#include "ndlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>

namespace ndlab {

double dimensional_constant(int n) {
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "C_n needs n >= 3");
    const double omega = std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
    return 1.0 / (n * (n - 2) * omega);
}

std::vector<double> probe_radii(double h, double sigma_radius, const ProbeOptions& options) {
    const double r_min = options.c_probe * h;
    const double r_max = std::min(options.c_max * h, sigma_radius / 4.0);
    const int m = std::max(2, options.radii);
    std::vector<double> r(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) r[static_cast<std::size_t>(i)] = r_min * std::pow(r_max / r_min, double(i) / (m - 1));
    return r;
}

std::pair<int, int> choose_reference_points(const FluxBasis& basis, int pole, double r_max, double separation) {
    const double need = separation * r_max;
    const Eigen::Vector3d& y = basis.coords.at(static_cast<std::size_t>(pole));
    std::vector<int> far;
    for (int i = 0; i < basis.size(); ++i)
        if ((basis.coords[static_cast<std::size_t>(i)] - y).norm() >= need) far.push_back(i);
    int best_w = -1, best_z = -1;
    double best = -1.0;
    for (std::size_t a = 0; a < far.size(); ++a) {
        const auto& pw = basis.coords[static_cast<std::size_t>(far[a])];
        for (std::size_t b = a + 1; b < far.size(); ++b) {
            const auto& pz = basis.coords[static_cast<std::size_t>(far[b])];
            const double dwz = (pw - pz).norm();
            if (dwz < need) continue;
            const double score = std::min({dwz, (pw - y).norm(), (pz - y).norm()});
            if (score > best) {
                best = score;
                best_w = far[a];
                best_z = far[b];
            }
        }
    }
    if (best_w < 0)
        raise(ErrorCode::PointsTooClose, "no pair of Sigma nodes lies " + std::to_string(need) +
                                             " away from the pole and from each other");
    return {best_w, best_z};
}

ProbeSeries probe_direction(const NDMatrix& lambda, const Mesh& mesh, const FluxBasis& basis, int pole,
                            const Eigen::Vector3d& direction, const std::vector<double>& radii, int w, int z,
                            const ProbeOptions& options) {
    const int m = basis.size();
    if (lambda.size() != m) raise(ErrorCode::MeshMismatch, "N-D matrix and flux basis differ");
    for (int i : {pole, w, z})
        if (i < 0 || i >= m) raise(ErrorCode::InvalidArgument, "probe point outside the flux basis");
    if (radii.empty()) raise(ErrorCode::InvalidArgument, "probe needs at least one radius");
    const auto& c = basis.coords;
    const auto at = [&](int i) -> const Eigen::Vector3d& { return c[static_cast<std::size_t>(i)]; };
    const double r_max = *std::max_element(radii.begin(), radii.end());
    const double need = options.separation * r_max;
    if ((at(pole) - at(w)).norm() < need || (at(pole) - at(z)).norm() < need || (at(w) - at(z)).norm() < need)
        raise(ErrorCode::PointsTooClose, "reference points must be " + std::to_string(need) +
                                             " apart from the pole and each other");

    ProbeSeries series;
    series.pole = pole;
    series.w = w;
    series.z = z;
    series.direction = direction.normalized();
    const Eigen::Vector2d dp = series.direction.head<2>();
    const Eigen::Vector2d yp = at(pole).head<2>();
    const double r_min = options.c_probe * mesh.h;
    bool warned = false;
    std::set<int> used;
    for (int side : options.antipodal ? std::vector<int>{1, -1} : std::vector<int>{1}) {
        for (double r : radii) {
            const Eigen::Vector2d target = yp + side * r * dp;
            if (!mesh.sigma_patch.contains(target, 0.0))
                raise(ErrorCode::ProbeLeavesSigma, "probe point at radius " + std::to_string(r) + " leaves Sigma");
            if (r < r_min && !warned) {
                series.warnings.push_back("CalibrationWarning: radius " + std::to_string(r) + " below " +
                                          std::to_string(r_min) + " (mollified-flux regime)");
                warned = true;
            }
            const int node = basis.nearest(target);
            if (node == pole || node == w || node == z || !used.insert(node).second) continue;
            ProbeSample s;
            s.node = node;
            s.side = side;
            s.target = r;
            s.chord = at(node) - at(pole);
            s.radius = s.chord.norm();
            s.kappa = k_kernel(lambda, node, pole, w, z);
            series.samples.push_back(s);
        }
    }
    return series;
}

namespace {

// Series kappa_m = a (r_m^p exp(-mu r_m) + beta ln r_m) + c + e r_m^{-n} + b s_m r_m.
//  - exp(-mu r): screening by the zeroth-order term (mu ~ sqrt(q) along d).
//  - beta ln r: boundary-curvature term with a known ratio beta (0 on flat patches).
//  - e r^{-n}: leading mesh correction of the hat-flux kernel, relative size (h/r)^2.
//  - b s r: odd drift of the smooth part along d (s_m = +-1 for the side of the pole).
struct Series {
    std::vector<double> r, k, s;
    int n = 3;
    double beta = 0.0;
    bool mesh_term = false;
    bool drift = false;

    [[nodiscard]] Eigen::Index rows() const { return static_cast<Eigen::Index>(r.size()); }
    [[nodiscard]] int columns() const { return 2 + (mesh_term ? 1 : 0) + (drift ? 1 : 0); }

    [[nodiscard]] double power(Eigen::Index i, double p, double mu) const {
        const auto u = static_cast<std::size_t>(i);
        return std::pow(r[u], p) * std::exp(-mu * r[u]);
    }

    // Row i of the linear model: (r^p e^{-mu r} + beta ln r, 1, [r^-n], [s r]).
    [[nodiscard]] Eigen::RowVectorXd row(Eigen::Index i, double p, double mu) const {
        const auto u = static_cast<std::size_t>(i);
        Eigen::RowVectorXd out(columns());
        int c = 0;
        out[c++] = power(i, p, mu) + beta * std::log(r[u]);
        out[c++] = 1.0;
        if (mesh_term) out[c++] = std::pow(r[u], -n);
        if (drift) out[c++] = s[u] * r[u];
        return out;
    }
};

struct Fit {
    Eigen::VectorXd x; // a, c, [e], [b]
    double p = 0.0;
    double mu = 0.0;
    double rss = 0.0;
};

Eigen::VectorXd relative_residuals(const Series& d, const Fit& f) {
    Eigen::VectorXd e(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double k = d.k[static_cast<std::size_t>(i)];
        e[i] = (d.row(i, f.p, f.mu).dot(f.x) - k) / k;
    }
    return e;
}

// Linear coefficients minimizing sum(((model - k) / k)^2) for fixed (p, mu).
Fit fit_linear(const Series& d, double p, double mu) {
    Eigen::MatrixXd a(d.rows(), d.columns());
    Eigen::VectorXd b(d.rows());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double w = 1.0 / std::abs(d.k[static_cast<std::size_t>(i)]);
        a.row(i) = w * d.row(i, p, mu);
        b[i] = w * d.k[static_cast<std::size_t>(i)];
    }
    Fit out;
    out.x = a.colPivHouseholderQr().solve(b);
    out.p = p;
    out.mu = mu;
    out.rss = (a * out.x - b).squaredNorm();
    return out;
}

template <class F>
double golden_minimum(F&& f, double lo, double hi) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    return 0.5 * (lo + hi);
}

// Gauss-Newton on the linear coefficients plus p and/or mu (mu kept >= 0).
Fit polish(const Series& d, Fit f, bool free_p, bool free_mu) {
    const int extra = (free_p ? 1 : 0) + (free_mu ? 1 : 0);
    for (int it = 0; it < 50 && f.rss > 0.0; ++it) {
        Eigen::MatrixXd j(d.rows(), d.columns() + extra);
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            const Eigen::RowVectorXd row = d.row(i, f.p, f.mu);
            j.row(i).head(d.columns()) = row / d.k[u];
            int c = d.columns();
            const double pw = d.power(i, f.p, f.mu);
            if (free_p) j(i, c++) = f.x[0] * pw * std::log(d.r[u]) / d.k[u];
            if (free_mu) j(i, c++) = -f.x[0] * pw * d.r[u] / d.k[u];
        }
        const Eigen::VectorXd step = j.colPivHouseholderQr().solve(-relative_residuals(d, f));
        Fit trial = f;
        trial.x += step.head(d.columns());
        int c = d.columns();
        if (free_p) trial.p += step[c++];
        if (free_mu) trial.mu = std::max(0.0, trial.mu + step[c++]);
        trial.rss = relative_residuals(d, trial).squaredNorm();
        if (!(trial.rss < f.rss)) break;
        f = trial;
    }
    return f;
}

void check_series(const std::vector<double>& radii, const std::vector<double>& kappa) {
    if (radii.size() != kappa.size()) raise(ErrorCode::InvalidArgument, "radii and kernel values differ in length");
    const std::set<double> distinct(radii.begin(), radii.end());
    if (distinct.size() < 4) raise(ErrorCode::BadFit, "fit needs at least 4 distinct radii");
    if (*distinct.begin() <= 0.0) raise(ErrorCode::BadFit, "radii must be positive");
    if (*distinct.rbegin() < 4.0 * *distinct.begin() * (1.0 - 1e-12))
        raise(ErrorCode::BadFit, "radii must span a factor of 4");
    for (double k : kappa)
        if (!(std::abs(k) > 0.0) || !std::isfinite(k)) raise(ErrorCode::BadFit, "kernel values must be nonzero");
}

DirectionalEstimate fit_series(const Series& d, int n, const FitOptions& options) {
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "fit needs n >= 3");
    const double p0 = 2.0 - n;
    const double cn = dimensional_constant(n);
    const double r_min = *std::min_element(d.r.begin(), d.r.end());
    const double r_max = *std::max_element(d.r.begin(), d.r.end());

    // Exponent fixed at 2 - n: screening rate by golden section (mu = 0 checked
    // explicitly since it is the common optimum), then Gauss-Newton.
    Fit fixed = fit_linear(d, p0, 0.0);
    if (options.screening_max > 0.0) {
        const double mu = golden_minimum([&](double m) { return fit_linear(d, p0, m).rss; }, 0.0,
                                         options.screening_max / r_max);
        const Fit screened = fit_linear(d, p0, mu);
        if (screened.rss < fixed.rss) fixed = screened;
        fixed = polish(d, fixed, false, true);
    }

    // Free exponent at the fitted screening rate.
    const double p_start =
        golden_minimum([&](double p) { return fit_linear(d, p, fixed.mu).rss; }, p0 - 1.0, p0 + 1.0);
    const Fit free = polish(d, fit_linear(d, p_start, fixed.mu), true, false);

    double scale = 0.0;
    for (double k : d.k) scale = std::max(scale, std::abs(k));
    DirectionalEstimate est;
    est.exponent = free.p;
    est.residual = std::sqrt(free.rss / static_cast<double>(d.r.size()));
    est.amplitude = fixed.x[0];
    est.offset = fixed.x[1];
    est.screening = fixed.mu;
    if (d.mesh_term) est.mesh_correction = fixed.x[2];
    if (d.drift) est.drift = fixed.x[d.columns() - 1];
    // The singular part must carry a visible share of the largest sample.
    if (!(fixed.x[0] * std::pow(r_min, p0) * std::exp(-fixed.mu * r_min) > 1e-3 * scale) || !(free.x[0] > 0.0))
        raise(ErrorCode::BadFit, "no positive singular component in the kernel series");
    est.g_hat = std::pow(fixed.x[0] / (2.0 * cn), 2.0 / (2.0 - n));
    if (!(std::abs(est.exponent - p0) <= options.exponent_window))
        raise(ErrorCode::BadFit, "fitted exponent " + std::to_string(est.exponent) + " outside " +
                                     std::to_string(p0) + " +- " + std::to_string(options.exponent_window));
    if (!(est.residual <= options.tau_fit))
        raise(ErrorCode::BadFit, "fit residual " + std::to_string(est.residual) + " above " +
                                     std::to_string(options.tau_fit));
    return est;
}

} // namespace

DirectionalEstimate fit_leading(const std::vector<double>& radii, const std::vector<double>& kappa, int n,
                                const FitOptions& options) {
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "fit needs n >= 3");
    check_series(radii, kappa);
    Series d;
    d.r = radii;
    d.k = kappa;
    d.s.assign(radii.size(), 0.0);
    d.n = n;
    d.mesh_term = options.mesh_term;
    return fit_series(d, n, options);
}

DirectionalEstimate fit_leading(const ProbeSeries& series, int n, const FitOptions& options) {
    if (n < 3) raise(ErrorCode::DimensionTooSmall, "fit needs n >= 3");
    Series d;
    std::vector<double> targets;
    bool plus = false, minus = false;
    for (const auto& smp : series.samples) {
        d.r.push_back(smp.radius);
        d.k.push_back(smp.kappa);
        d.s.push_back(smp.side);
        targets.push_back(smp.target);
        (smp.side > 0 ? plus : minus) = true;
    }
    // The span condition applies to the requested schedule; node snapping may shrink it slightly.
    check_series(targets, d.k);
    d.n = n;
    d.beta = series.log_ratio;
    d.mesh_term = options.mesh_term;
    d.drift = plus && minus;
    auto est = fit_series(d, n, options);
    est.direction = series.direction;
    return est;
}

ProbeSeries with_metric_radii(const ProbeSeries& series, const SymTensor& g, double mean_curvature) {
    ProbeSeries out = series;
    const double gdd = g.quadratic(series.direction, series.direction);
    for (auto& s : out.samples) s.radius = std::sqrt(g.quadratic(s.chord, s.chord) / gdd);
    if (g.matrix().rows() == 3) {
        // In n = 3, sigma^{-1} = g / det(sigma) with det(sigma) = sqrt(det g).
        const double sdd = gdd / std::sqrt(g.matrix().determinant());
        out.log_ratio = -0.5 * mean_curvature * std::sqrt(sdd);
    }
    return out;
}

double transformed_mean_curvature(const InterfaceGraph& graph, const Eigen::VectorXd& xp, const SymTensor& sigma) {
    const auto m = xp.size();
    const auto n = m + 1;
    // F(x) = phi(x') - x_n (negative inside); F~(xi) = F(A xi) with A = sigma^{1/2}.
    Eigen::VectorXd grad(n);
    grad.head(m) = graph.gradient(xp);
    grad[m] = -1.0;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
    hess.topLeftCorner(m, m) = graph.hessian(xp);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma.matrix());
    const Eigen::MatrixXd a = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() *
                              eig.eigenvectors().transpose();
    const Eigen::VectorXd gt = a * grad;
    const Eigen::MatrixXd ht = a * hess * a;
    const double len = gt.norm();
    // div of the outward unit normal, divided by n - 1.
    return (ht.trace() * len * len - gt.dot(ht * gt)) / (static_cast<double>(n - 1) * len * len * len);
}

std::vector<int> probe_columns(const std::vector<std::array<int, 3>>& triples) {
    std::set<int> cols;
    for (const auto& t : triples) {
        cols.insert(t[0]);
        cols.insert(t[1]);
    }
    return {cols.begin(), cols.end()};
}

std::vector<Eigen::Vector2d> probe_plane_directions() {
    return {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, 1.0).normalized(),
            Eigen::Vector2d(1.0, -1.0).normalized()};
}

Eigen::Vector3d lifted_direction(const InterfaceGraph& graph, const Eigen::VectorXd& xp, const Eigen::Vector2d& a) {
    const Eigen::VectorXd grad = graph.gradient(xp);
    return Eigen::Vector3d(a[0], a[1], grad.dot(a)).normalized();
}

TangentialForm form_from_estimates(const TangentFrame& frame, const std::vector<DirectionalEstimate>& estimates) {
    const auto m = static_cast<Eigen::Index>(estimates.size());
    Eigen::MatrixXd a(m, 3);
    Eigen::VectorXd b(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& e = estimates[static_cast<std::size_t>(k)];
        const double al = e.direction.dot(frame.tangents.col(0));
        const double be = e.direction.dot(frame.tangents.col(1));
        a.row(k) << al * al, 2.0 * al * be, be * be;
        b[k] = e.g_hat;
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 3) raise(ErrorCode::InvalidArgument, "probe directions do not span the tangent forms");
    const Eigen::Vector3d x = qr.solve(b);
    Eigen::Matrix2d values;
    values << x[0], x[1], x[1], x[2];
    return {frame.tangents, values};
}

BoundaryRecovery recover_boundary_g(const NDMatrix& lambda, const Mesh& mesh, const FluxBasis& basis,
                                    const InterfaceGraph& interface, const std::array<int, 3>& poles,
                                    const std::vector<double>& radii,
                                    const std::optional<std::array<std::pair<int, int>, 3>>& references,
                                    const ProbeOptions& options) {
    const double r_max = *std::max_element(radii.begin(), radii.end());
    BoundaryRecovery out;
    // Admissibility first: flat witnesses are rejected before any probing.
    for (std::size_t k = 0; k < 3; ++k) {
        out.witnesses[k].pole = poles[k];
        const Eigen::VectorXd xp = basis.coords.at(static_cast<std::size_t>(poles[k])).head<2>();
        out.witnesses[k].frame = tangent_frame_at(interface, xp);
    }
    out.gammas = gammas_from_frames(out.witnesses[0].frame, out.witnesses[1].frame, out.witnesses[2].frame);

    const auto dirs = probe_plane_directions();
    for (std::size_t k = 0; k < 3; ++k) {
        auto& wp = out.witnesses[k];
        const Eigen::VectorXd xp = basis.coords[static_cast<std::size_t>(wp.pole)].head<2>();
        const auto [w, z] =
            references ? (*references)[k] : choose_reference_points(basis, wp.pole, r_max, options.separation);
        wp.series.resize(dirs.size());
        for (std::size_t d = 0; d < dirs.size(); ++d)
            wp.series[d] = probe_direction(lambda, mesh, basis, wp.pole, lifted_direction(interface, xp, dirs[d]),
                                           radii, w, z, options);
    }
    AssembleOptions ao;
    ao.consistency_tol = options.consistency_tol;
    std::array<double, 3> curvature{};
    auto estimate = [&](const std::optional<SymTensor>& metric) {
        for (auto& wp : out.witnesses) {
            wp.estimates.resize(wp.series.size());
            for (std::size_t d = 0; d < wp.series.size(); ++d)
                wp.estimates[d] = fit_leading(
                    metric ? with_metric_radii(wp.series[d], *metric, curvature[&wp - out.witnesses.data()])
                           : wp.series[d],
                    3, options.fit);
            wp.form = form_from_estimates(wp.frame, wp.estimates);
        }
        const auto assembled = assemble_g_detailed(
            {out.witnesses[0].form, out.witnesses[1].form, out.witnesses[2].form}, out.gammas, ao);
        out.g = assembled.g;
        out.system = assembled.system;
    };
    estimate(std::nullopt);
    for (int pass = 0; pass < options.chord_passes && out.g.is_spd(); ++pass) {
        const Eigen::MatrixXd previous = out.g.matrix();
        const SymTensor sigma = sigma_from_g(out.g);
        for (std::size_t k = 0; k < 3; ++k)
            curvature[k] = options.curvature_term
                               ? transformed_mean_curvature(
                                     interface, basis.coords[static_cast<std::size_t>(poles[k])].head<2>(), sigma)
                               : 0.0;
        estimate(out.g);
        if ((out.g.matrix() - previous).norm() <= 1e-8 * previous.norm()) break;
    }
    if (!out.g.is_spd()) raise(ErrorCode::AnisotropyOutOfRange, "recovered metric is not positive definite");
    out.sigma = sigma_from_g(out.g);
    if (!out.sigma.within_ellipticity(options.lambda))
        raise(ErrorCode::AnisotropyOutOfRange, "recovered sigma violates the ellipticity bound");
    return out;
}

void write_probe_csv(const std::vector<std::pair<ProbeSeries, DirectionalEstimate>>& probes, std::ostream& out) {
    out << "series,pole,w,z,dx,dy,dz,side,node,target,radius,kappa,g_hat,amplitude,offset,exponent,residual\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (std::size_t s = 0; s < probes.size(); ++s) {
        const auto& [series, est] = probes[s];
        for (const auto& smp : series.samples) {
            out << s << ',' << series.pole << ',' << series.w << ',' << series.z << ',' << num(series.direction.x())
                << ',' << num(series.direction.y()) << ',' << num(series.direction.z()) << ',' << smp.side << ','
                << smp.node << ',' << num(smp.target) << ',' << num(smp.radius) << ',' << num(smp.kappa) << ','
                << num(est.g_hat) << ',' << num(est.amplitude) << ',' << num(est.offset) << ',' << num(est.exponent)
                << ',' << num(est.residual) << '\n';
        }
    }
}

} // namespace ndlab
