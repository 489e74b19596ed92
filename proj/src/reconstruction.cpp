#include "ndlab/reconstruction.hpp"

#include "ndlab/error.hpp"
#include "ndlab/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ndlab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int packed_layer_size(int n) { return static_cast<int>(SymTensor::packed_size(n)) + 1; }

int dimension_of(const std::vector<LayerCoefficients>& layers) { return layers.front().sigma.dim(); }

// Every q_j zero is not coercive; nudge the given layers to a tiny positive q.
void keep_coercive(std::vector<LayerCoefficients>& layers, const std::vector<int>& adjustable) {
    for (const auto& l : layers)
        if (l.q > 0.0) return;
    for (int j : adjustable) layers[static_cast<std::size_t>(j)].q = 1e-8;
}

bool same_layer(const LayerCoefficients& a, const LayerCoefficients& b) { return a.sigma == b.sigma && a.q == b.q; }

bool same_graph(const InterfaceGraph& a, const InterfaceGraph& b) {
    return a.kind() == b.kind() && a.coefficients() == b.coefficients() && a.radius() == b.radius();
}

} // namespace

NDMatrix FitProblem::forward(const CoefficientField& coeffs) const {
    const DiscreteSystem system = assemble(*mesh, coeffs);
    return assemble_nd(system, *basis);
}

Eigen::VectorXd FitProblem::residual(const CoefficientField& coeffs) const {
    const Eigen::MatrixXd diff = forward(coeffs).values() - measured.values();
    if (near_field <= 0.0)
        return Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size()) / measured.values().norm();
    const auto& x = basis->coords;
    std::vector<double> kept;
    double scale = 0.0;
    for (Eigen::Index j = 0; j < diff.cols(); ++j)
        for (Eigen::Index i = 0; i < diff.rows(); ++i) {
            if ((x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)]).norm() < near_field) continue;
            kept.push_back(diff(i, j));
            scale += measured.values()(i, j) * measured.values()(i, j);
        }
    if (kept.empty()) raise(ErrorCode::InvalidArgument, "near_field excludes every entry");
    return Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size())) / std::sqrt(scale);
}

double FitProblem::misfit(const CoefficientField& coeffs) const { return residual(coeffs).squaredNorm(); }

Eigen::VectorXd pack_layer(const LayerCoefficients& layer) {
    const auto p = layer.sigma.packed();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(p.size()) + 1);
    for (std::size_t i = 0; i < p.size(); ++i) theta[static_cast<Eigen::Index>(i)] = p[i];
    theta[theta.size() - 1] = layer.q;
    return theta;
}

LayerCoefficients unpack_layer(const Eigen::Ref<const Eigen::VectorXd>& theta, int n) {
    const auto m = static_cast<Eigen::Index>(SymTensor::packed_size(n));
    if (theta.size() != m + 1) raise(ErrorCode::InvalidArgument, "packed layer has the wrong size");
    std::vector<double> upper(theta.data(), theta.data() + m);
    return {SymTensor::from_upper(n, upper), theta[m]};
}

Eigen::VectorXd project_layer(const Eigen::VectorXd& theta, int n, double lambda, double q_max) {
    const LayerCoefficients layer = unpack_layer(theta, n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(layer.sigma.matrix());
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(1.0 / lambda).cwiseMin(lambda);
    LayerCoefficients out;
    if (clipped == eig.eigenvalues()) {
        out.sigma = layer.sigma;
    } else {
        const Eigen::MatrixXd s = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
        out.sigma = SymTensor(0.5 * (s + s.transpose()));
    }
    out.q = std::clamp(layer.q, 0.0, q_max);
    return pack_layer(out);
}

LayerFit gauss_newton(const FitProblem& problem, std::vector<LayerCoefficients> start,
                      const std::vector<int>& active_layers, const std::vector<int>& tied_layers,
                      const RecoveryOptions& options) {
    if (active_layers.empty()) raise(ErrorCode::InvalidArgument, "no active layer");
    const auto t0 = Clock::now();
    const int n = dimension_of(start);
    const int per = packed_layer_size(n);
    const auto p = static_cast<Eigen::Index>(active_layers.size()) * per;
    const int deepest = active_layers.back();

    auto layers_of = [&](const Eigen::VectorXd& theta) {
        std::vector<LayerCoefficients> layers = start;
        for (std::size_t a = 0; a < active_layers.size(); ++a)
            layers[static_cast<std::size_t>(active_layers[a])] =
                unpack_layer(theta.segment(static_cast<Eigen::Index>(a) * per, per), n);
        for (int t : tied_layers) layers[static_cast<std::size_t>(t)] = layers[static_cast<std::size_t>(deepest)];
        std::vector<int> adjustable = active_layers;
        adjustable.insert(adjustable.end(), tied_layers.begin(), tied_layers.end());
        keep_coercive(layers, adjustable);
        return layers;
    };
    auto project = [&](const Eigen::VectorXd& theta) {
        Eigen::VectorXd out(p);
        for (Eigen::Index a = 0; a < p / per; ++a)
            out.segment(a * per, per) = project_layer(theta.segment(a * per, per), n, problem.lambda, options.q_max);
        return out;
    };
    auto residual = [&](const Eigen::VectorXd& theta, double slack = 1.0) {
        return problem.residual(CoefficientField(layers_of(theta), problem.lambda * slack));
    };

    Eigen::VectorXd theta(p);
    for (std::size_t a = 0; a < active_layers.size(); ++a)
        theta.segment(static_cast<Eigen::Index>(a) * per, per) = pack_layer(start[static_cast<std::size_t>(active_layers[a])]);
    theta = project(theta);

    // Step scale per parameter: sigma entries relative to the layer's largest
    // diagonal entry, q relative to max(q, 0.1).
    auto step_of = [&](const Eigen::VectorXd& th, Eigen::Index i) {
        const Eigen::Index a = i / per, k = i % per;
        if (k == per - 1) return options.fd_step * std::max(std::abs(th[i]), 0.1);
        const LayerCoefficients l = unpack_layer(th.segment(a * per, per), n);
        return options.fd_step * l.sigma.matrix().diagonal().cwiseAbs().maxCoeff();
    };

    // Damped normal-equation step with q pinned where it sits on a bound and the
    // step points outward (the eigenvalue box is left to the projection).
    auto bounded_step = [&](const Eigen::MatrixXd& m, const Eigen::VectorXd& g, const Eigen::VectorXd& th) {
        std::vector<bool> pinned(static_cast<std::size_t>(p), false);
        Eigen::VectorXd step = Eigen::VectorXd::Zero(p);
        for (int pass = 0; pass <= p; ++pass) {
            std::vector<Eigen::Index> free;
            for (Eigen::Index i = 0; i < p; ++i)
                if (!pinned[static_cast<std::size_t>(i)]) free.push_back(i);
            Eigen::MatrixXd mf(static_cast<Eigen::Index>(free.size()), static_cast<Eigen::Index>(free.size()));
            Eigen::VectorXd gf(static_cast<Eigen::Index>(free.size()));
            for (std::size_t x = 0; x < free.size(); ++x) {
                gf[static_cast<Eigen::Index>(x)] = g[free[x]];
                for (std::size_t y = 0; y < free.size(); ++y)
                    mf(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = m(free[x], free[y]);
            }
            const Eigen::VectorXd sf = mf.ldlt().solve(-gf);
            step.setZero();
            for (std::size_t x = 0; x < free.size(); ++x) step[free[x]] = sf[static_cast<Eigen::Index>(x)];
            bool changed = false;
            for (Eigen::Index i = per - 1; i < p; i += per) {
                const bool at_lower = th[i] <= 0.0 && step[i] < 0.0;
                const bool at_upper = th[i] >= options.q_max && step[i] > 0.0;
                if (!pinned[static_cast<std::size_t>(i)] && (at_lower || at_upper)) {
                    pinned[static_cast<std::size_t>(i)] = true;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        return step;
    };

    StageReport stage;
    stage.layer = deepest;
    Eigen::VectorXd r = residual(theta);
    double misfit = r.squaredNorm();
    stage.evaluations = 1;
    stage.misfits.push_back(misfit);

    double mu = 1e-3;
    int stall = 0;
    int projection_stuck = 0;
    for (int iter = 0; iter < options.max_iterations && misfit > options.misfit_target; ++iter) {
        Eigen::MatrixXd jac(r.size(), p);
        parallel_for(static_cast<std::size_t>(p), [&](std::size_t ui) {
            const auto i = static_cast<Eigen::Index>(ui);
            double h = step_of(theta, i);
            Eigen::VectorXd probe = theta;
            probe[i] += h;
            if ((project(probe) - probe).norm() > 0.0) {
                h = -h;
                probe[i] = theta[i] + h;
            }
            // An eigenvalue sitting on the box edge can leave it in both directions
            // of an off-diagonal entry; the forward model is fine just outside.
            jac.col(i) = (residual(probe, 1.01) - r) / h;
        });
        stage.evaluations += static_cast<int>(p);

        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        const Eigen::VectorXd d = a.diagonal().cwiseMax(1e-300);

        bool accepted = false;
        double predicted = 0.0;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += mu * d;
            const Eigen::VectorXd step = bounded_step(damped, g, theta);
            const Eigen::VectorXd trial = project(theta + step);
            const Eigen::VectorXd taken = trial - theta;
            predicted = misfit - (r + jac * taken).squaredNorm();
            if (taken.norm() <= options.step_tol * std::max(1.0, theta.norm())) {
                if (step.norm() <= options.step_tol * std::max(1.0, theta.norm())) {
                    stage.seconds = seconds_since(t0);
                    return {layers_of(theta), stage};
                }
                // The box swallowed the whole step: shorten it and retry.
                if (++projection_stuck >= 3)
                    raise(ErrorCode::InfeasibleIterate, "projection keeps returning the same iterate");
                mu *= 4.0;
                continue;
            }
            projection_stuck = 0;
            const Eigen::VectorXd r_trial = residual(trial);
            ++stage.evaluations;
            const double m_trial = r_trial.squaredNorm();
            if (m_trial < misfit) {
                const double decrease = misfit - m_trial;
                theta = trial;
                r = r_trial;
                misfit = m_trial;
                stage.misfits.push_back(misfit);
                mu = std::max(mu / 3.0, 1e-12);
                stall = 0;
                accepted = true;
                if (decrease <= 1e-10 * misfit ||
                    taken.norm() <= options.step_tol * std::max(1.0, theta.norm())) {
                    stage.seconds = seconds_since(t0);
                    return {layers_of(theta), stage};
                }
            } else {
                mu *= 4.0;
                if (++stall >= options.stall_limit) {
                    // At the discretization floor the model predicts no real decrease.
                    if (predicted <= 1e-6 * misfit) {
                        stage.seconds = seconds_since(t0);
                        return {layers_of(theta), stage};
                    }
                    raise(ErrorCode::FitDiverged, "misfit did not decrease for " +
                                                      std::to_string(options.stall_limit) + " iterations");
                }
            }
        }
    }
    stage.seconds = seconds_since(t0);
    return {layers_of(theta), stage};
}

FirstLayer recover_first_layer(const FitProblem& problem, const LayeredDomain& domain, const RecoveryOptions& options) {
    const auto t0 = Clock::now();
    const SigmaPatch& patch = domain.sigma();
    WitnessOptions wo;
    wo.center = patch.center;
    wo.search_radius = patch.radius;
    const WitnessTriple witnesses = nonflat_witnesses(domain.boundary(), wo);

    const int n = domain.dimension();
    const int layers = domain.layer_count();
    FirstLayer out;
    out.layer.sigma = SymTensor::identity(n);
    if (options.first_layer == FirstLayerSigma::probe) {
        std::vector<double> radii = options.radii;
        if (radii.empty()) radii = probe_radii(problem.mesh->h, patch.radius, options.probe);
        std::array<int, 3> poles{};
        if (options.poles) {
            poles = *options.poles;
        } else {
            // Keep the probe circles inside Sigma.
            WitnessOptions inner = wo;
            inner.search_radius = patch.radius - radii.back() - problem.mesh->h;
            if (*inner.search_radius <= 0.0)
                raise(ErrorCode::ProbeLeavesSigma, "Sigma is too small for the probe radii");
            const WitnessTriple w = nonflat_witnesses(domain.boundary(), inner);
            for (int k = 0; k < 3; ++k) poles[static_cast<std::size_t>(k)] = problem.basis->nearest(w.points[static_cast<std::size_t>(k)]);
        }
        out.probe = recover_boundary_g(problem.measured, *problem.mesh, *problem.basis, domain.boundary(), poles,
                                       radii, std::nullopt, options.probe);
        out.layer.sigma = out.probe->sigma;
    }

    auto misfit_at = [&](double q) {
        ++out.stage.evaluations;
        return problem.misfit(CoefficientField(std::vector<LayerCoefficients>(static_cast<std::size_t>(layers),
                                                                              {out.layer.sigma, q}),
                                               problem.lambda));
    };

    // Golden section over [q_lo, q_max]; q = 0 everywhere is not coercive.
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = 1e-9 * options.q_max, hi = options.q_max;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = misfit_at(x1), f2 = misfit_at(x2);
    out.stage.misfits.push_back(std::min(f1, f2));
    while (hi - lo > options.golden_tol * options.q_max) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = misfit_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = misfit_at(x2);
        }
    }
    double best = f1 < f2 ? x1 : x2;
    double f_best = std::min(f1, f2);
    out.stage.misfits.push_back(f_best);

    // Parabolic step through (x1, x2) and the bracket end nearer the minimum.
    {
        const double xa = x1, xb = x2, xc = f1 < f2 ? lo : hi;
        const double fa = f1, fb = f2, fc = misfit_at(std::max(xc, 1e-9 * options.q_max));
        const double num = (xb - xa) * (xb - xa) * (fb - fc) - (xb - xc) * (xb - xc) * (fb - fa);
        const double den = (xb - xa) * (fb - fc) - (xb - xc) * (fb - fa);
        if (std::abs(den) > 0.0) {
            const double xv = std::clamp(xb - 0.5 * num / den, lo, hi);
            const double fv = misfit_at(std::max(xv, 1e-9 * options.q_max));
            if (fv < f_best) {
                best = xv;
                f_best = fv;
                out.stage.misfits.push_back(f_best);
            }
        }
    }
    out.layer.q = best;
    out.stage.layer = 0;
    out.stage.seconds = seconds_since(t0);
    return out;
}

RecoveryReport strip_all(const FitProblem& problem, const LayeredDomain& domain, const RecoveryOptions& options) {
    const auto t0 = Clock::now();
    const int layers = domain.layer_count();
    if (problem.mesh->layer_count != layers) raise(ErrorCode::LabelMismatch, "mesh and domain layer counts differ");

    RecoveryReport report;
    FirstLayer first = recover_first_layer(problem, domain, options);
    report.probe = std::move(first.probe);
    report.stages.push_back(first.stage);
    std::vector<LayerCoefficients> current(static_cast<std::size_t>(layers), first.layer);

    auto deeper = [&](int k) {
        std::vector<int> tied;
        for (int j = k + 1; j < layers; ++j) tied.push_back(j);
        return tied;
    };

    if (options.first_layer == FirstLayerSigma::fit) {
        LayerFit fit = gauss_newton(problem, current, {0}, deeper(0), options);
        current = std::move(fit.layers);
        report.stages.push_back(fit.stage);
    }
    for (int k = 1; k < layers; ++k) {
        for (int j = k; j < layers; ++j) current[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(k - 1)];
        LayerFit fit = gauss_newton(problem, current, {k}, deeper(k), options);
        current = std::move(fit.layers);
        report.stages.push_back(fit.stage);
    }
    if (options.joint_refinement) {
        std::vector<int> all(static_cast<std::size_t>(layers));
        for (int j = 0; j < layers; ++j) all[static_cast<std::size_t>(j)] = j;
        LayerFit fit = gauss_newton(problem, current, all, {}, options);
        current = std::move(fit.layers);
        report.joint = fit.stage;
    }

    report.layers = current;
    for (int k = 1; k < layers; ++k) {
        const auto& a = current[static_cast<std::size_t>(k - 1)];
        const auto& b = current[static_cast<std::size_t>(k)];
        const double scale = std::max(a.sigma.matrix().cwiseAbs().maxCoeff(), b.sigma.matrix().cwiseAbs().maxCoeff());
        const double ds = (a.sigma.matrix() - b.sigma.matrix()).cwiseAbs().maxCoeff() / scale;
        const double dq = std::abs(a.q - b.q) / std::max({a.q, b.q, 1e-12});
        report.jump_degenerate.push_back(std::max(ds, dq) <= 3.0 * options.fit_tolerance);
    }
    report.final_misfit = problem.misfit(CoefficientField(current, problem.lambda));
    report.seconds = seconds_since(t0);
    return report;
}

PropagationGaps verify_claim_propagation(const CoefficientField& c1, const CoefficientField& c2,
                                         const LayeredDomain& domain, const MeshOptions& mesh_options, int k,
                                         const std::optional<SigmaPatch>& inner_patch) {
    const int layers = domain.layer_count();
    if (c1.layer_count() != layers || c2.layer_count() != layers)
        raise(ErrorCode::LabelMismatch, "coefficient layer counts differ from the domain");
    if (k < 1 || k >= layers) raise(ErrorCode::InvalidArgument, "K must lie in [1, layers - 1]");
    for (int j = 0; j < k; ++j)
        if (!same_layer(c1.layer(j), c2.layer(j)))
            raise(ErrorCode::CoefficientPrefixMismatch, "coefficients differ in layer " + std::to_string(j));

    auto gap = [](const LayeredDomain& d, const MeshOptions& mo, const CoefficientField& a, const CoefficientField& b) {
        const Mesh mesh = generate_mesh(d, mo);
        const FluxBasis basis = flux_basis(mesh);
        const NDMatrix la = assemble_nd(assemble(mesh, a), basis);
        const NDMatrix lb = assemble_nd(assemble(mesh, b), basis);
        return (la.values() - lb.values()).norm();
    };

    PropagationGaps out;
    out.outer = gap(domain, mesh_options, c1, c2);

    const LayeredDomain inner = domain.truncated(k, inner_patch.value_or(domain.sigma()));
    auto tail = [&](const CoefficientField& c) {
        std::vector<LayerCoefficients> l(c.layers().begin() + k, c.layers().end());
        return CoefficientField(std::move(l), c.lambda());
    };
    MeshOptions inner_options = mesh_options;
    if (inner_options.grading) inner_options.grading.reset();
    out.inner = gap(inner, inner_options, tail(c1), tail(c2));
    return out;
}

std::vector<int> merge_map(const LayeredDomain& coarse, const LayeredDomain& refined) {
    if (coarse.dimension() != refined.dimension() || coarse.lower() != refined.lower() ||
        coarse.upper() != refined.upper() || coarse.top() != refined.top() ||
        !same_graph(coarse.boundary(), refined.boundary()))
        raise(ErrorCode::MeshMismatch, "refined domain has a different footprint or boundary");
    for (int c = 1; c < coarse.layer_count(); ++c) {
        bool found = false;
        for (int r = 1; r < refined.layer_count() && !found; ++r) found = same_graph(coarse.graph(c), refined.graph(r));
        if (!found) raise(ErrorCode::MeshMismatch, "coarse interface " + std::to_string(c) + " missing from refinement");
    }
    const Eigen::VectorXd& xp = refined.sigma().center;
    std::vector<int> map;
    for (int j = 0; j < refined.layer_count(); ++j) {
        Eigen::VectorXd x(refined.dimension());
        x.head(xp.size()) = xp;
        x[x.size() - 1] = 0.5 * (refined.layer_bottom(j, xp) + refined.layer_top(j, xp));
        const int c = coarse.locate(x);
        if (c < 0 || (!map.empty() && c < map.back())) raise(ErrorCode::MeshMismatch, "refined layers do not nest");
        map.push_back(c);
    }
    if (map.back() != coarse.layer_count() - 1) raise(ErrorCode::MeshMismatch, "refined layers do not cover the domain");
    return map;
}

Mesh relabeled(const Mesh& mesh, const std::vector<int>& map) {
    Mesh out = mesh;
    int top = -1;
    for (int& l : out.labels) {
        if (l < 0 || l >= static_cast<int>(map.size())) raise(ErrorCode::LabelMismatch, "label outside the map");
        l = map[static_cast<std::size_t>(l)];
        top = std::max(top, l);
    }
    out.layer_count = top + 1;
    return out;
}

double verify_partition_merge(const CoefficientField& coarse, const LayeredDomain& coarse_domain,
                              const LayeredDomain& refined_domain, const MeshOptions& mesh_options,
                              const std::optional<CoefficientField>& refined) {
    const std::vector<int> map = merge_map(coarse_domain, refined_domain);
    if (coarse.layer_count() != coarse_domain.layer_count())
        raise(ErrorCode::LabelMismatch, "coarse coefficients do not match the coarse domain");
    const Mesh mesh = generate_mesh(refined_domain, mesh_options);
    const FluxBasis basis = flux_basis(mesh);
    const Mesh merged = relabeled(mesh, map);

    CoefficientField fine = refined.value_or([&] {
        std::vector<LayerCoefficients> l;
        for (int c : map) l.push_back(coarse.layer(c));
        return CoefficientField(std::move(l), coarse.lambda());
    }());
    const NDMatrix lc = assemble_nd(assemble(merged, coarse), basis);
    const NDMatrix lr = assemble_nd(assemble(mesh, fine), basis);
    return (lc.values() - lr.values()).norm();
}

std::vector<double> local_alessandrini_integrals(const Mesh& mesh, const CoefficientField& c1,
                                                 const CoefficientField& c2, const Eigen::VectorXd& u1,
                                                 const Eigen::VectorXd& u2, const Eigen::Vector3d& center,
                                                 const std::vector<double>& radii) {
    std::vector<double> out(radii.size(), 0.0);
    const double r_max = *std::max_element(radii.begin(), radii.end());
    for (int e = 0; e < mesh.element_count(); ++e) {
        const int label = mesh.labels[static_cast<std::size_t>(e)];
        if (label != 0) continue;
        const double dist = (mesh.centroid(e) - center).norm();
        if (dist > r_max) continue;
        const auto& t = mesh.tets[static_cast<std::size_t>(e)];
        std::array<Eigen::Vector3d, 4> v;
        for (int a = 0; a < 4; ++a) v[static_cast<std::size_t>(a)] = mesh.vertices[static_cast<std::size_t>(t[static_cast<std::size_t>(a)])];
        const Eigen::Matrix4d k1 = element_matrix(v, c1.layer(label).sigma, c1.layer(label).q);
        const Eigen::Matrix4d k2 = element_matrix(v, c2.layer(label).sigma, c2.layer(label).q);
        Eigen::Vector4d a1, a2;
        for (int a = 0; a < 4; ++a) {
            a1[a] = u1[t[static_cast<std::size_t>(a)]];
            a2[a] = u2[t[static_cast<std::size_t>(a)]];
        }
        const double contribution = a1.dot((k1 - k2) * a2);
        for (std::size_t i = 0; i < radii.size(); ++i)
            if (dist <= radii[i]) out[i] += contribution;
    }
    return out;
}

double log_log_slope(const std::vector<double>& radii, const std::vector<double>& values) {
    if (radii.size() != values.size() || radii.size() < 2)
        raise(ErrorCode::InvalidArgument, "slope needs at least two matching samples");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(radii.size()), 2);
    Eigen::VectorXd b(a.rows());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] <= 0.0 || values[i] == 0.0) raise(ErrorCode::InvalidArgument, "log of a non-positive sample");
        a.row(static_cast<Eigen::Index>(i)) << std::log(radii[i]), 1.0;
        b[static_cast<Eigen::Index>(i)] = std::log(std::abs(values[i]));
    }
    return a.colPivHouseholderQr().solve(b)[0];
}

LayerErrors relative_errors(const std::vector<LayerCoefficients>& recovered, const CoefficientField& truth,
                            double floor) {
    if (static_cast<int>(recovered.size()) != truth.layer_count())
        raise(ErrorCode::LabelMismatch, "layer counts differ");
    LayerErrors out;
    for (int j = 0; j < truth.layer_count(); ++j) {
        const Eigen::MatrixXd s = recovered[static_cast<std::size_t>(j)].sigma.matrix();
        const Eigen::MatrixXd t = truth.layer(j).sigma.matrix();
        const double scale = t.cwiseAbs().maxCoeff();
        for (Eigen::Index a = 0; a < t.rows(); ++a)
            for (Eigen::Index b = a; b < t.cols(); ++b) {
                const double den = std::abs(t(a, b)) >= floor * scale ? std::abs(t(a, b)) : scale;
                out.sigma = std::max(out.sigma, std::abs(s(a, b) - t(a, b)) / den);
            }
        const double qt = truth.layer(j).q;
        out.q = std::max(out.q, std::abs(recovered[static_cast<std::size_t>(j)].q - qt) / std::max(qt, 1e-12));
    }
    return out;
}

void write_report(const RecoveryReport& report, std::ostream& out, const std::optional<CoefficientField>& truth) {
    out << std::setprecision(6);
    out << "layers " << report.layers.size() << "\n";
    out << "final misfit " << report.final_misfit << "\n";
    out << "wall clock " << report.seconds << " s\n";
    if (report.probe) {
        out << "boundary probe sigma_1:\n" << report.probe->sigma.matrix() << "\n";
        out << "  gammas " << report.probe->gammas.gamma1 << " " << report.probe->gammas.gamma2 << " "
            << report.probe->gammas.gamma3 << "\n";
    }
    for (const auto& s : report.stages)
        out << "stage layer " << s.layer + 1 << ": misfit " << s.misfits.front() << " -> " << s.misfits.back() << " ("
            << s.misfits.size() << " accepted, " << s.evaluations << " solves, " << s.seconds << " s)\n";
    if (report.joint)
        out << "joint refinement: misfit " << report.joint->misfits.front() << " -> " << report.joint->misfits.back()
            << " (" << report.joint->misfits.size() << " accepted, " << report.joint->evaluations << " solves, "
            << report.joint->seconds << " s)\n";
    for (std::size_t k = 0; k < report.jump_degenerate.size(); ++k)
        if (report.jump_degenerate[k]) out << "interface " << k + 1 << ": jump-degenerate\n";
    for (std::size_t j = 0; j < report.layers.size(); ++j) {
        out << "layer " << j + 1 << " q = " << report.layers[j].q;
        if (truth) out << " (true " << truth->layer(static_cast<int>(j)).q << ")";
        out << "\nsigma =\n" << report.layers[j].sigma.matrix() << "\n";
        if (truth) out << "true sigma =\n" << truth->layer(static_cast<int>(j)).sigma.matrix() << "\n";
    }
    if (truth) {
        const LayerErrors e = relative_errors(report.layers, *truth, 1e-9);
        out << "max relative error: sigma " << e.sigma << ", q " << e.q << "\n";
    }
}

void write_report_csv(const RecoveryReport& report, std::ostream& out, const std::optional<CoefficientField>& truth) {
    out << std::setprecision(17);
    out << "layer,parameter,recovered";
    if (truth) out << ",truth,rel_error";
    out << "\n";
    for (std::size_t j = 0; j < report.layers.size(); ++j) {
        const auto& l = report.layers[j];
        const int n = l.sigma.dim();
        auto row = [&](const std::string& name, double value, double t, double scale) {
            out << j + 1 << "," << name << "," << value;
            if (truth) out << "," << t << "," << std::abs(value - t) / scale;
            out << "\n";
        };
        const Eigen::MatrixXd t = truth ? truth->layer(static_cast<int>(j)).sigma.matrix() : Eigen::MatrixXd::Zero(n, n);
        const double tmax = truth ? t.cwiseAbs().maxCoeff() : 1.0;
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
                const double tv = t(a, b);
                row("sigma" + std::to_string(a + 1) + std::to_string(b + 1), l.sigma(a, b), tv,
                    std::abs(tv) >= 1e-9 * tmax ? std::abs(tv) : tmax);
            }
        const double qt = truth ? truth->layer(static_cast<int>(j)).q : 0.0;
        row("q", l.q, qt, std::max(qt, 1e-12));
    }
}

} // namespace ndlab
