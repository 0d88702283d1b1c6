#pragma once

#include "hspde/domain.hpp"
#include "hspde/eigensystem.hpp"
#include "hspde/error.hpp"
#include "hspde/noise.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace hspde {

/// Recording strides. A space stride of 0 picks the largest stride that
/// keeps at least 65 points per axis, the fewest that leave two dyadic lag
/// levels for the trimmed spatial fit.
struct RecordSpec {
    int time_stride = 1;
    int space_stride = 0;

    int resolved_space_stride(const SpectralDomain& domain) const {
        return space_stride > 0 ? space_stride : std::max(1, (domain.grid_size() - 1) / 64);
    }
};

struct SimulationPlan {
    std::shared_ptr<const EigenSystem> sys;
    CameronMartinSpec noise;
    GProcess G;
    double alpha = 2.0;
    double T = 1.0;
    int steps = 1024;
    int replicas = 1;
    RecordSpec record;
    std::uint64_t seed = 0;
    int threads = 0;   // 0: hardware concurrency

    SimulationPlan(std::shared_ptr<const EigenSystem> system, CameronMartinSpec h, GProcess g)
        : sys(std::move(system)), noise(std::move(h)), G(std::move(g)) {}

    TimeGrid time_grid() const { return {T, steps}; }

    void validate() const {
        require(sys != nullptr, "simulation plan has no eigen system");
        require(steps >= 2, "simulation needs at least 2 steps, got ", steps);
        require(replicas >= 1, "simulation needs at least 1 replica");
        require(T > 0.0, "horizon T must be positive");
        require(alpha > 0.0 && alpha <= 2.0, "drift exponent alpha must lie in (0,2], got ", alpha);
        require(record.time_stride >= 1 && record.time_stride <= steps, "time stride must lie in [1, steps]");
        require(record.space_stride >= 0 && record.space_stride <= sys->domain().grid_size(),
                "space stride must lie in [0, grid size]");
        require(noise.domain == sys->domain(), "noise and operator live on different grids");
        G.validate(sys->domain());
        if (G.kind == GKind::time_varying_multiplication) {
            require(G.g.rows() >= steps, "time-varying multiplier has ", G.g.rows(), " rows, need one per step (",
                    steps, ")");
        }
    }
};

/// Provenance of an ensemble: the plan plus what the simulator derived.
struct PlanEcho {
    std::string scheme;
    std::string system_label;
    std::string g_label;
    std::string g_kind;
    int dim = 0;
    int grid_size = 0;
    int modes = 0;
    int noise_modes = 0;
    double alpha = 2.0;
    double theta = 0.0;
    double m = 0.0;
    double q = 0.0;
    double T = 1.0;
    int steps = 0;
    int replicas = 0;
    int time_stride = 1;
    int space_stride = 1;
    std::uint64_t seed = 0;
    double effective_shift = 0.0;
    bool selfadjoint = true;
};

struct TrajectoryEnsemble {
    std::vector<Eigen::MatrixXd> values;   // per replica: recorded times x recorded points
    std::vector<double> times;
    Eigen::MatrixXd points;                // recorded points x d coordinates
    std::vector<int> space_shape;          // recorded points per axis
    double space_weight = 1.0;             // quadrature weight of one recorded point
    PlanEcho plan;

    int replicas() const noexcept { return static_cast<int>(values.size()); }
    Eigen::Index time_count() const noexcept { return static_cast<Eigen::Index>(times.size()); }
    Eigen::Index point_count() const noexcept { return points.rows(); }
    int dim() const noexcept { return static_cast<int>(space_shape.size()); }

    void check_invariants() const {
        for (std::size_t r = 0; r < values.size(); ++r) {
            const auto& v = values[r];
            require(v.rows() == time_count() && v.cols() == point_count(), "replica ", r, " has wrong shape");
            if (!v.allFinite()) {
                fail(ErrorKind::numerical, "replica ", r, " contains non-finite values");
            }
            if (!v.row(0).isZero(0.0)) {
                fail(ErrorKind::numerical, "replica ", r, " violates u(0) = 0");
            }
        }
    }
};

enum class Scheme { exact_diagonal, frozen_exponential };

inline const char* to_string(Scheme s) {
    return s == Scheme::exact_diagonal ? "exact-diagonal" : "frozen-exponential";
}

namespace detail {

inline std::vector<std::size_t> recorded_points(const SpectralDomain& domain, int stride, std::vector<int>& shape) {
    std::vector<int> axis;
    for (int j = 0; j < domain.grid_size(); j += stride) {
        axis.push_back(j);
    }
    shape.assign(static_cast<std::size_t>(domain.dim()), static_cast<int>(axis.size()));
    std::vector<std::size_t> flat;
    std::vector<int> counter(static_cast<std::size_t>(domain.dim()), 0);
    while (true) {
        std::vector<int> idx(counter.size());
        for (std::size_t a = 0; a < counter.size(); ++a) {
            idx[a] = axis[static_cast<std::size_t>(counter[a])];
        }
        flat.push_back(domain.flat_index(idx));
        int a = domain.dim() - 1;
        while (a >= 0 && counter[static_cast<std::size_t>(a)] == static_cast<int>(axis.size()) - 1) {
            counter[static_cast<std::size_t>(a)] = 0;
            --a;
        }
        if (a < 0) {
            break;
        }
        ++counter[static_cast<std::size_t>(a)];
    }
    return flat;
}

// Noise coupling P G H: row k is the mode-k component of G h_j.
inline Eigen::MatrixXcd noise_coupling(const EigenSystem& sys, const Eigen::MatrixXd& basis, const GProcess& G,
                                       int row) {
    const Eigen::MatrixXcd proj = sys.domain().cell_weight() * sys.dual_modes().transpose();
    if (!G.multiplies()) {
        return proj * basis.cast<Complex>();
    }
    return proj * (G.row(row).asDiagonal() * basis).cast<Complex>();
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> narrow(const Eigen::MatrixXcd& m) {
    if constexpr (std::is_same_v<Scalar, double>) {
        return m.real();
    } else {
        return m;
    }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> narrow_vec(const Eigen::VectorXcd& v) {
    if constexpr (std::is_same_v<Scalar, double>) {
        return v.real();
    } else {
        return v;
    }
}

/// Fills `out` (N x b) with standard normal increments for steps n0..n0+b-1.
using IncrementSource = std::function<void(int n0, Eigen::Ref<Eigen::MatrixXd> out)>;

template <typename Scalar>
class StepKernel {
public:
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    StepKernel(const SimulationPlan& plan, Scheme scheme, const std::vector<std::size_t>& rec_points)
        : plan_(plan), scheme_(scheme) {
        const EigenSystem& sys = *plan.sys;
        const Eigen::Index K = sys.size();
        const double dt = plan.T / plan.steps;
        Eigen::VectorXcd decay(K);
        Eigen::VectorXcd sdev(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            const Complex mu = std::pow(sys.eigenvalues()[k], 0.5 * plan.alpha);
            decay[k] = std::exp(-mu * dt);
            // (1 - e^{-2 mu dt}) / (2 mu), the exact OU variance over one step
            const Complex var = mu.imag() == 0.0 ? Complex(-std::expm1(-2.0 * mu.real() * dt) / (2.0 * mu.real()), 0.0)
                                                 : (1.0 - std::exp(-2.0 * mu * dt)) / (2.0 * mu);
            sdev[k] = std::sqrt(var);
        }
        decay_ = narrow_vec<Scalar>(decay);
        sdev_ = narrow_vec<Scalar>(sdev);

        Eigen::MatrixXcd synth(static_cast<Eigen::Index>(rec_points.size()), K);
        for (std::size_t i = 0; i < rec_points.size(); ++i) {
            synth.row(static_cast<Eigen::Index>(i)) = sys.modes().row(static_cast<Eigen::Index>(rec_points[i]));
        }
        synth_ = narrow<Scalar>(synth);

        const Eigen::MatrixXd basis = plan.noise.basis();
        if (scheme_ == Scheme::exact_diagonal) {
            const Eigen::MatrixXcd b = noise_coupling(sys, basis, plan.G, 0);
            const Eigen::Index n = std::min(b.rows(), b.cols());
            Eigen::MatrixXcd off = b;
            off.topLeftCorner(n, n).diagonal().setZero();
            const double scale = std::max(1e-300, b.cwiseAbs().maxCoeff());
            if (!sys.is_selfadjoint() || off.cwiseAbs().maxCoeff() > 1e-10 * scale) {
                fail(ErrorKind::invalid_argument,
                     "noise is not diagonal in the eigenbasis of a self-adjoint operator; use simulate_frozen_exponential");
            }
            Eigen::VectorXcd gains = Eigen::VectorXcd::Zero(K);
            gains.head(n) = b.diagonal().head(n);
            diag_gain_ = narrow_vec<Scalar>(gains).cwiseProduct(sdev_);
        } else if (plan.G.kind == GKind::time_varying_multiplication) {
            const Eigen::MatrixXcd proj = sys.domain().cell_weight() * sys.dual_modes().transpose();
            proj_ = narrow<Scalar>(proj);
            basis_ = basis;
        } else {
            coupling_ = sdev_.asDiagonal() * narrow<Scalar>(noise_coupling(sys, basis, plan.G, 0));
        }
    }

    /// One replica: recorded times x recorded points.
    Eigen::MatrixXd run(const IncrementSource& source) const {
        const int steps = plan_.steps;
        const int stride = plan_.record.time_stride;
        const int N = plan_.noise.truncation;
        const Eigen::Index K = decay_.size();
        const Eigen::Index rec_times = steps / stride + 1;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rec_times, synth_.rows());

        constexpr int block = 256;
        Eigen::MatrixXd z(N, block);
        Mat eta(K, block);
        Mat stored(K, block);
        Vec x = Vec::Zero(K);
        Eigen::Index stored_count = 0;
        Eigen::Index next_row = 1;

        auto flush = [&]() {
            if (stored_count == 0) {
                return;
            }
            const Mat u = synth_ * stored.leftCols(stored_count);
            out.middleRows(next_row, stored_count) = real_checked(u).transpose();
            next_row += stored_count;
            stored_count = 0;
        };

        for (int n0 = 0; n0 < steps; n0 += block) {
            const int b = std::min(block, steps - n0);
            source(n0, z.leftCols(b));
            if (scheme_ == Scheme::exact_diagonal) {
                const Eigen::Index n = std::min<Eigen::Index>(K, N);
                eta.leftCols(b).setZero();
                eta.topLeftCorner(n, b) = diag_gain_.head(n).asDiagonal() * z.topLeftCorner(n, b).template cast<Scalar>();
            } else if (proj_.size() > 0) {
                Eigen::MatrixXd y = basis_ * z.leftCols(b);
                for (int j = 0; j < b; ++j) {
                    y.col(j).array() *= plan_.G.g.row(n0 + j).transpose().array();
                }
                eta.leftCols(b) = sdev_.asDiagonal() * (proj_ * y.template cast<Scalar>());
            } else {
                eta.leftCols(b) = coupling_ * z.leftCols(b).template cast<Scalar>();
            }
            for (int j = 0; j < b; ++j) {
                x = decay_.cwiseProduct(x) + eta.col(j);
                if ((n0 + j + 1) % stride == 0) {
                    stored.col(stored_count++) = x;
                    if (stored_count == block) {
                        flush();
                    }
                }
            }
        }
        flush();
        return out;
    }

private:
    static Eigen::MatrixXd real_checked(const Mat& u) {
        if constexpr (std::is_same_v<Scalar, double>) {
            return u;
        } else {
            const double scale = std::max(1.0, u.real().cwiseAbs().maxCoeff());
            const double imag = u.imag().cwiseAbs().maxCoeff();
            if (imag > kImaginaryTolerance * scale) {
                fail(ErrorKind::numerical, "trajectory has imaginary part ", imag, " (conjugate-pair symmetry broken)");
            }
            return u.real();
        }
    }

    const SimulationPlan& plan_;
    Scheme scheme_;
    Vec decay_;
    Vec sdev_;
    Vec diag_gain_;
    Mat synth_;
    Mat coupling_;
    Mat proj_;
    Eigen::MatrixXd basis_;
};

/// Runs task(i) for i in [0, count) on `threads` workers; rethrows the
/// first failure.
inline void parallel_for(int count, int threads, const std::function<void(int)>& task) {
    const int workers = std::max(1, std::min(count, threads > 0 ? threads
                                                               : static_cast<int>(std::thread::hardware_concurrency())));
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(count);
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

inline PlanEcho echo_plan(const SimulationPlan& plan, Scheme scheme) {
    PlanEcho e;
    e.scheme = to_string(scheme);
    e.system_label = plan.sys->label();
    e.g_label = plan.G.label;
    e.g_kind = to_string(plan.G.kind);
    e.dim = plan.sys->domain().dim();
    e.grid_size = plan.sys->domain().grid_size();
    e.modes = static_cast<int>(plan.sys->size());
    e.noise_modes = plan.noise.truncation;
    e.alpha = plan.alpha;
    e.theta = plan.noise.theta;
    e.m = plan.G.m;
    e.q = plan.G.q;
    e.T = plan.T;
    e.steps = plan.steps;
    e.replicas = plan.replicas;
    e.time_stride = plan.record.time_stride;
    e.space_stride = plan.record.resolved_space_stride(plan.sys->domain());
    e.seed = plan.seed;
    e.effective_shift = plan.sys->effective_shift();
    e.selfadjoint = plan.sys->is_selfadjoint();
    return e;
}

template <typename Scalar>
TrajectoryEnsemble simulate_with(const SimulationPlan& plan, Scheme scheme) {
    TrajectoryEnsemble ens;
    const SpectralDomain& domain = plan.sys->domain();
    const int stride = plan.record.resolved_space_stride(domain);
    const auto rec = recorded_points(domain, stride, ens.space_shape);
    ens.points.resize(static_cast<Eigen::Index>(rec.size()), domain.dim());
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const auto xi = domain.point(rec[i]);
        for (int a = 0; a < domain.dim(); ++a) {
            ens.points(static_cast<Eigen::Index>(i), a) = xi[static_cast<std::size_t>(a)];
        }
    }
    ens.space_weight = std::pow(stride * domain.spacing(), domain.dim());
    for (int n = 0; n <= plan.steps; n += plan.record.time_stride) {
        ens.times.push_back(plan.T * n / plan.steps);
    }
    ens.plan = echo_plan(plan, scheme);

    const StepKernel<Scalar> kernel(plan, scheme, rec);
    ens.values.resize(static_cast<std::size_t>(plan.replicas));
    const double dt = plan.T / plan.steps;
    parallel_for(plan.replicas, plan.threads, [&](int r) {
        WienerIncrementSampler sampler(plan.noise.truncation, dt, plan.seed, static_cast<std::uint64_t>(r));
        const IncrementSource source = [&sampler](int, Eigen::Ref<Eigen::MatrixXd> out) {
            for (Eigen::Index j = 0; j < out.cols(); ++j) {
                sampler.next_standard(out.col(j));
            }
        };
        ens.values[static_cast<std::size_t>(r)] = kernel.run(source);
    });
    ens.check_invariants();
    return ens;
}

inline TrajectoryEnsemble simulate_scheme(const SimulationPlan& plan, Scheme scheme) {
    plan.validate();
    if (plan.sys->is_real()) {
        return simulate_with<double>(plan, scheme);
    }
    return simulate_with<Complex>(plan, scheme);
}

} // namespace detail

/// Exact OU recursion per mode; requires G constant and diagonal in the
/// eigenbasis of a self-adjoint operator.
inline TrajectoryEnsemble simulate_exact_diagonal(const SimulationPlan& plan) {
    if (plan.G.kind == GKind::time_varying_multiplication) {
        fail(ErrorKind::invalid_argument, "time-varying G is not diagonal; use simulate_frozen_exponential");
    }
    return detail::simulate_scheme(plan, Scheme::exact_diagonal);
}

/// G frozen at t_n on each step; per-mode exact one-step variance.
inline TrajectoryEnsemble simulate_frozen_exponential(const SimulationPlan& plan) {
    return detail::simulate_scheme(plan, Scheme::frozen_exponential);
}

/// True when the exact diagonal scheme applies to the plan.
inline bool exact_scheme_applies(const SimulationPlan& plan) {
    if (plan.G.kind == GKind::time_varying_multiplication || !plan.sys->is_selfadjoint()) {
        return false;
    }
    const Eigen::MatrixXcd b = detail::noise_coupling(*plan.sys, plan.noise.basis(), plan.G, 0);
    const Eigen::Index n = std::min(b.rows(), b.cols());
    Eigen::MatrixXcd off = b;
    off.topLeftCorner(n, n).diagonal().setZero();
    return off.cwiseAbs().maxCoeff() <= 1e-10 * std::max(1e-300, b.cwiseAbs().maxCoeff());
}

/// Exact scheme where it applies, frozen-coefficient scheme otherwise.
inline TrajectoryEnsemble simulate(const SimulationPlan& plan) {
    plan.validate();
    return exact_scheme_applies(plan) ? simulate_exact_diagonal(plan) : simulate_frozen_exponential(plan);
}

/// One replica driven by an explicit N x steps table of Normal(0, dt)
/// increments, recorded as in the ensemble simulators.
inline Eigen::MatrixXd simulate_replica(const SimulationPlan& plan, Scheme scheme, const Eigen::MatrixXd& increments) {
    plan.validate();
    require(increments.rows() == plan.noise.truncation && increments.cols() == plan.steps,
            "increment table must be ", plan.noise.truncation, " x ", plan.steps);
    std::vector<int> shape;
    const auto rec = detail::recorded_points(plan.sys->domain(),
                                             plan.record.resolved_space_stride(plan.sys->domain()), shape);
    const double inv_scale = 1.0 / std::sqrt(plan.T / plan.steps);
    const detail::IncrementSource source = [&](int n0, Eigen::Ref<Eigen::MatrixXd> out) {
        out = increments.middleCols(n0, out.cols()) * inv_scale;
    };
    if (plan.sys->is_real()) {
        return detail::StepKernel<double>(plan, scheme, rec).run(source);
    }
    return detail::StepKernel<Complex>(plan, scheme, rec).run(source);
}

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// (E int_0^T |u(t)|_{L^p}^q dt)^{1/q}: trapezoid in time, replica mean,
/// delta-method standard error.
inline MomentEstimate mean_mq_norm(const TrajectoryEnsemble& ens, double q, double p) {
    require(q >= 2.0, "M^q norm needs q >= 2, got ", q);
    require(ens.replicas() >= 1 && ens.time_count() >= 2, "ensemble needs replicas and at least two times");
    std::vector<double> integrals;
    integrals.reserve(static_cast<std::size_t>(ens.replicas()));
    for (const auto& v : ens.values) {
        double acc = 0.0;
        double prev = std::pow(lp_norm(v.row(0).transpose(), p, ens.space_weight), q);
        for (Eigen::Index n = 1; n < ens.time_count(); ++n) {
            const double cur = std::pow(lp_norm(v.row(n).transpose(), p, ens.space_weight), q);
            acc += 0.5 * (prev + cur) * (ens.times[static_cast<std::size_t>(n)] - ens.times[static_cast<std::size_t>(n - 1)]);
            prev = cur;
        }
        integrals.push_back(acc);
    }
    const double count = static_cast<double>(integrals.size());
    double mean = 0.0;
    for (double v : integrals) {
        mean += v;
    }
    mean /= count;
    double var = 0.0;
    for (double v : integrals) {
        var += (v - mean) * (v - mean);
    }
    var = integrals.size() > 1 ? var / (count - 1.0) : 0.0;
    MomentEstimate est;
    est.value = std::pow(mean, 1.0 / q);
    if (mean > 0.0) {
        est.std_error = std::sqrt(var / count) / (q * std::pow(mean, (q - 1.0) / q));
    }
    return est;
}

} // namespace hspde
