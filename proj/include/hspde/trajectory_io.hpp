#pragma once

#include "hspde/convolve.hpp"
#include "hspde/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

namespace hspde {

inline constexpr const char* kTrajectoryFormat = "hspde-traj-1";

// JSON has no infinity; non-finite exponents are stored as null.
inline nlohmann::json finite_or_null(double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline double number_or_inf(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline nlohmann::json to_json(const PlanEcho& e) {
    return {{"scheme", e.scheme},
            {"system", e.system_label},
            {"g_label", e.g_label},
            {"g_kind", e.g_kind},
            {"dim", e.dim},
            {"grid_size", e.grid_size},
            {"modes", e.modes},
            {"noise_modes", e.noise_modes},
            {"alpha", e.alpha},
            {"theta", e.theta},
            {"m", finite_or_null(e.m)},
            {"q", finite_or_null(e.q)},
            {"T", e.T},
            {"steps", e.steps},
            {"replicas", e.replicas},
            {"time_stride", e.time_stride},
            {"space_stride", e.space_stride},
            {"seed", e.seed},
            {"effective_shift", e.effective_shift},
            {"selfadjoint", e.selfadjoint}};
}

inline PlanEcho plan_echo_from_json(const nlohmann::json& j) {
    PlanEcho e;
    e.scheme = j.at("scheme").get<std::string>();
    e.system_label = j.at("system").get<std::string>();
    e.g_label = j.at("g_label").get<std::string>();
    e.g_kind = j.at("g_kind").get<std::string>();
    e.dim = j.at("dim").get<int>();
    e.grid_size = j.at("grid_size").get<int>();
    e.modes = j.at("modes").get<int>();
    e.noise_modes = j.at("noise_modes").get<int>();
    e.alpha = j.at("alpha").get<double>();
    e.theta = j.at("theta").get<double>();
    e.m = number_or_inf(j.at("m"));
    e.q = number_or_inf(j.at("q"));
    e.T = j.at("T").get<double>();
    e.steps = j.at("steps").get<int>();
    e.replicas = j.at("replicas").get<int>();
    e.time_stride = j.at("time_stride").get<int>();
    e.space_stride = j.at("space_stride").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.effective_shift = j.at("effective_shift").get<double>();
    e.selfadjoint = j.at("selfadjoint").get<bool>();
    return e;
}

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = __builtin_bswap64(v);
    }
    return v;
}

} // namespace detail

/// Writes `<base>.bin` (little-endian float64, replica-major, then time,
/// then point) and `<base>.json` (sidecar manifest).
inline void write_trajectories(const TrajectoryEnsemble& ens, const std::filesystem::path& base) {
    const auto bin = std::filesystem::path(base.string() + ".bin");
    const auto side = std::filesystem::path(base.string() + ".json");
    std::ofstream out(bin, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "cannot write '", bin.string(), "'");
    }
    for (const auto& v : ens.values) {
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v(n, j)));
                out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
            }
        }
    }
    if (!out) {
        fail(ErrorKind::io, "short write to '", bin.string(), "'");
    }

    nlohmann::json points = nlohmann::json::array();
    for (Eigen::Index i = 0; i < ens.points.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index a = 0; a < ens.points.cols(); ++a) {
            row.push_back(ens.points(i, a));
        }
        points.push_back(row);
    }
    const nlohmann::json meta = {{"format", kTrajectoryFormat},
                                 {"dtype", "float64"},
                                 {"byte_order", "little"},
                                 {"layout", "replica, time, point"},
                                 {"data_file", bin.filename().string()},
                                 {"shape", {ens.replicas(), ens.time_count(), ens.point_count()}},
                                 {"times", ens.times},
                                 {"points", points},
                                 {"space_shape", ens.space_shape},
                                 {"space_weight", ens.space_weight},
                                 {"seed", ens.plan.seed},
                                 {"scheme", ens.plan.scheme},
                                 {"plan", to_json(ens.plan)}};
    std::ofstream js(side);
    if (!js) {
        fail(ErrorKind::io, "cannot write '", side.string(), "'");
    }
    js << std::setw(2) << meta << '\n';
}

inline TrajectoryEnsemble read_trajectories(const std::filesystem::path& base) {
    const auto side = std::filesystem::path(base.string() + ".json");
    std::ifstream js(side);
    if (!js) {
        fail(ErrorKind::io, "cannot open trajectory sidecar '", side.string(), "'");
    }
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, "malformed sidecar '", side.string(), "': ", e.what());
    }
    if (meta.value("format", "") != kTrajectoryFormat) {
        fail(ErrorKind::io, "'", side.string(), "' is not an ", kTrajectoryFormat, " sidecar");
    }
    TrajectoryEnsemble ens;
    const auto shape = meta.at("shape").get<std::vector<std::int64_t>>();
    require(shape.size() == 3, "trajectory shape must have three entries");
    ens.times = meta.at("times").get<std::vector<double>>();
    ens.space_shape = meta.at("space_shape").get<std::vector<int>>();
    ens.space_weight = meta.at("space_weight").get<double>();
    ens.plan = plan_echo_from_json(meta.at("plan"));
    const auto pts = meta.at("points");
    ens.points.resize(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(ens.space_shape.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t a = 0; a < ens.space_shape.size(); ++a) {
            ens.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = pts[i][a].get<double>();
        }
    }
    if (static_cast<std::int64_t>(ens.times.size()) != shape[1] || ens.points.rows() != shape[2]) {
        fail(ErrorKind::io, "sidecar grids disagree with its shape");
    }

    const auto bin = side.parent_path() / meta.at("data_file").get<std::string>();
    std::ifstream in(bin, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "cannot open trajectory data '", bin.string(), "'");
    }
    ens.values.assign(static_cast<std::size_t>(shape[0]), Eigen::MatrixXd(shape[1], shape[2]));
    for (auto& v : ens.values) {
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                std::uint64_t bits = 0;
                if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
                    fail(ErrorKind::io, "trajectory data '", bin.string(), "' is truncated");
                }
                v(n, j) = std::bit_cast<double>(detail::to_little_endian(bits));
            }
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        fail(ErrorKind::io, "trajectory data '", bin.string(), "' has trailing bytes");
    }
    return ens;
}

/// CSV: replica, time_index, t, point_index, xi_0.., u. Intended for small
/// ensembles; `max_replicas` < 0 exports all.
inline void export_trajectory_csv(const TrajectoryEnsemble& ens, std::ostream& out, int max_replicas = -1) {
    out << "replica,time_index,t,point_index";
    for (int a = 0; a < ens.dim(); ++a) {
        out << ",xi_" << a;
    }
    out << ",u\n";
    out << std::setprecision(17);
    const int count = max_replicas < 0 ? ens.replicas() : std::min(max_replicas, ens.replicas());
    for (int r = 0; r < count; ++r) {
        const auto& v = ens.values[static_cast<std::size_t>(r)];
        for (Eigen::Index n = 0; n < v.rows(); ++n) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                out << r << ',' << n << ',' << ens.times[static_cast<std::size_t>(n)] << ',' << j;
                for (int a = 0; a < ens.dim(); ++a) {
                    out << ',' << ens.points(j, a);
                }
                out << ',' << v(n, j) << '\n';
            }
        }
    }
}

} // namespace hspde
