#pragma once

/// Domain types shared by every other module: the regular temporal grid,
/// trajectory datasets, the spatial data split, and dataset serialization.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "odefield/csvio.hpp"
#include "odefield/errors.hpp"

namespace odefield {

/// Regular observation times t_j = j*T/m for j = 1..m on (0, T].
/// There is no observation at t = 0; the initial point is not a sample.
struct TemporalGrid {
    double horizon = 0.0;       // T
    std::size_t size = 0;       // m
    std::vector<double> times;  // t_1 .. t_m, strictly increasing

    double step() const { return horizon / static_cast<double>(size); }
    double time(std::size_t j) const { return times[j]; }  // 0-based: t_{j+1}
};

inline TemporalGrid make_grid(double horizon, std::size_t m) {
    if (!(horizon > 0.0)) throw std::invalid_argument("make_grid: horizon must be positive");
    if (m == 0) throw std::invalid_argument("make_grid: m must be at least 1");
    TemporalGrid grid;
    grid.horizon = horizon;
    grid.size = m;
    grid.times.resize(m);
    for (std::size_t j = 0; j < m; ++j)
        grid.times[j] = (horizon * static_cast<double>(j + 1)) / static_cast<double>(m);
    return grid;
}

/// Noisy discrete trajectories Y[i][j] in R^D with their initial points.
/// Immutable after construction by convention; nothing mutates a dataset
/// once generate_dataset (or a loader) returns it.
struct TrajectoryDataset {
    std::size_t ambient_dim = 0;    // D
    std::size_t n_trajectories = 0; // n
    TemporalGrid grid;
    std::vector<double> initial_points; // n * D, row-major
    std::vector<double> observations;   // n * m * D in [i][j][component] order
    double sigma = 0.0;
    std::uint64_t seed = 0;

    std::span<const double> initial(std::size_t i) const {
        return {initial_points.data() + i * ambient_dim, ambient_dim};
    }
    std::span<const double> observation(std::size_t i, std::size_t j) const {
        return {observations.data() + (i * grid.size + j) * ambient_dim, ambient_dim};
    }
};

/// Positional halves {1..floor(n/2)} and {floor(n/2)+1..n}, 0-based in code.
/// The halves are disjoint; the split is deterministic (no shuffling).
struct DataSplit {
    std::vector<std::size_t> first_half;
    std::vector<std::size_t> second_half;
};

inline DataSplit make_split(std::size_t n) {
    if (n < 2)
        throw insufficient_data_error("split requires at least 2 trajectories, got " +
                                      std::to_string(n));
    DataSplit split;
    const std::size_t half = n / 2;
    split.first_half.resize(half);
    split.second_half.resize(n - half);
    std::iota(split.first_half.begin(), split.first_half.end(), std::size_t{0});
    std::iota(split.second_half.begin(), split.second_half.end(), half);
    return split;
}

inline DataSplit split_dataset(const TrajectoryDataset& ds) {
    return make_split(ds.n_trajectories);
}

/// A point x = phi(x_tilde, t) on the solution envelope, with the true field
/// value recorded for error evaluation (available only in simulation).
struct EnvelopePoint {
    std::vector<double> location;       // x
    std::vector<double> source_initial; // x_tilde
    double source_time = 0.0;           // t in [0, T]
    std::vector<double> true_field;     // f(x)
};

// ---------------------------------------------------------------------------
// Serialization: a self-describing JSON container plus a flat CSV export.

inline nlohmann::json dataset_to_json(const TrajectoryDataset& ds) {
    nlohmann::json j;
    j["format"] = "odefield-dataset";
    j["version"] = 1;
    j["D"] = ds.ambient_dim;
    j["n"] = ds.n_trajectories;
    j["m"] = ds.grid.size;
    j["T"] = ds.grid.horizon;
    j["sigma"] = ds.sigma;
    j["seed"] = ds.seed;
    j["initial_points"] = ds.initial_points;
    j["observations"] = ds.observations;
    return j;
}

inline TrajectoryDataset dataset_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "odefield-dataset")
        throw std::invalid_argument("dataset_from_json: not an odefield dataset container");
    TrajectoryDataset ds;
    ds.ambient_dim = j.at("D").get<std::size_t>();
    ds.n_trajectories = j.at("n").get<std::size_t>();
    ds.grid = make_grid(j.at("T").get<double>(), j.at("m").get<std::size_t>());
    ds.sigma = j.at("sigma").get<double>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.initial_points = j.at("initial_points").get<std::vector<double>>();
    ds.observations = j.at("observations").get<std::vector<double>>();
    if (ds.initial_points.size() != ds.n_trajectories * ds.ambient_dim)
        throw std::invalid_argument("dataset_from_json: initial_points size mismatch");
    if (ds.observations.size() != ds.n_trajectories * ds.grid.size * ds.ambient_dim)
        throw std::invalid_argument("dataset_from_json: observations size mismatch");
    return ds;
}

inline void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << dataset_to_json(ds) << '\n';
}

inline TrajectoryDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return dataset_from_json(j);
}

/// One row per (trajectory, time index): traj_id, time_index, time, comp_0..comp_{D-1}.
inline void write_dataset_csv(CsvWriter& csv, const TrajectoryDataset& ds) {
    std::vector<std::string> header = {"traj_id", "time_index", "time"};
    for (std::size_t c = 0; c < ds.ambient_dim; ++c)
        header.push_back("comp_" + std::to_string(c));
    csv.row(header);
    std::vector<std::string> row;
    for (std::size_t i = 0; i < ds.n_trajectories; ++i) {
        for (std::size_t j = 0; j < ds.grid.size; ++j) {
            row.clear();
            row.push_back(std::to_string(i));
            row.push_back(std::to_string(j + 1));
            row.push_back(format_double(ds.grid.time(j)));
            const auto obs = ds.observation(i, j);
            for (const double v : obs) row.push_back(format_double(v));
            csv.row(row);
        }
    }
}

} // namespace odefield
