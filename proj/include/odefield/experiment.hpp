#pragma once

/// Configuration-driven orchestration of the benchmark experiments:
/// single estimation runs, convergence sweeps, and the dimension comparison
/// against the SINDy baseline.  All numeric outputs land in CSV files; wall
/// clock measurements go to a separate timings.csv so the data CSVs stay a
/// pure function of the configuration.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "odefield/baseline.hpp"
#include "odefield/config.hpp"
#include "odefield/csvio.hpp"
#include "odefield/estimator.hpp"
#include "odefield/metrics.hpp"
#include "odefield/parallel.hpp"
#include "odefield/simulate.hpp"

namespace odefield {

namespace detail {

inline SegmentSampler broadcast_sampler(const ExperimentConfig& cfg, std::size_t dim) {
    std::vector<double> p = cfg.sampler_p, q = cfg.sampler_q;
    if (p.size() == 1 && dim > 1) {
        p.assign(dim, cfg.sampler_p[0]);
        q.assign(dim, cfg.sampler_q[0]);
    }
    if (p.size() != dim)
        throw config_error("[sampler] endpoints have dimension " + std::to_string(p.size()) +
                           " but the field needs " + std::to_string(dim));
    return segment_sampler(std::move(p), std::move(q));
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::string params_detail(const CalibrationParams& p) {
    return "k1=" + std::to_string(p.k1) + " k2=" + std::to_string(p.k2) +
           " k=" + std::to_string(p.k) + " r=" + std::to_string(p.r);
}

inline unsigned effective_workers(const ExperimentConfig& cfg) {
    return cfg.workers == 0 ? default_workers() : cfg.workers;
}

} // namespace detail

/// One estimation run at a given (n, m, seed): dataset, model, envelope
/// evaluation.  Returned envelope/estimates let callers write reports or
/// compute further statistics without re-running.
struct SingleRunResult {
    CalibrationParams params;
    ErrorReport report;
    std::vector<EnvelopePoint> envelope;
    std::vector<double> estimates;
    double build_seconds = 0.0;
    double query_seconds = 0.0;
    bool calib_clamped = false;
};

namespace detail {

inline SingleRunResult run_pipeline(const ExperimentConfig& cfg, const VectorField& field,
                                    std::size_t n, std::size_t m, std::uint64_t seed,
                                    unsigned workers, const std::string& tag,
                                    VectorFieldModel* model_out = nullptr) {
    const auto sampler = broadcast_sampler(cfg, field.ambient_dim);
    const IntegratorConfig integ{cfg.substeps};
    const auto grid = make_grid(cfg.horizon, m);
    const auto ds = generate_dataset(field, sampler, n, grid, cfg.sigma, integ, seed);

    SingleRunResult result;
    if (cfg.calib_auto) {
        CalibrationDiagnostics diag;
        result.params = calibrate(n, m, cfg.b, cfg.risk, &diag);
        result.calib_clamped = diag.clamped;
    } else {
        result.params = cfg.explicit_params;
    }

    const auto t_build = std::chrono::steady_clock::now();
    auto model = build_model(ds, result.params,
                             cfg.use_split ? SplitPolicy::split : SplitPolicy::none, workers);
    result.build_seconds = seconds_since(t_build);

    result.envelope = sample_envelope(field, sampler, cfg.horizon, cfg.envelope_x,
                                      cfg.envelope_t, integ, seed);
    const auto locations = envelope_locations(result.envelope, field.ambient_dim);
    const auto truths = envelope_truths(result.envelope, field.ambient_dim);

    const auto t_query = std::chrono::steady_clock::now();
    result.estimates = query_batch(model, locations, result.envelope.size(), workers);
    result.query_seconds = seconds_since(t_query);

    result.report = normalized_error(result.estimates, truths, result.envelope.size(),
                                     field.ambient_dim);
    result.report.n = n;
    result.report.m = m;
    result.report.sigma = cfg.sigma;
    result.report.seed = seed;
    result.report.tag = tag;
    if (model_out) *model_out = std::move(model);
    return result;
}

inline void write_hash_comment(CsvWriter& csv, const ExperimentConfig& cfg) {
    csv.comment("config_hash=" + hex64(config_hash(cfg)));
}

} // namespace detail

/// `estimate`: run once at the configured (n, m, seed), write report.csv,
/// a 2-D vector-field grid CSV when D = 2, and timings.csv.
inline SingleRunResult run_single(const ExperimentConfig& cfg, bool write_files = true) {
    const auto field = field_from_name(cfg.field);
    const unsigned workers = detail::effective_workers(cfg);
    VectorFieldModel model;
    auto result = detail::run_pipeline(cfg, field, cfg.n, cfg.m, cfg.seed, workers,
                                       cfg.use_split ? "ours-split" : "ours-nosplit", &model);
    if (result.calib_clamped)
        std::cerr << "note: calibration clamped to structural bounds ("
                  << detail::params_detail(result.params) << ")\n";

    if (write_files) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        {
            CsvWriter csv(dir / "report.csv");
            detail::write_hash_comment(csv, cfg);
            write_error_report_csv(csv, result.envelope, result.estimates, result.report);
        }
        if (field.ambient_dim == 2) {
            // Lattice over the bounding box of the observations, for quiver
            // plots of estimated versus true field.
            const auto& obs = model.dataset.observations;
            double lo[2] = {obs[0], obs[1]}, hi[2] = {obs[0], obs[1]};
            for (std::size_t i = 0; i < obs.size(); i += 2)
                for (int c = 0; c < 2; ++c) {
                    lo[c] = std::min(lo[c], obs[i + static_cast<std::size_t>(c)]);
                    hi[c] = std::max(hi[c], obs[i + static_cast<std::size_t>(c)]);
                }
            const std::size_t g = cfg.grid_points;
            std::vector<double> lattice;
            lattice.reserve(g * g * 2);
            for (std::size_t iy = 0; iy < g; ++iy)
                for (std::size_t ix = 0; ix < g; ++ix) {
                    const double fx = static_cast<double>(ix) / static_cast<double>(g - 1);
                    const double fy = static_cast<double>(iy) / static_cast<double>(g - 1);
                    lattice.push_back(lo[0] + fx * (hi[0] - lo[0]));
                    lattice.push_back(lo[1] + fy * (hi[1] - lo[1]));
                }
            const auto grid_estimates = query_batch(model, lattice, g * g, workers);
            CsvWriter csv(dir / "field_grid.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"x_0", "x_1", "fhat_0", "fhat_1", "f_0", "f_1"});
            for (std::size_t p = 0; p < g * g; ++p) {
                const std::span<const double> x{lattice.data() + p * 2, 2};
                const auto truth = field(x);
                csv.row({format_double(x[0]), format_double(x[1]),
                         format_double(grid_estimates[p * 2]),
                         format_double(grid_estimates[p * 2 + 1]), format_double(truth[0]),
                         format_double(truth[1])});
            }
        }
        if (cfg.save_model) save_model(dir / "model.json", model);
        {
            CsvWriter csv(dir / "timings.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"stage", "seconds"});
            csv.row({"build", format_double(result.build_seconds)});
            csv.row({"query", format_double(result.query_seconds)});
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Sweeps over n, m, or both

struct SweepRow {
    std::size_t cell = 0, rep = 0;
    std::size_t n = 0, m = 0;
    std::uint64_t seed = 0;
    CalibrationParams params;
    double mean_error = 0.0;
    std::size_t excluded = 0;
    double seconds = 0.0;
    bool clamped = false;
};

struct SweepCellSummary {
    std::size_t value = 0, n = 0, m = 0;
    double mean = 0.0; // mean over repetitions of the per-rep mean error
    double sd = 0.0;   // sample standard deviation across repetitions
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepCellSummary> summary;
};

/// `sweep`: q repetitions per axis value with per-repetition derived seeds
/// and automatic calibration per (n, m).
inline SweepResult run_sweep(const ExperimentConfig& cfg, bool write_files = true) {
    if (cfg.axis == SweepAxis::none) throw config_error("sweep requires a [sweep] section");
    const auto field = field_from_name(cfg.field);
    const std::size_t cells = cfg.axis_values.size();
    const std::size_t reps = cfg.repetitions;

    SweepResult result;
    result.rows.resize(cells * reps);
    // Parallelism lives at the task level; each task runs single-threaded.
    parallel_for(cells * reps, detail::effective_workers(cfg), [&](std::size_t task) {
        const std::size_t cell = task / reps;
        const std::size_t rep = task % reps;
        const std::size_t value = cfg.axis_values[cell];
        const std::size_t n = cfg.axis == SweepAxis::m_axis ? cfg.n : value;
        const std::size_t m = cfg.axis == SweepAxis::n_axis ? cfg.m : value;
        const std::uint64_t seed = derive_seed(cfg.seed, cell, rep);
        auto run = detail::run_pipeline(cfg, field, n, m, seed, 1,
                                        cfg.use_split ? "ours-split" : "ours-nosplit");
        SweepRow row;
        row.cell = cell;
        row.rep = rep;
        row.n = n;
        row.m = m;
        row.seed = seed;
        row.params = run.params;
        row.mean_error = run.report.mean;
        row.excluded = run.report.excluded;
        row.seconds = run.build_seconds + run.query_seconds;
        row.clamped = run.calib_clamped;
        result.rows[task] = row;
    });

    for (std::size_t cell = 0; cell < cells; ++cell) {
        SweepCellSummary s;
        s.value = cfg.axis_values[cell];
        s.n = result.rows[cell * reps].n;
        s.m = result.rows[cell * reps].m;
        double sum = 0.0;
        for (std::size_t rep = 0; rep < reps; ++rep) sum += result.rows[cell * reps + rep].mean_error;
        s.mean = sum / static_cast<double>(reps);
        double ss = 0.0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            const double d = result.rows[cell * reps + rep].mean_error - s.mean;
            ss += d * d;
        }
        s.sd = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
        result.summary.push_back(s);
    }

    for (const auto& row : result.rows)
        if (row.clamped)
            std::cerr << "note: calibration clamped at n=" << row.n << " m=" << row.m << " ("
                      << detail::params_detail(row.params) << ")\n";

    if (write_files) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        {
            CsvWriter csv(dir / "sweep.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"axis_value", "n", "m", "rep", "seed", "k1", "k2", "k", "r", "mean_error",
                     "excluded"});
            for (const auto& row : result.rows)
                csv.row({std::to_string(cfg.axis_values[row.cell]), std::to_string(row.n),
                         std::to_string(row.m), std::to_string(row.rep), std::to_string(row.seed),
                         std::to_string(row.params.k1), std::to_string(row.params.k2),
                         std::to_string(row.params.k), std::to_string(row.params.r),
                         format_double(row.mean_error), std::to_string(row.excluded)});
        }
        {
            CsvWriter csv(dir / "sweep_summary.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"axis_value", "n", "m", "mean_error", "sd_error"});
            for (const auto& s : result.summary)
                csv.row({std::to_string(s.value), std::to_string(s.n), std::to_string(s.m),
                         format_double(s.mean), format_double(s.sd)});
        }
        {
            CsvWriter csv(dir / "timings.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"axis_value", "rep", "seconds"});
            for (const auto& row : result.rows)
                csv.row({std::to_string(cfg.axis_values[row.cell]), std::to_string(row.rep),
                         format_double(row.seconds)});
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dimension comparison against SINDy

struct CompareRow {
    std::string method;
    std::size_t dim = 0, rep = 0;
    std::uint64_t seed = 0;
    double mean_error = 0.0;
    std::size_t excluded = 0;
    bool skipped = false;
    std::string detail;
    double seconds = 0.0;
};

struct CompareResult {
    std::vector<CompareRow> rows;
};

/// `compare`: for each ambient dimension, run our estimator with and without
/// splitting plus SINDy at each polynomial degree over the threshold grid.
/// Tasks run serially so wall-clock comparisons are not distorted by outer
/// parallelism.
inline CompareResult run_dimension_compare(const ExperimentConfig& cfg, bool write_files = true) {
    if (!cfg.compare) throw config_error("compare requires a [compare] section");
    if (cfg.field != "vdp-highdim")
        throw config_error("compare requires field = vdp-highdim (dimension-parameterized)");
    const CompareSpec& spec = *cfg.compare;
    const unsigned workers = detail::effective_workers(cfg);
    const IntegratorConfig integ{cfg.substeps};

    CompareResult result;
    for (std::size_t cell = 0; cell < spec.dimensions.size(); ++cell) {
        const std::size_t dim = spec.dimensions[cell];
        const auto field = highdim_vdp_field(dim);
        const auto sampler = detail::broadcast_sampler(cfg, dim);
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
            const std::uint64_t seed = derive_seed(cfg.seed, cell, rep);
            const auto grid = make_grid(cfg.horizon, cfg.m);
            const auto ds = generate_dataset(field, sampler, cfg.n, grid, cfg.sigma, integ, seed);
            const auto envelope = sample_envelope(field, sampler, cfg.horizon, cfg.envelope_x,
                                                  cfg.envelope_t, integ, seed);
            const auto locations = envelope_locations(envelope, dim);
            const auto truths = envelope_truths(envelope, dim);
            const auto params = calibrate(cfg.n, cfg.m, cfg.b, cfg.risk);

            auto evaluate = [&](std::span<const double> estimates) {
                return normalized_error(estimates, truths, envelope.size(), dim);
            };

            for (const SplitPolicy policy : {SplitPolicy::split, SplitPolicy::none}) {
                CompareRow row;
                row.method = policy == SplitPolicy::split ? "ours-split" : "ours-nosplit";
                row.dim = dim;
                row.rep = rep;
                row.seed = seed;
                row.detail = detail::params_detail(params);
                const auto start = std::chrono::steady_clock::now();
                const auto model = build_model(ds, params, policy, workers);
                const auto estimates = query_batch(model, locations, envelope.size(), workers);
                row.seconds = detail::seconds_since(start);
                const auto report = evaluate(estimates);
                row.mean_error = report.mean;
                row.excluded = report.excluded;
                result.rows.push_back(row);
            }

            std::vector<std::size_t> all(ds.n_trajectories);
            std::iota(all.begin(), all.end(), std::size_t{0});
            for (const std::size_t degree : spec.degrees) {
                CompareRow row;
                row.method = "sindy-deg" + std::to_string(degree);
                row.dim = dim;
                row.rep = rep;
                row.seed = seed;
                const std::size_t terms = binomial(dim + degree, degree);
                if (terms > spec.library_cap) {
                    row.skipped = true;
                    row.detail = "library_size=" + std::to_string(terms) + " exceeds cap";
                    result.rows.push_back(row);
                    continue;
                }
                const auto start = std::chrono::steady_clock::now();
                const auto derivs = estimate_derivatives(ds, all, params.k);
                const auto fit = sindy_fit(ds, derivs, degree, spec.thresholds, envelope, 1e-8,
                                           20, workers);
                const auto estimates =
                    eval_sparse_field_batch(fit.model, fit.library, locations, envelope.size());
                row.seconds = detail::seconds_since(start);
                const auto report = evaluate(estimates);
                row.mean_error = report.mean;
                row.excluded = report.excluded;
                row.detail = "lambda=" + format_double(fit.threshold);
                result.rows.push_back(row);
            }
        }
    }

    if (write_files) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        {
            CsvWriter csv(dir / "compare.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"method", "D", "rep", "seed", "mean_error", "excluded", "status", "detail"});
            for (const auto& row : result.rows)
                csv.row({row.method, std::to_string(row.dim), std::to_string(row.rep),
                         std::to_string(row.seed),
                         row.skipped ? "" : format_double(row.mean_error),
                         std::to_string(row.excluded), row.skipped ? "skipped" : "ok",
                         row.detail});
        }
        {
            CsvWriter csv(dir / "timings.csv");
            detail::write_hash_comment(csv, cfg);
            csv.row({"method", "D", "rep", "seconds"});
            for (const auto& row : result.rows)
                if (!row.skipped)
                    csv.row({row.method, std::to_string(row.dim), std::to_string(row.rep),
                             format_double(row.seconds)});
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dataset generation and envelope export

inline TrajectoryDataset run_generate(const ExperimentConfig& cfg, bool write_files = true) {
    const auto field = field_from_name(cfg.field);
    const auto sampler = detail::broadcast_sampler(cfg, field.ambient_dim);
    const auto ds = generate_dataset(field, sampler, cfg.n, make_grid(cfg.horizon, cfg.m),
                                     cfg.sigma, IntegratorConfig{cfg.substeps}, cfg.seed);
    if (write_files) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        save_dataset(dir / "dataset.json", ds);
        CsvWriter csv(dir / "dataset.csv");
        detail::write_hash_comment(csv, cfg);
        write_dataset_csv(csv, ds);
    }
    return ds;
}

inline std::vector<EnvelopePoint> run_envelope(const ExperimentConfig& cfg,
                                               bool write_files = true) {
    const auto field = field_from_name(cfg.field);
    const auto sampler = detail::broadcast_sampler(cfg, field.ambient_dim);
    const auto envelope = sample_envelope(field, sampler, cfg.horizon, cfg.envelope_x,
                                          cfg.envelope_t, IntegratorConfig{cfg.substeps},
                                          cfg.seed);
    if (write_files) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        CsvWriter csv(dir / "envelope.csv");
        detail::write_hash_comment(csv, cfg);
        const std::size_t dim = field.ambient_dim;
        std::vector<std::string> header = {"point_id", "t"};
        for (std::size_t c = 0; c < dim; ++c) header.push_back("x0_" + std::to_string(c));
        for (std::size_t c = 0; c < dim; ++c) header.push_back("x_" + std::to_string(c));
        for (std::size_t c = 0; c < dim; ++c) header.push_back("f_" + std::to_string(c));
        csv.row(header);
        std::vector<std::string> row;
        for (std::size_t p = 0; p < envelope.size(); ++p) {
            row.clear();
            row.push_back(std::to_string(p));
            row.push_back(format_double(envelope[p].source_time));
            for (const double v : envelope[p].source_initial) row.push_back(format_double(v));
            for (const double v : envelope[p].location) row.push_back(format_double(v));
            for (const double v : envelope[p].true_field) row.push_back(format_double(v));
            csv.row(row);
        }
    }
    return envelope;
}

} // namespace odefield
