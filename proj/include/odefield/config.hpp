#pragma once

/// Experiment configuration: a flat key-value file with typed sections.
///
/// Grammar (documented in the README):
///   - blank lines and lines starting with '#' are ignored
///   - '[name]' opens a section
///   - 'key = value' sets a key; list values are whitespace-separated
/// Unknown sections or keys are errors, as are missing required keys.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "odefield/csvio.hpp"
#include "odefield/errors.hpp"
#include "odefield/estimator.hpp"

namespace odefield {

enum class SweepAxis { none, nm, m_axis, n_axis };

struct CompareSpec {
    std::vector<std::size_t> dimensions;
    std::vector<std::size_t> degrees{1, 2, 3};
    std::vector<double> thresholds{0.02, 0.6, 0.1, 0.14, 0.18, 0.22, 0.26, 0.3};
    std::size_t library_cap = 3000;
    std::size_t repetitions = 10;
};

struct ExperimentConfig {
    // [experiment]
    std::string field;
    std::size_t n = 0, m = 0;
    double horizon = 0.0, sigma = 0.0;
    std::uint64_t seed = 0;
    std::size_t substeps = 20;
    unsigned workers = 0; // 0 = hardware concurrency

    // [sampler]
    std::vector<double> sampler_p, sampler_q; // broadcast to D when scalar

    // [calibration]
    bool calib_auto = true;
    double b = 1.0;
    CalibrationMode risk = CalibrationMode::pointwise;
    bool use_split = true;
    CalibrationParams explicit_params;

    // [envelope]
    std::size_t envelope_x = 100, envelope_t = 100;

    // [sweep]
    SweepAxis axis = SweepAxis::none;
    std::vector<std::size_t> axis_values;
    std::size_t repetitions = 10;

    // [compare]
    std::optional<CompareSpec> compare;

    // [output]
    std::string output_dir = "out";
    bool save_model = false;
    std::size_t grid_points = 20;
};

namespace detail {

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

inline std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

inline SectionMap read_sections(std::istream& in, const std::string& origin) {
    SectionMap sections;
    std::string line, current;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw config_error(origin + ":" + std::to_string(line_no) +
                                   ": malformed section header");
            current = trim(text.substr(1, text.size() - 2));
            sections.try_emplace(current);
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos || current.empty())
            throw config_error(origin + ":" + std::to_string(line_no) +
                               ": expected 'key = value' inside a section");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) throw config_error(origin + ":" + std::to_string(line_no) + ": empty key");
        sections[current][key] = value;
    }
    return sections;
}

class SectionReader {
public:
    SectionReader(SectionMap& sections, std::string name)
        : name_(std::move(name)) {
        const auto it = sections.find(name_);
        if (it != sections.end()) entries_ = &it->second;
    }

    bool present() const { return entries_ != nullptr; }

    std::optional<std::string> take(const std::string& key) {
        if (!entries_) return std::nullopt;
        const auto it = entries_->find(key);
        if (it == entries_->end()) return std::nullopt;
        std::string value = it->second;
        entries_->erase(it);
        return value;
    }

    std::string require(const std::string& key) {
        auto v = take(key);
        if (!v) throw config_error("[" + name_ + "] missing required key '" + key + "'");
        return *v;
    }

    void finish() const {
        if (entries_ && !entries_->empty())
            throw config_error("[" + name_ + "] unknown key '" + entries_->begin()->first + "'");
    }

private:
    std::string name_;
    std::map<std::string, std::string>* entries_ = nullptr;
};

inline double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw config_error(what + ": expected a number, got '" + s + "'");
    }
}

inline std::size_t to_size(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument("bad integer");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw config_error(what + ": expected a nonnegative integer, got '" + s + "'");
    }
}

inline std::uint64_t to_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("bad integer");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw config_error(what + ": expected an unsigned integer, got '" + s + "'");
    }
}

inline bool to_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw config_error(what + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> items;
    std::istringstream in(s);
    std::string item;
    while (in >> item) items.push_back(item);
    return items;
}

inline std::vector<double> to_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(to_double(item, what));
    if (out.empty()) throw config_error(what + ": list must be nonempty");
    return out;
}

inline std::vector<std::size_t> to_size_list(const std::string& s, const std::string& what) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) out.push_back(to_size(item, what));
    if (out.empty()) throw config_error(what + ": list must be nonempty");
    return out;
}

} // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin = "<config>") {
    std::istringstream in(text);
    auto sections = detail::read_sections(in, origin);
    ExperimentConfig cfg;

    {
        detail::SectionReader sec(sections, "experiment");
        if (!sec.present()) throw config_error("missing [experiment] section");
        cfg.field = sec.require("field");
        cfg.n = detail::to_size(sec.require("n"), "[experiment] n");
        cfg.m = detail::to_size(sec.require("m"), "[experiment] m");
        cfg.horizon = detail::to_double(sec.require("T"), "[experiment] T");
        cfg.sigma = detail::to_double(sec.require("sigma"), "[experiment] sigma");
        cfg.seed = detail::to_u64(sec.require("seed"), "[experiment] seed");
        if (auto v = sec.take("substeps"))
            cfg.substeps = detail::to_size(*v, "[experiment] substeps");
        if (auto v = sec.take("workers"))
            cfg.workers = static_cast<unsigned>(detail::to_size(*v, "[experiment] workers"));
        sec.finish();
        if (cfg.n < 1 || cfg.m < 1) throw config_error("[experiment] n and m must be positive");
        if (!(cfg.horizon > 0.0)) throw config_error("[experiment] T must be positive");
        if (cfg.sigma < 0.0) throw config_error("[experiment] sigma must be nonnegative");
        if (cfg.substeps < 1) throw config_error("[experiment] substeps must be positive");
    }
    {
        detail::SectionReader sec(sections, "sampler");
        if (!sec.present()) throw config_error("missing [sampler] section");
        cfg.sampler_p = detail::to_double_list(sec.require("p"), "[sampler] p");
        cfg.sampler_q = detail::to_double_list(sec.require("q"), "[sampler] q");
        sec.finish();
        if (cfg.sampler_p.size() != cfg.sampler_q.size())
            throw config_error("[sampler] p and q must have equal length");
    }
    {
        detail::SectionReader sec(sections, "calibration");
        std::string mode = "auto";
        if (auto v = sec.take("mode")) mode = *v;
        if (mode != "auto" && mode != "explicit")
            throw config_error("[calibration] mode must be auto or explicit");
        cfg.calib_auto = mode == "auto";
        if (auto v = sec.take("b")) cfg.b = detail::to_double(*v, "[calibration] b");
        if (cfg.b < 0.0) throw config_error("[calibration] b must be nonnegative");
        if (auto v = sec.take("risk")) {
            if (*v == "pointwise")
                cfg.risk = CalibrationMode::pointwise;
            else if (*v == "supnorm")
                cfg.risk = CalibrationMode::supnorm;
            else
                throw config_error("[calibration] risk must be pointwise or supnorm");
        }
        if (auto v = sec.take("split")) cfg.use_split = detail::to_bool(*v, "[calibration] split");
        if (!cfg.calib_auto) {
            cfg.explicit_params.k1 = detail::to_size(sec.require("k1"), "[calibration] k1");
            cfg.explicit_params.k2 = detail::to_size(sec.require("k2"), "[calibration] k2");
            cfg.explicit_params.k = detail::to_size(sec.require("k"), "[calibration] k");
            cfg.explicit_params.r = detail::to_size(sec.require("r"), "[calibration] r");
            cfg.explicit_params.b = cfg.b;
            cfg.explicit_params.mode = cfg.risk;
        }
        sec.finish();
    }
    {
        detail::SectionReader sec(sections, "envelope");
        if (auto v = sec.take("count_x"))
            cfg.envelope_x = detail::to_size(*v, "[envelope] count_x");
        if (auto v = sec.take("count_t"))
            cfg.envelope_t = detail::to_size(*v, "[envelope] count_t");
        sec.finish();
        if (cfg.envelope_x < 1 || cfg.envelope_t < 1)
            throw config_error("[envelope] counts must be >= 1");
    }
    {
        detail::SectionReader sec(sections, "sweep");
        if (sec.present()) {
            const std::string axis = sec.require("axis");
            if (axis == "nm")
                cfg.axis = SweepAxis::nm;
            else if (axis == "m")
                cfg.axis = SweepAxis::m_axis;
            else if (axis == "n")
                cfg.axis = SweepAxis::n_axis;
            else
                throw config_error("[sweep] axis must be one of nm, m, n");
            cfg.axis_values = detail::to_size_list(sec.require("values"), "[sweep] values");
            if (auto v = sec.take("repetitions"))
                cfg.repetitions = detail::to_size(*v, "[sweep] repetitions");
            if (cfg.repetitions < 1) throw config_error("[sweep] repetitions must be >= 1");
            sec.finish();
        }
    }
    {
        detail::SectionReader sec(sections, "compare");
        if (sec.present()) {
            CompareSpec spec;
            spec.dimensions = detail::to_size_list(sec.require("dimensions"), "[compare] dimensions");
            if (auto v = sec.take("degrees"))
                spec.degrees = detail::to_size_list(*v, "[compare] degrees");
            if (auto v = sec.take("thresholds"))
                spec.thresholds = detail::to_double_list(*v, "[compare] thresholds");
            if (auto v = sec.take("library_cap"))
                spec.library_cap = detail::to_size(*v, "[compare] library_cap");
            if (auto v = sec.take("repetitions"))
                spec.repetitions = detail::to_size(*v, "[compare] repetitions");
            if (spec.repetitions < 1) throw config_error("[compare] repetitions must be >= 1");
            sec.finish();
            cfg.compare = std::move(spec);
        }
    }
    {
        detail::SectionReader sec(sections, "output");
        if (auto v = sec.take("dir")) cfg.output_dir = *v;
        if (auto v = sec.take("save_model"))
            cfg.save_model = detail::to_bool(*v, "[output] save_model");
        if (auto v = sec.take("grid_points"))
            cfg.grid_points = detail::to_size(*v, "[output] grid_points");
        sec.finish();
        if (cfg.grid_points < 2) throw config_error("[output] grid_points must be >= 2");
    }

    for (const auto& [name, entries] : sections) {
        static const char* known[] = {"experiment", "sampler", "calibration",
                                      "envelope",   "sweep",   "compare",
                                      "output"};
        bool ok = false;
        for (const char* k : known) ok = ok || name == k;
        if (!ok) throw config_error("unknown section [" + name + "]");
        (void)entries;
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path.string());
}

/// Canonical dump of the effective configuration (defaults materialized,
/// overrides applied); its hash goes into every CSV as a provenance comment.
inline std::string canonical_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "experiment.field=" << cfg.field << '\n';
    out << "experiment.n=" << cfg.n << '\n';
    out << "experiment.m=" << cfg.m << '\n';
    out << "experiment.T=" << format_double(cfg.horizon) << '\n';
    out << "experiment.sigma=" << format_double(cfg.sigma) << '\n';
    out << "experiment.seed=" << cfg.seed << '\n';
    out << "experiment.substeps=" << cfg.substeps << '\n';
    auto list_d = [&out](const char* key, const std::vector<double>& v) {
        out << key << '=';
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
        out << '\n';
    };
    auto list_s = [&out](const char* key, const std::vector<std::size_t>& v) {
        out << key << '=';
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
        out << '\n';
    };
    list_d("sampler.p", cfg.sampler_p);
    list_d("sampler.q", cfg.sampler_q);
    out << "calibration.mode=" << (cfg.calib_auto ? "auto" : "explicit") << '\n';
    out << "calibration.b=" << format_double(cfg.b) << '\n';
    out << "calibration.risk="
        << (cfg.risk == CalibrationMode::pointwise ? "pointwise" : "supnorm") << '\n';
    out << "calibration.split=" << (cfg.use_split ? "true" : "false") << '\n';
    if (!cfg.calib_auto)
        out << "calibration.params=" << cfg.explicit_params.k1 << ' ' << cfg.explicit_params.k2
            << ' ' << cfg.explicit_params.k << ' ' << cfg.explicit_params.r << '\n';
    out << "envelope.count_x=" << cfg.envelope_x << '\n';
    out << "envelope.count_t=" << cfg.envelope_t << '\n';
    if (cfg.axis != SweepAxis::none) {
        out << "sweep.axis="
            << (cfg.axis == SweepAxis::nm ? "nm" : cfg.axis == SweepAxis::m_axis ? "m" : "n")
            << '\n';
        list_s("sweep.values", cfg.axis_values);
        out << "sweep.repetitions=" << cfg.repetitions << '\n';
    }
    if (cfg.compare) {
        list_s("compare.dimensions", cfg.compare->dimensions);
        list_s("compare.degrees", cfg.compare->degrees);
        list_d("compare.thresholds", cfg.compare->thresholds);
        out << "compare.library_cap=" << cfg.compare->library_cap << '\n';
        out << "compare.repetitions=" << cfg.compare->repetitions << '\n';
    }
    // output.dir is placement, not experiment identity; like the worker
    // count it must not perturb the hash.
    out << "output.save_model=" << (cfg.save_model ? "true" : "false") << '\n';
    out << "output.grid_points=" << cfg.grid_points << '\n';
    return out.str();
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a64(canonical_config(cfg));
}

} // namespace odefield
