#include "tsgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsgen/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsgen {
namespace {

constexpr double kPi = 3.14159265358979323846;

void fit_scale_and_apply(Dataset& ds) {
    const std::size_t dim = ds.dim;
    ds.scale.min.assign(dim, std::numeric_limits<double>::infinity());
    ds.scale.max.assign(dim, -std::numeric_limits<double>::infinity());
    for (const auto& s : ds.samples) {
        for (std::size_t i = 0; i < s.length(); ++i) {
            for (std::size_t c = 0; c < dim; ++c) {
                ds.scale.min[c] = std::min(ds.scale.min[c], s.value(i, c));
                ds.scale.max[c] = std::max(ds.scale.max[c], s.value(i, c));
            }
        }
    }
    for (auto& s : ds.samples) {
        for (std::size_t i = 0; i < s.length(); ++i) {
            for (std::size_t c = 0; c < dim; ++c) {
                s.values[i * dim + c] = ds.scale.apply(s.value(i, c), c);
            }
        }
    }
}

// round half away from zero (std::round semantics, named for clarity at call sites)
std::size_t round_half_away(double x) {
    return static_cast<std::size_t>(std::llround(x));
}

std::vector<double> parse_csv_line(const std::string& line, std::size_t lineno, bool* ok) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    *ok = true;
    while (std::getline(ss, cell, ',')) {
        // trim whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        if (b == std::string::npos) {
            *ok = false;
            return row;
        }
        cell = cell.substr(b, e - b + 1);
        try {
            std::size_t used = 0;
            double v = std::stod(cell, &used);
            if (used != cell.size()) {
                *ok = false;
                return row;
            }
            row.push_back(v);
        } catch (const std::exception&) {
            *ok = false;
            return row;
        }
    }
    if (row.empty()) *ok = false;
    (void)lineno;
    return row;
}

std::vector<std::vector<double>> read_csv_rows(const std::string& path, bool* had_header,
                                               std::vector<std::string>* header_out) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open CSV file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    *had_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        bool ok = false;
        std::vector<double> row = parse_csv_line(line, lineno, &ok);
        if (!ok) {
            if (lineno == 1) {
                *had_header = true;  // single non-numeric header line
                if (header_out) {
                    header_out->clear();
                    std::stringstream ss(line);
                    std::string cell;
                    while (std::getline(ss, cell, ',')) {
                        const auto b = cell.find_first_not_of(" \t\r");
                        const auto e = cell.find_last_not_of(" \t\r");
                        header_out->push_back(b == std::string::npos
                                                  ? std::string()
                                                  : cell.substr(b, e - b + 1));
                    }
                }
                continue;
            }
            throw io_error("CSV parse failure at " + path + ":" + std::to_string(lineno));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw io_error("CSV column count mismatch at " + path + ":" +
                           std::to_string(lineno));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void SeriesSample::validate() const {
    if (times.empty()) throw value_error("sample: empty");
    if (dim == 0) throw value_error("sample: zero feature dim");
    if (values.size() != times.size() * dim) {
        throw value_error("sample: values size does not match len x dim");
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0 && !(times[i] > times[i - 1])) {
            throw value_error("sample: times must be strictly increasing");
        }
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw value_error("sample: non-finite value");
    }
}

std::vector<double> regular_time_grid(std::size_t n) {
    if (n < 2) throw value_error("regular_time_grid: need n >= 2");
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = kTimeEps +
               (1.0 - kTimeEps) * (static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return t;
}

Dataset gen_sines(std::size_t n, std::size_t dim, std::size_t length, Rng& rng) {
    if (n == 0) throw value_error("gen_sines: need n >= 1");
    if (length < 2) throw value_error("gen_sines: need length >= 2");
    if (dim == 0) throw value_error("gen_sines: need dim >= 1");

    Dataset ds;
    ds.dim = dim;
    ds.samples.reserve(n);
    const std::vector<double> grid = regular_time_grid(length);
    for (std::size_t k = 0; k < n; ++k) {
        SeriesSample s;
        s.dim = dim;
        s.times = grid;
        s.values.resize(length * dim);
        for (std::size_t c = 0; c < dim; ++c) {
            const double f = rng.uniform();
            const double phase = rng.uniform(-kPi, kPi);
            for (std::size_t i = 0; i < length; ++i) {
                s.values[i * dim + c] = std::sin(2.0 * kPi * f * static_cast<double>(i) + phase);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    fit_scale_and_apply(ds);
    for (const auto& s : ds.samples) s.validate();
    return ds;
}

Dataset load_csv_windows(const std::string& path, std::size_t window, std::size_t stride) {
    if (window < 2) throw value_error("load_csv_windows: window must be >= 2");
    if (stride == 0) throw value_error("load_csv_windows: stride must be >= 1");
    bool had_header = false;
    auto rows = read_csv_rows(path, &had_header, nullptr);
    if (rows.size() < window) {
        throw io_error("CSV " + path + " has " + std::to_string(rows.size()) +
                       " rows; need at least " + std::to_string(window));
    }
    Dataset ds;
    ds.dim = rows.front().size();
    const std::vector<double> grid = regular_time_grid(window);
    for (std::size_t start = 0; start + window <= rows.size(); start += stride) {
        SeriesSample s;
        s.dim = ds.dim;
        s.times = grid;
        s.values.reserve(window * ds.dim);
        for (std::size_t i = 0; i < window; ++i) {
            for (double v : rows[start + i]) s.values.push_back(v);
        }
        ds.samples.push_back(std::move(s));
    }
    fit_scale_and_apply(ds);
    for (const auto& s : ds.samples) s.validate();
    return ds;
}

Dataset drop_random(const Dataset& ds, double rate, Rng& rng) {
    if (!(rate > 0.0 && rate < 1.0)) throw value_error("drop_random: rate must be in (0,1)");
    Dataset out;
    out.dim = ds.dim;
    out.scale = ds.scale;
    out.samples.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        const std::size_t n = s.length();
        if (n < 4) throw value_error("drop_random: sample too short (need >= 4)");
        const std::size_t drop = round_half_away(rate * static_cast<double>(n));
        if (n - drop < 2) throw value_error("drop_random: would leave fewer than 2 points");

        // choose `drop` victims uniformly without replacement from {1..n-1}
        std::vector<std::size_t> idx(n - 1);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i + 1;
        for (std::size_t i = 0; i < drop; ++i) {
            std::size_t j = i + rng.uniform_int(idx.size() - i);
            std::swap(idx[i], idx[j]);
        }
        std::vector<std::size_t> kept(idx.begin() + static_cast<std::ptrdiff_t>(drop),
                                      idx.end());
        kept.push_back(0);
        std::sort(kept.begin(), kept.end());

        SeriesSample r;
        r.dim = s.dim;
        r.kept_idx = kept;
        const double last = static_cast<double>(kept.back());
        for (std::size_t k : kept) {
            r.times.push_back(kTimeEps + (1.0 - kTimeEps) * (static_cast<double>(k) / last));
            for (std::size_t c = 0; c < s.dim; ++c) r.values.push_back(s.value(k, c));
        }
        r.validate();
        out.samples.push_back(std::move(r));
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create dataset directory " + dir + ": " + ec.message());

    json meta;
    meta["dim"] = ds.dim;
    meta["n"] = ds.samples.size();
    meta["scale_min"] = ds.scale.min;
    meta["scale_max"] = ds.scale.max;
    {
        std::ofstream out(fs::path(dir) / "meta.json");
        if (!out) throw io_error("cannot write meta.json in " + dir);
        out << meta.dump(2) << "\n";
    }

    char name[32];
    for (std::size_t k = 0; k < ds.samples.size(); ++k) {
        const auto& s = ds.samples[k];
        std::snprintf(name, sizeof(name), "sample_%06zu.csv", k);
        std::ofstream out(fs::path(dir) / name);
        if (!out) throw io_error(std::string("cannot write ") + name + " in " + dir);
        // The time column is written whenever the stamps carry information a
        // regular grid would not, e.g. generated samples on custom grids.
        const bool irregular = !s.kept_idx.empty() || s.length() < 2 ||
                               s.times != regular_time_grid(s.length());
        if (irregular) out << "time";
        for (std::size_t c = 0; c < s.dim; ++c) {
            if (irregular || c > 0) out << ",";
            out << "f" << c;
        }
        out << "\n";
        char buf[64];
        for (std::size_t i = 0; i < s.length(); ++i) {
            if (irregular) {
                std::snprintf(buf, sizeof(buf), "%.17g", s.times[i]);
                out << buf;
            }
            for (std::size_t c = 0; c < s.dim; ++c) {
                if (irregular || c > 0) out << ",";
                std::snprintf(buf, sizeof(buf), "%.17g", s.value(i, c));
                out << buf;
            }
            out << "\n";
        }
    }
}

Dataset load_dataset(const std::string& dir) {
    const fs::path meta_path = fs::path(dir) / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw io_error("cannot open " + meta_path.string());
    json meta = json::parse(meta_in, nullptr, /*allow_exceptions=*/false);
    if (meta.is_discarded()) throw io_error("malformed meta.json in " + dir);

    Dataset ds;
    ds.dim = meta.at("dim").get<std::size_t>();
    ds.scale.min = meta.at("scale_min").get<std::vector<double>>();
    ds.scale.max = meta.at("scale_max").get<std::vector<double>>();

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string fname = entry.path().filename().string();
        if (fname.rfind("sample_", 0) == 0 && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        bool had_header = false;
        std::vector<std::string> header;
        auto rows = read_csv_rows(file.string(), &had_header, &header);
        if (rows.empty()) throw io_error("empty sample file " + file.string());
        const bool has_time = had_header && !header.empty() && header.front() == "time";
        const std::size_t dim = rows.front().size() - (has_time ? 1 : 0);
        if (dim != ds.dim) {
            throw io_error("sample " + file.string() + " has dim " + std::to_string(dim) +
                           ", dataset meta says " + std::to_string(ds.dim));
        }
        SeriesSample s;
        s.dim = dim;
        if (has_time) {
            // Irregular samples re-load with a synthetic kept_idx so downstream
            // code can tell them apart from regular ones.
            s.kept_idx.resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) s.kept_idx[i] = i;
        }
        for (const auto& row : rows) {
            if (has_time) {
                s.times.push_back(row[0]);
                s.values.insert(s.values.end(), row.begin() + 1, row.end());
            } else {
                s.values.insert(s.values.end(), row.begin(), row.end());
            }
        }
        if (!has_time) s.times = regular_time_grid(rows.size());
        s.validate();
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != meta.at("n").get<std::size_t>()) {
        throw io_error("dataset " + dir + " sample count mismatch with meta.json");
    }
    return ds;
}

}  // namespace tsgen
