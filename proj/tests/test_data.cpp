#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "tsgen/data.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/rng.hpp"

using namespace tsgen;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("tsgen_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("sine generator: ranges, scaling, determinism") {
    Rng rng(7);
    Dataset ds = gen_sines(50, 5, 24, rng);
    REQUIRE(ds.size() == 50);
    CHECK(ds.dim == 5);
    for (const auto& s : ds.samples) {
        CHECK(s.length() == 24);
        CHECK(s.times.front() == kTimeEps);
        CHECK(s.times.back() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(s.kept_idx.empty());
        for (double v : s.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    // raw sine range pins the fitted scale inside [-1, 1]
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(ds.scale.min[c] >= -1.0);
        CHECK(ds.scale.max[c] <= 1.0);
        CHECK(ds.scale.max[c] > ds.scale.min[c]);
    }

    Rng rng2(7);
    Dataset ds2 = gen_sines(50, 5, 24, rng2);
    CHECK(ds2.samples[13].values == ds.samples[13].values);

    Rng rng3(8);
    Dataset ds3 = gen_sines(50, 5, 24, rng3);
    CHECK(ds3.samples[13].values != ds.samples[13].values);
}

TEST_CASE("sine closed form before scaling") {
    // x_i = sin(2*pi*f*i + phase): with f=0.25, phase=0 the first three values
    // are 0, 1, ~0.  gen_sines draws f and phase internally, so check the raw
    // formula the generator implements via a 1-sample dataset's *scaled* values
    // mapped back through the fitted scale.
    Rng rng(1234);
    Dataset ds = gen_sines(1, 1, 8, rng);
    // reproduce the internal draws with an identical stream
    Rng replay(1234);
    const double f = replay.uniform();
    const double phase = replay.uniform(-3.14159265358979323846, 3.14159265358979323846);
    for (std::size_t i = 0; i < 8; ++i) {
        double raw = std::sin(2.0 * 3.14159265358979323846 * f * static_cast<double>(i) + phase);
        double unscaled = ds.scale.invert(ds.samples[0].value(i, 0), 0);
        CHECK(unscaled == doctest::Approx(raw).epsilon(1e-9));
    }
}

TEST_CASE("scale round-trips and guards degenerate features") {
    FeatureScale sc;
    sc.min = {2.0};
    sc.max = {6.0};
    double y = sc.apply(4.0, 0);
    CHECK(sc.invert(y, 0) == doctest::Approx(4.0).epsilon(1e-9));

    FeatureScale flat;
    flat.min = {3.0};
    flat.max = {3.0};
    CHECK(flat.apply(3.0, 0) == 0.0);  // min==max guarded by +1e-7 denominator
}

TEST_CASE("csv windowing: counts, header skip, parse errors") {
    fs::path dir = temp_dir("csv");
    fs::path file = dir / "raw.csv";
    {
        std::ofstream out(file);
        out << "alpha,beta\n";  // header
        for (int i = 0; i < 30; ++i) out << i << "," << 2 * i << "\n";
    }
    Dataset ds = load_csv_windows(file.string(), 24, 1);
    CHECK(ds.size() == 7);  // 30 - 24 + 1
    CHECK(ds.dim == 2);
    for (const auto& s : ds.samples) CHECK(s.length() == 24);
    // linear ramp scales to exact [0,1] endpoints on the first window's feature 0
    CHECK(ds.scale.min[0] == 0.0);
    CHECK(ds.scale.max[0] == 29.0);

    Dataset strided = load_csv_windows(file.string(), 24, 3);
    CHECK(strided.size() == 3);  // starts 0,3,6

    {
        std::ofstream out(file, std::ios::app);
        out << "oops,not_numeric\n";
    }
    CHECK_THROWS_AS(load_csv_windows(file.string(), 24, 1), io_error);

    fs::path small = dir / "small.csv";
    {
        std::ofstream out(small);
        out << "1,2\n3,4\n";
    }
    CHECK_THROWS_AS(load_csv_windows(small.string(), 24, 1), io_error);
    CHECK_THROWS_AS(load_csv_windows((dir / "missing.csv").string(), 24, 1), io_error);
    fs::remove_all(dir);
}

TEST_CASE("drop_random keeps the anchor and the advertised count") {
    Rng rng(5);
    Dataset ds = gen_sines(20, 3, 24, rng);
    Rng drop_rng(99);
    Dataset irr = drop_random(ds, 0.3, drop_rng);
    REQUIRE(irr.size() == 20);
    for (const auto& s : irr.samples) {
        CHECK(s.length() == 17);  // 24 - round(7.2) = 17
        CHECK(s.kept_idx.front() == 0);
        CHECK(s.times.front() == doctest::Approx(kTimeEps).epsilon(1e-15));
        CHECK(s.times.back() == doctest::Approx(1.0).epsilon(1e-15));
        for (std::size_t i = 1; i < s.length(); ++i) {
            CHECK(s.times[i] > s.times[i - 1]);
            CHECK(s.kept_idx[i] > s.kept_idx[i - 1]);
        }
        // survivors carry their original values
        for (std::size_t i = 0; i < s.length(); ++i) {
            for (std::size_t c = 0; c < s.dim; ++c) {
                CHECK(s.value(i, c) ==
                      ds.samples[&s - irr.samples.data()].value(s.kept_idx[i], c));
            }
        }
    }

    Rng again(99);
    Dataset irr2 = drop_random(ds, 0.3, again);
    CHECK(irr2.samples[3].kept_idx == irr.samples[3].kept_idx);
    Rng other(100);
    Dataset irr3 = drop_random(ds, 0.3, other);
    bool any_diff = false;
    for (std::size_t k = 0; k < irr.size(); ++k) {
        if (irr3.samples[k].kept_idx != irr.samples[k].kept_idx) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("drop_random rates 0.5 and 0.7 leave 12 and 7 of 24") {
    Rng rng(6);
    Dataset ds = gen_sines(4, 2, 24, rng);
    Rng r1(1), r2(2);
    CHECK(drop_random(ds, 0.5, r1).samples[0].length() == 12);
    CHECK(drop_random(ds, 0.7, r2).samples[0].length() == 7);
}

TEST_CASE("drop_random validation") {
    Rng rng(6);
    Dataset ds = gen_sines(2, 1, 24, rng);
    Rng r(1);
    CHECK_THROWS_AS(drop_random(ds, 0.0, r), value_error);
    CHECK_THROWS_AS(drop_random(ds, 1.0, r), value_error);

    Dataset tiny = gen_sines(1, 1, 3, rng);
    CHECK_THROWS_AS(drop_random(tiny, 0.3, r), value_error);
}

TEST_CASE("dataset directory round-trip, regular and irregular") {
    Rng rng(21);
    Dataset ds = gen_sines(5, 2, 10, rng);
    fs::path dir = temp_dir("roundtrip_reg");
    save_dataset(ds, dir.string());
    Dataset back = load_dataset(dir.string());
    REQUIRE(back.size() == 5);
    CHECK(back.dim == 2);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(back.samples[k].values == ds.samples[k].values);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(back.samples[k].times[i] == doctest::Approx(ds.samples[k].times[i]).epsilon(1e-15));
        }
        CHECK(back.samples[k].kept_idx.empty());
    }
    CHECK(back.scale.min == ds.scale.min);
    fs::remove_all(dir);

    Rng drng(2);
    Dataset irr = drop_random(ds, 0.3, drng);
    fs::path dir2 = temp_dir("roundtrip_irr");
    save_dataset(irr, dir2.string());
    Dataset back2 = load_dataset(dir2.string());
    REQUIRE(back2.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(back2.samples[k].values == irr.samples[k].values);
        CHECK(back2.samples[k].times == irr.samples[k].times);  // %.17g is lossless
        CHECK_FALSE(back2.samples[k].kept_idx.empty());
    }
    fs::remove_all(dir2);
}

TEST_CASE("load_dataset errors") {
    fs::path dir = temp_dir("broken");
    CHECK_THROWS_AS(load_dataset((dir / "nope").string()), io_error);
    {
        std::ofstream out(dir / "meta.json");
        out << "{not json";
    }
    CHECK_THROWS_AS(load_dataset(dir.string()), io_error);
    fs::remove_all(dir);
}

}  // TEST_SUITE
