#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "vmf/io.hpp"
#include "vmf/numeric.hpp"

using namespace vmf;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("vmf_io_" + name)).string();
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
}

template <typename Fn>
bool throws_input_error_with(Fn&& fn, const std::string& needle) {
    try {
        fn();
    } catch (const InputError& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    } catch (...) {
        return false;
    }
    return false;
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

EventStream sample_stream() {
    EventStream ev;
    ev.width = 16;
    ev.height = 12;
    ev.t_begin = 0.0;
    ev.t_end = 0.5;
    ev.events = {{0.01, 3, 4, 1}, {0.2, 0, 0, -1}, {0.2, 15, 11, 1}, {0.45, 7, 7, -1}};
    return ev;
}

}  // namespace

TEST_CASE("event text round trip") {
    const std::string path = temp_path("events.txt");
    const EventStream ev = sample_stream();
    save_events(ev, path);
    const EventStream back = load_events(path);
    CHECK(back.width == ev.width);
    CHECK(back.height == ev.height);
    CHECK(back.t_begin == ev.t_begin);
    CHECK(back.t_end == ev.t_end);
    REQUIRE(back.events.size() == ev.events.size());
    for (std::size_t i = 0; i < ev.events.size(); ++i) {
        CHECK(back.events[i].t == ev.events[i].t);
        CHECK(back.events[i].x == ev.events[i].x);
        CHECK(back.events[i].y == ev.events[i].y);
        CHECK(back.events[i].p == ev.events[i].p);
    }
}

TEST_CASE("empty event file loads as empty stream") {
    const std::string path = temp_path("empty_events.txt");
    write_text(path, "# nothing here\n\n");
    const EventStream ev = load_events(path);
    CHECK(ev.events.empty());
}

TEST_CASE("malformed event files are rejected with line numbers") {
    const std::string path = temp_path("bad_events.txt");

    write_text(path, "0.1 1 1 1\n0.2 2 two 1\n");
    CHECK(throws_input_error_with([&] { load_events(path); }, ":2:"));

    write_text(path, "0.1 1 1 1\n0.2 2 2 0\n");
    CHECK(throws_input_error_with([&] { load_events(path); }, "polarity"));

    write_text(path, "0.5 1 1 1\n0.2 2 2 1\n");
    CHECK(throws_input_error_with([&] { load_events(path); }, "not sorted"));

    write_text(path, "# width 4 height 4 window 0 1\n0.1 9 1 1\n");
    CHECK(throws_input_error_with([&] { load_events(path); }, "out of bounds"));

    write_text(path, "# width 4 height 4 window 0 1\n2.0 1 1 1\n");
    CHECK_THROWS_AS(load_events(path), InputError);
}

TEST_CASE("point cloud round trip and rejection") {
    const std::string path = temp_path("cloud.txt");
    PointCloud pc;
    pc.points = {{1.0, 2.0, 3.0}, {-0.25, 0.5, 7.0}};
    save_point_cloud(pc, path);
    const PointCloud back = load_point_cloud(path);
    REQUIRE(back.points.size() == 2);
    CHECK(back.points[1].x == pc.points[1].x);
    CHECK(back.points[1].z == pc.points[1].z);

    write_text(path, "1.0 2.0 3.0\n1.0 2.0 NaN\n");
    CHECK(throws_input_error_with([&] { load_point_cloud(path); }, ":2:"));

    write_text(path, "1.0 2.0\n");
    CHECK_THROWS_AS(load_point_cloud(path), InputError);
}

TEST_CASE("PPM and PGM round trips") {
    const std::string path = temp_path("img.ppm");
    Rng rng(5);
    Image rgb = Image::make(9, 7, 3, Semantics::Rgb);
    for (double& v : rgb.data) v = rng.uniform();
    save_image(rgb, path);
    Image back = load_image(path);
    CHECK(back.semantics == Semantics::Rgb);
    REQUIRE(back.data.size() == rgb.data.size());
    for (std::size_t i = 0; i < rgb.data.size(); ++i)
        CHECK(std::abs(back.data[i] - rgb.data[i]) <= 0.5 / 255.0 + 1e-12);

    Image gray = Image::make(5, 5, 1, Semantics::Luma);
    for (double& v : gray.data) v = rng.uniform();
    const std::string gpath = temp_path("img.pgm");
    save_image(gray, gpath, 16);
    back = load_image(gpath);
    for (std::size_t i = 0; i < gray.data.size(); ++i)
        CHECK(std::abs(back.data[i] - gray.data[i]) <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("depth maps carry millimeter quantization") {
    const std::string path = temp_path("depth.pgm");
    Image depth = Image::make(4, 4, 1, Semantics::Depth);
    depth.at(1, 1) = 3.2504;
    depth.at(2, 3) = 12.0;
    save_image(depth, path);
    const Image back = load_image(path);
    CHECK(back.semantics == Semantics::Depth);
    CHECK(std::abs(back.at(1, 1) - 3.2504) <= 5e-4);
    CHECK(back.at(2, 3) == 12.0);
    CHECK(back.at(0, 0) == 0.0);
}

TEST_CASE("binary flow round trip is bit-exact") {
    const std::string path = temp_path("flow.vmfl");
    Rng rng(17);
    FlowField2D flow = FlowField2D::make(13, 9);
    for (std::size_t i = 0; i < flow.du.size(); ++i) {
        if (rng.uniform() < 0.3) continue;  // invalid pixels stay (0,0)
        flow.du[i] = static_cast<float>(rng.uniform(-8.0, 8.0));
        flow.dv[i] = static_cast<float>(rng.uniform(-8.0, 8.0));
        flow.valid[i] = 1;
    }
    save_flow(flow, path);
    const FlowField2D back = load_flow(path);
    CHECK(back.width == flow.width);
    CHECK(back.height == flow.height);
    for (std::size_t i = 0; i < flow.du.size(); ++i) {
        CHECK(back.du[i] == flow.du[i]);
        CHECK(back.dv[i] == flow.dv[i]);
        CHECK(back.valid[i] == flow.valid[i]);
    }
    // Save -> load -> save reproduces identical bytes.
    const std::string path2 = temp_path("flow2.vmfl");
    save_flow(back, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("flow loader rejects invariant violations") {
    const std::string path = temp_path("bad.vmfl");

    write_text(path, "JUNKxxxxxxxxxxxxxxxx");
    CHECK(throws_input_error_with([&] { load_flow(path); }, "magic"));

    FlowField2D flow = FlowField2D::make(2, 2);
    flow.du[0] = 1.5;
    flow.valid[0] = 1;
    const std::string good = temp_path("good.vmfl");
    save_flow(flow, good);
    const std::string bytes = read_bytes(good);

    // Mask byte outside {0,1}.
    std::string mutated = bytes;
    mutated[mutated.size() - 4] = 2;
    write_text(path, mutated);
    CHECK_THROWS_AS(load_flow(path), InputError);

    // Invalid pixel carrying nonzero flow.
    mutated = bytes;
    mutated[mutated.size() - 4] = 0;
    write_text(path, mutated);
    CHECK(throws_input_error_with([&] { load_flow(path); }, "nonzero flow"));

    // Truncation.
    write_text(path, bytes.substr(0, bytes.size() - 6));
    CHECK_THROWS_AS(load_flow(path), InputError);
}

TEST_CASE("fuzzed loaders reject or accept but never crash") {
    const std::string ev_path = temp_path("fuzz_events.txt");
    const std::string pc_path = temp_path("fuzz_cloud.txt");
    const std::string fl_path = temp_path("fuzz_flow.vmfl");
    save_events(sample_stream(), ev_path);
    PointCloud pc;
    pc.points = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    save_point_cloud(pc, pc_path);
    FlowField2D flow = FlowField2D::make(6, 4);
    flow.du[5] = 1.0f;
    flow.valid[5] = 1;
    save_flow(flow, fl_path);

    Rng rng(99);
    const std::string mutated = temp_path("fuzz_mut");
    auto fuzz_one = [&](const std::string& src, auto loader) {
        const std::string original = read_bytes(src);
        for (int trial = 0; trial < 120; ++trial) {
            std::string bytes = original;
            const int edits = 1 + static_cast<int>(rng.uniform_index(4));
            for (int e = 0; e < edits; ++e) {
                const std::size_t pos = rng.uniform_index(bytes.size());
                switch (rng.uniform_index(3)) {
                    case 0: bytes[pos] = static_cast<char>(rng.uniform_index(256)); break;
                    case 1: bytes.erase(pos, 1); break;
                    default: bytes.insert(pos, 1, static_cast<char>(rng.uniform_index(256))); break;
                }
                if (bytes.empty()) bytes = "x";
            }
            write_text(mutated, bytes);
            try {
                auto loaded = loader(mutated);
                (void)loaded;  // mutation happened to stay valid
            } catch (const InputError&) {
                // expected for most mutations
            }
        }
    };
    fuzz_one(ev_path, [](const std::string& p) { return load_events(p); });
    fuzz_one(pc_path, [](const std::string& p) { return load_point_cloud(p); });
    fuzz_one(fl_path, [](const std::string& p) { return load_flow(p); });
    CHECK(true);  // reaching here means no crash/UB
}

TEST_CASE("correlation dump format") {
    CorrelationVolume cv = CorrelationVolume::make(Axis::X, Modality::Rgb, 2, 3);
    for (std::size_t i = 0; i < cv.scores.size(); ++i) cv.scores[i] = static_cast<double>(i) * 0.25;
    const std::string path = temp_path("corr.txt");
    save_correlation_dump(cv, path);
    const std::string body = read_bytes(path);
    CHECK(body.find("# correlation N=3 r=2 axis=x modality=rgb") != std::string::npos);
    CHECK(std::count(body.begin(), body.end(), '\n') == 4);  // header + 3 sample rows
}

TEST_CASE("flow visualization colors valid pixels only") {
    FlowField2D flow = FlowField2D::make(4, 4);
    flow.du[5] = 2.0;
    flow.valid[5] = 1;
    const Image vis = flow_visualization(flow);
    CHECK(vis.channels == 3);
    CHECK(vis.at(0, 0, 0) == 0.0);  // invalid pixel renders black
    bool colored = false;
    for (int c = 0; c < 3; ++c)
        if (vis.at(1, 1, c) > 0.0) colored = true;
    CHECK(colored);
}
