// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "acd/acdt.hpp"
#include "json.hpp"

namespace acd {

namespace fs = std::filesystem;
using nlohmann::json;

std::array<double, 3> category_albedo(int category) {
    static constexpr std::array<std::array<double, 3>, 5> kPalette{{
        {0.90, 0.20, 0.20},
        {0.20, 0.80, 0.30},
        {0.25, 0.35, 0.90},
        {0.90, 0.80, 0.20},
        {0.80, 0.30, 0.80},
    }};
    if (category < 1 || category > static_cast<int>(kPalette.size())) {
        throw std::out_of_range("category_albedo: category " + std::to_string(category) + " outside 1..5");
    }
    return kPalette[static_cast<std::size_t>(category - 1)];
}

FaceRect project_box(const Box& box, const CameraPath& cam, std::size_t frame, std::size_t height,
                     std::size_t width) {
    const auto& p = cam.position.at(frame);
    const double th = cam.yaw.at(frame);
    const double dx = box.center[0] - p[0], dy = box.center[1] - p[1], dz = box.center[2] - p[2];
    const double xc = std::cos(th) * dx - std::sin(th) * dz;
    const double zc = std::sin(th) * dx + std::cos(th) * dz;
    const double depth = zc - box.size[2] / 2.0;
    const double f = cam.focal;
    // The face keeps its world extent; only its center is projected at face depth.
    const double u = f * xc / depth + static_cast<double>(width) / 2.0;
    const double v = f * dy / depth + static_cast<double>(height) / 2.0;
    const double hu = f * box.size[0] / (2.0 * depth);
    const double hv = f * box.size[1] / (2.0 * depth);
    return {u - hu, u + hu, v - hv, v + hv, depth};
}

namespace {

struct Maps {
    std::vector<double> depth;  // raw face depth, 0 = background
    std::vector<int> sem;
    std::vector<int> owner;     // object index or -1
};

Maps rasterize(const SceneSpec& s) {
    const std::size_t T = s.frames, H = s.height, W = s.width;
    Maps m;
    m.depth.assign(T * H * W, 0.0);
    m.sem.assign(T * H * W, 0);
    m.owner.assign(T * H * W, -1);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t o = 0; o < s.objects.size(); ++o) {
            FaceRect r = project_box(s.objects[o], s.camera, t, H, W);
            if (r.depth <= 0.0) continue;
            for (std::size_t i = 0; i < H; ++i) {
                const double cy = static_cast<double>(i) + 0.5;
                if (cy < r.v0 || cy >= r.v1) continue;
                for (std::size_t j = 0; j < W; ++j) {
                    const double cx = static_cast<double>(j) + 0.5;
                    if (cx < r.u0 || cx >= r.u1) continue;
                    const std::size_t k = (t * H + i) * W + j;
                    if (m.owner[k] < 0 || r.depth < m.depth[k]) {
                        m.owner[k] = static_cast<int>(o);
                        m.depth[k] = r.depth;
                        m.sem[k] = s.objects[o].category;
                    }
                }
            }
        }
    }
    return m;
}

// Empty string when the scene satisfies the visibility invariants.
std::string scene_problem(const SceneSpec& s, double min_depth) {
    for (std::size_t t = 0; t < s.frames; ++t)
        for (const Box& b : s.objects) {
            if (project_box(b, s.camera, t, s.height, s.width).depth < min_depth) {
                return "object behind or too close to the camera in frame " + std::to_string(t);
            }
        }
    Maps m = rasterize(s);
    const std::size_t per = s.height * s.width;
    for (std::size_t t = 0; t < s.frames; ++t) {
        bool any = false;
        for (std::size_t k = t * per; k < (t + 1) * per && !any; ++k) any = m.owner[k] >= 0;
        if (!any) return "no object visible in frame " + std::to_string(t);
    }
    return {};
}

double f32(double v) { return round_to(v, Precision::f32); }

}  // namespace

SceneSpec generate_scene(std::uint64_t seed, const SynthConfig& cfg) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(seed, 0x5CE7Eull, static_cast<std::uint64_t>(attempt)));
        SceneSpec s;
        s.seed = seed;
        s.frames = cfg.frames;
        s.height = cfg.height;
        s.width = cfg.width;
        const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
        for (int i = 0; i < n; ++i) {
            Box b;
            b.category = rng.uniform_int(1, cfg.num_categories);
            b.center = {rng.uniform(cfg.center_x[0], cfg.center_x[1]), rng.uniform(cfg.center_y[0], cfg.center_y[1]),
                        rng.uniform(cfg.center_z[0], cfg.center_z[1])};
            for (double& e : b.size) e = rng.uniform(cfg.size_range[0], cfg.size_range[1]);
            b.albedo = category_albedo(b.category);
            s.objects.push_back(b);
        }
        s.camera.focal = cfg.focal;
        const double vx = rng.uniform(-cfg.max_cam_speed_x, cfg.max_cam_speed_x);
        const double vz = rng.uniform(-cfg.max_cam_speed_z, cfg.max_cam_speed_z);
        const double yaw0 = rng.uniform(-cfg.max_initial_yaw, cfg.max_initial_yaw);
        const double rate = rng.uniform(-cfg.max_yaw_rate, cfg.max_yaw_rate);
        for (std::size_t t = 0; t < cfg.frames; ++t) {
            const auto k = static_cast<double>(t);
            s.camera.position.push_back({vx * k, 0.0, vz * k});
            s.camera.yaw.push_back(yaw0 + rate * k);
        }
        if (scene_problem(s, cfg.min_face_depth).empty()) return s;
    }
    throw std::runtime_error("generate_scene: 100 consecutive rejections for seed " + std::to_string(seed));
}

Sample render(const SceneSpec& s, const SynthConfig& cfg) {
    if (s.objects.empty()) throw std::invalid_argument("render: scene has no objects");
    if (s.camera.position.size() != s.frames || s.camera.yaw.size() != s.frames) {
        throw std::invalid_argument("render: camera path length does not match the frame count");
    }
    std::string problem = scene_problem(s, std::numeric_limits<double>::min());
    if (!problem.empty()) throw std::invalid_argument("render: invalid scene: " + problem);

    const std::size_t T = s.frames, H = s.height, W = s.width;
    Maps m = rasterize(s);
    double max_depth = 0.0;
    for (double d : m.depth) max_depth = std::max(max_depth, d);

    std::vector<double> rgb(T * H * W * 3), depth(T * H * W, 0.0), sem(T * H * W, 0.0), mask(T * H * W, 0.0);
    for (std::size_t k = 0; k < T * H * W; ++k) {
        if (m.owner[k] < 0) {
            for (std::size_t c = 0; c < 3; ++c) rgb[k * 3 + c] = f32(cfg.background[c]);
            continue;
        }
        const Box& b = s.objects[static_cast<std::size_t>(m.owner[k])];
        const double shade = std::min(1.0, cfg.shade_ref_depth / m.depth[k]);
        for (std::size_t c = 0; c < 3; ++c) rgb[k * 3 + c] = f32(b.albedo[c] * shade);
        depth[k] = f32(m.depth[k] / max_depth);
        sem[k] = static_cast<double>(m.sem[k]);
        mask[k] = 1.0;
    }

    Sample out;
    out.scene = s;
    out.data.id = "seed_" + std::to_string(s.seed);
    out.data.rgb = Tensor(Shape{T, H, W, 3}, std::move(rgb));
    out.data.signals.depth = Tensor(Shape{T, H, W}, std::move(depth));
    out.data.signals.sem = Tensor(Shape{T, H, W}, std::move(sem));
    out.data.signals.mask = Tensor(Shape{T, H, W}, std::move(mask));
    out.data.prompt_class = prompt_class(s);
    return out;
}

int prompt_class(const SceneSpec& s) {
    double best = -1.0;
    int cls = 0;
    for (const Box& b : s.objects) {
        double vol = b.size[0] * b.size[1] * b.size[2];
        if (vol > best) {
            best = vol;
            cls = b.category;
        }
    }
    return cls;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t i) { return derive_seed(seed, 0xDA7Aull, i); }

std::string scene_to_json(const SceneSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["frames"] = s.frames;
    j["height"] = s.height;
    j["width"] = s.width;
    j["objects"] = json::array();
    for (const Box& b : s.objects) {
        j["objects"].push_back({{"category", b.category}, {"center", b.center}, {"size", b.size}, {"albedo", b.albedo}});
    }
    j["camera"] = {{"focal", s.camera.focal}, {"position", s.camera.position}, {"yaw", s.camera.yaw}};
    return j.dump(2) + "\n";
}

SceneSpec scene_from_json(const std::string& text) {
    json j = json::parse(text);
    SceneSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.frames = j.at("frames").get<std::size_t>();
    s.height = j.at("height").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    for (const auto& o : j.at("objects")) {
        Box b;
        b.category = o.at("category").get<int>();
        b.center = o.at("center").get<std::array<double, 3>>();
        b.size = o.at("size").get<std::array<double, 3>>();
        b.albedo = o.at("albedo").get<std::array<double, 3>>();
        s.objects.push_back(b);
    }
    const auto& c = j.at("camera");
    s.camera.focal = c.at("focal").get<double>();
    s.camera.position = c.at("position").get<std::vector<std::array<double, 3>>>();
    s.camera.yaw = c.at("yaw").get<std::vector<double>>();
    return s;
}

namespace {

std::string sample_dir_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05zu", i);
    return buf;
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct ManifestLine {
    std::string path;
    int prompt_class;
};

std::vector<ManifestLine> read_dataset_manifest(const fs::path& dir) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) throw std::runtime_error("dataset: missing " + (dir / "manifest.txt").string());
    std::vector<ManifestLine> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestLine m;
        if (!(ls >> m.path >> m.prompt_class)) {
            throw std::runtime_error("dataset: malformed manifest line " + std::to_string(n) + ": " + line);
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace

void write_dataset(std::size_t n, const fs::path& out_dir, std::uint64_t seed, const SynthConfig& cfg) {
    std::size_t done = 0;
    try {
        fs::create_directories(out_dir);
        std::ostringstream manifest;
        for (; done < n; ++done) {
            Sample s = render(generate_scene(sample_seed(seed, done), cfg), cfg);
            const std::string name = sample_dir_name(done);
            const fs::path d = out_dir / name;
            fs::create_directories(d);
            save_acdt(d / "rgb.acdt", s.data.rgb);
            save_acdt(d / "depth.acdt", s.data.signals.depth);
            save_acdt(d / "sem.acdt", s.data.signals.sem);
            save_acdt(d / "mask.acdt", s.data.signals.mask);
            std::ofstream js(d / "scene.json", std::ios::binary | std::ios::trunc);
            js << scene_to_json(s.scene);
            if (!js) throw std::runtime_error("cannot write " + (d / "scene.json").string());
            manifest << name << ' ' << s.data.prompt_class << '\n';
        }
        std::ofstream m(out_dir / "manifest.txt", std::ios::binary | std::ios::trunc);
        m << manifest.str();
        if (!m) throw std::runtime_error("cannot write " + (out_dir / "manifest.txt").string());
    } catch (const std::exception& e) {
        throw std::runtime_error("write_dataset: " + std::string(e.what()) + "; " + std::to_string(done) +
                                 " complete sample directories in " + out_dir.string() +
                                 ", manifest not written");
    }
}

Sample read_sample(const fs::path& d) {
    Sample s;
    s.data.id = d.filename().string();
    s.data.rgb = load_acdt(d / "rgb.acdt");
    s.data.signals.depth = load_acdt(d / "depth.acdt");
    s.data.signals.sem = load_acdt(d / "sem.acdt");
    s.data.signals.mask = load_acdt(d / "mask.acdt");
    s.scene = scene_from_json(read_text(d / "scene.json"));
    s.data.prompt_class = prompt_class(s.scene);
    return s;
}

std::vector<Sample> read_dataset(const fs::path& dir) {
    std::vector<Sample> out;
    for (const auto& line : read_dataset_manifest(dir)) {
        Sample s = read_sample(dir / line.path);
        s.data.id = line.path;
        s.data.prompt_class = line.prompt_class;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::string> validate_dataset(const fs::path& dir, const SynthConfig& cfg) {
    std::vector<std::string> problems;
    std::vector<ManifestLine> lines;
    try {
        lines = read_dataset_manifest(dir);
    } catch (const std::exception& e) {
        return {e.what()};
    }
    for (const auto& line : lines) {
        const fs::path d = dir / line.path;
        auto report = [&](const std::string& msg) { problems.push_back(line.path + ": " + msg); };
        bool files_ok = true;
        for (const char* f : {"rgb.acdt", "depth.acdt", "sem.acdt", "mask.acdt", "scene.json"}) {
            if (!fs::is_regular_file(d / f)) {
                report(std::string("missing ") + f);
                files_ok = false;
            }
        }
        if (!files_ok) continue;
        try {
            Tensor rgb = load_acdt(d / "rgb.acdt");
            ControlSignals sig{load_acdt(d / "depth.acdt"), load_acdt(d / "sem.acdt"), load_acdt(d / "mask.acdt")};
            SceneSpec scene = scene_from_json(read_text(d / "scene.json"));
            const Shape vs{scene.frames, scene.height, scene.width};
            if (rgb.shape() != Shape{scene.frames, scene.height, scene.width, 3}) {
                report("rgb shape " + to_string(rgb.shape()));
                continue;
            }
            if (sig.mask.shape() != vs) {
                report("mask shape " + to_string(sig.mask.shape()));
                continue;
            }
            validate_signals(sig, static_cast<std::size_t>(cfg.num_categories));
            for (double v : rgb.values()) {
                if (v < 0.0 || v > 1.0) {
                    report("rgb value outside [0, 1]");
                    break;
                }
            }
            Sample again = render(scene, cfg);
            if (again.data.prompt_class != line.prompt_class) report("prompt class disagrees with the scene");
            auto same = [](const Tensor& a, const Tensor& b) {
                return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
            };
            if (!same(again.data.rgb, rgb)) report("rgb does not match a re-render of scene.json");
            if (!same(again.data.signals.depth, sig.depth)) report("depth does not match a re-render");
            if (!same(again.data.signals.sem, sig.sem)) report("semantic map does not match a re-render");
            if (!same(again.data.signals.mask, sig.mask)) report("mask does not match a re-render");
        } catch (const std::exception& e) {
            report(e.what());
        }
    }
    return problems;
}

}  // namespace acd
