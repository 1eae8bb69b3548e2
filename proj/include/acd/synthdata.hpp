// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic box scenes seen by a moving pinhole camera, rendered to RGB
// video plus depth, semantic and mask maps.
//
// World frame: x right, y down, z forward. The camera at position p with yaw
// theta maps a world point X to camera coordinates
//   xc = cos(theta) dx - sin(theta) dz,  yc = dy,  zc = sin(theta) dx + cos(theta) dz
// with d = X - p, and to pixel (u, v) = (f xc / zc + W/2, f yc / zc + H/2).
// Each box is drawn as its camera-facing front rectangle: the center is
// projected, the face sits at depth zc - size_z / 2 and spans size_x by size_y.
// A pixel is covered when its center (j + 0.5, i + 0.5) lies in the half-open
// rectangle; the nearest face wins, ties go to the earlier object.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "acd/acd.hpp"

namespace acd {

struct Box {
    int category = 1;  // 1..5
    std::array<double, 3> center{};
    std::array<double, 3> size{};
    std::array<double, 3> albedo{};
};

struct CameraPath {
    double focal = 16.0;  // pixels
    std::vector<std::array<double, 3>> position;
    std::vector<double> yaw;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t frames = 8, height = 16, width = 16;
    std::vector<Box> objects;
    CameraPath camera;
};

// Sampling ranges; all draws are uniform.
struct SynthConfig {
    std::size_t frames = 8, height = 16, width = 16;
    double focal = 16.0;
    int min_objects = 1, max_objects = 3;
    int num_categories = 5;
    std::array<double, 2> center_x{-1.5, 1.5}, center_y{-1.0, 1.0}, center_z{3.0, 7.0};
    std::array<double, 2> size_range{0.6, 2.0};
    double max_cam_speed_x = 0.1;    // world units per frame
    double max_cam_speed_z = 0.05;
    double max_initial_yaw = 0.1;    // radians
    double max_yaw_rate = 0.03;      // radians per frame
    double min_face_depth = 0.5;     // every face stays at least this far in front
    double shade_ref_depth = 2.0;    // rgb = albedo * min(1, ref / depth)
    std::array<double, 3> background{0.1, 0.1, 0.1};
};

// Fixed albedo per category so the layout determines the colors.
std::array<double, 3> category_albedo(int category);

struct Sample {
    VideoSample data;
    SceneSpec scene;
};

// Category of the largest-volume object.
int prompt_class(const SceneSpec& s);

SceneSpec generate_scene(std::uint64_t seed, const SynthConfig& cfg = {});
Sample render(const SceneSpec& scene, const SynthConfig& cfg = {});

// Projected front-face rectangle [u0, u1) x [v0, v1) of one object in one
// frame, plus its depth.
struct FaceRect {
    double u0, u1, v0, v1, depth;
};
FaceRect project_box(const Box& box, const CameraPath& cam, std::size_t frame, std::size_t height,
                     std::size_t width);

// Seed of sample i in a dataset generated with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t i);

// Writes sample_%05d/{rgb,depth,sem,mask}.acdt + scene.json and manifest.txt.
void write_dataset(std::size_t n, const std::filesystem::path& out_dir, std::uint64_t seed,
                   const SynthConfig& cfg = {});

// One sample directory; the id is the directory name.
Sample read_sample(const std::filesystem::path& dir);

std::vector<Sample> read_dataset(const std::filesystem::path& dir);

// Schema checker; returns one message per problem, empty when conforming.
// Each sample is re-rendered from its sidecar and compared bit for bit.
std::vector<std::string> validate_dataset(const std::filesystem::path& dir, const SynthConfig& cfg = {});

std::string scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const std::string& text);

}  // namespace acd
