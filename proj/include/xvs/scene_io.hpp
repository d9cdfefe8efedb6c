// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "xvs/geodesy.hpp"
#include "xvs/pose.hpp"
#include "xvs/splat.hpp"

namespace xvs::scene {

/// Malformed line in a COLMAP text file.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::filesystem::path file, int line, const std::string& msg);
    const std::filesystem::path& file() const { return file_; }
    int line() const { return line_; }

  private:
    std::filesystem::path file_;
    int line_;
};

/// Structurally valid files whose cross references do not resolve.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SparseCamera {
    int id = 0;
    std::string model;
    int width = 0;
    int height = 0;
    std::vector<double> params;

    /// fx, fy, cx, cy for the supported pinhole-family models.
    Eigen::Vector4d pinhole() const;
};

struct Observation {
    Eigen::Vector2d xy = Eigen::Vector2d::Zero();
    std::int64_t point3d_id = -1;
};

struct SparseImage {
    int id = 0;
    std::string name;
    int camera_id = 0;
    Eigen::Quaterniond q_world_to_camera = Eigen::Quaterniond::Identity();
    Eigen::Vector3d t_world_to_camera = Eigen::Vector3d::Zero();
    std::vector<Observation> observations;

    Rigid3 camera_to_world() const;
};

struct TrackElement {
    int image_id = 0;
    int point2d_index = 0;
};

struct SparsePoint {
    std::int64_t id = 0;
    Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
    Eigen::Vector3i rgb = Eigen::Vector3i::Zero();
    double error = 0.0;
    std::vector<TrackElement> track;
};

struct SparseScene {
    std::map<int, SparseCamera> cameras;
    std::map<int, SparseImage> images;
    std::map<std::int64_t, SparsePoint> points;

    /// Image ids sorted by name; position in this list is the "image index".
    std::vector<int> ordered_image_ids() const;
    /// Camera-to-world pinhole camera. COLMAP's principal point (pixel
    /// centers at +0.5) is shifted to the library's pixel-center convention.
    PerspectiveCamera perspective_camera(int image_id) const;
    /// Point ids with track length >= 2 observed by the image.
    std::set<std::int64_t> visible_points(int image_id) const;
};

/// Parses cameras.txt, images.txt and points3D.txt in `dir`.
SparseScene parse_sparse(const std::filesystem::path& dir);
void write_sparse(const SparseScene& scene, const std::filesystem::path& dir);
/// Throws ValidationError on dangling camera, image or point ids.
void validate(const SparseScene& scene);

/// |P_a n P_b| / |P_a u P_b|. An image without tracked points yields 0.
double pair_iou(const SparseScene& scene, int image_a, int image_b);

/// Symmetric IoU matrix over ordered_image_ids().
Eigen::MatrixXd iou_matrix(const SparseScene& scene, int workers = 0);

struct SplitConfig {
    int n_context = 1;
    double context_target_iou = 0.15;
    std::vector<double> target_ious{0.02, 0.05, 0.07, 0.1};
    /// Measure context overlap as the mean over all prior context frames
    /// instead of against the first one.
    bool against_all_prior = false;

    static SplitConfig dl3dv(int n_context);
    static SplitConfig tanks_and_temples(int n_context);
};

struct TargetChoice {
    int index = 0;
    double iou = 0.0;
};

struct ViewSplit {
    std::vector<int> context;
    std::vector<TargetChoice> targets;
    SplitConfig config;
};

/// Greedy split over a precomputed IoU matrix; ties go to the lower index.
ViewSplit select_splits(const Eigen::MatrixXd& iou, const SplitConfig& config);
ViewSplit select_splits(const SparseScene& scene, const SplitConfig& config);

std::string split_to_json(const ViewSplit& split, const std::vector<std::string>& names = {});

/// Gaussian noise on east/north (meters) and heading (degrees).
geo::GeoPose perturb_geopose(const geo::GeoPose& pose, double sigma_translation, double sigma_rotation,
                             std::uint64_t seed);

} // namespace xvs::scene
