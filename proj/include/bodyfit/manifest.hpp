#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bodyfit/camera.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

struct CropGeometry {
    int x = 0, y = 0;
    int width = 0, height = 0;  // 0 means full frame
};

struct ManifestFrame {
    std::string id;
    std::string subject;
    std::string pose_key;
    std::string shape_key;
    std::string trans_key;
    std::string gt_key;
    std::string mask_path;  // relative to the manifest directory
    Camera camera;
    CropGeometry crop;
};

// Versioned dataset description: the model file, per-frame records, and the
// subject-level train/test split. Documented in docs/manifest_schema.md.
struct DatasetManifest {
    std::filesystem::path root;  // directory containing the manifest
    std::string model_path;
    std::string frames_container_path;
    std::vector<ManifestFrame> frames;
    std::vector<std::string> train_subjects;
    std::vector<std::string> test_subjects;

    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }

    bool is_train_subject(const std::string& subject) const;
    bool is_test_subject(const std::string& subject) const;
    std::vector<const ManifestFrame*> frames_in_split(const std::string& split) const;
};

// mode "full" checks every referenced file and container key; "dry-run"
// validates structure only. All violations are collected and reported in a
// single ValidationError.
DatasetManifest load_manifest(const std::filesystem::path& path, bool dry_run = false);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

}  // namespace bodyfit
