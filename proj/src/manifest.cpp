#include "bodyfit/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bodyfit/container.hpp"
#include "bodyfit/errors.hpp"

namespace bodyfit {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool DatasetManifest::is_train_subject(const std::string& subject) const {
    return std::find(train_subjects.begin(), train_subjects.end(), subject) !=
           train_subjects.end();
}

bool DatasetManifest::is_test_subject(const std::string& subject) const {
    return std::find(test_subjects.begin(), test_subjects.end(), subject) !=
           test_subjects.end();
}

std::vector<const ManifestFrame*> DatasetManifest::frames_in_split(
    const std::string& split) const {
    std::vector<const ManifestFrame*> out;
    for (const auto& f : frames) {
        if (split == "all" || (split == "train" && is_train_subject(f.subject)) ||
            (split == "test" && is_test_subject(f.subject)))
            out.push_back(&f);
    }
    return out;
}

namespace {

Camera camera_from_json(const json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto trans = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || trans.size() != 3)
        throw ValidationError("camera rotation must have 9 entries and translation 3");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
    for (int i = 0; i < 3; ++i) cam.translation[i] = trans[static_cast<std::size_t>(i)];
    return cam;
}

ordered_json camera_to_json(const Camera& cam) {
    ordered_json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[static_cast<std::size_t>(3 * r + c)] = cam.rotation(r, c);
    j["rotation"] = rot;
    j["translation"] = std::vector<double>{cam.translation.x(), cam.translation.y(),
                                           cam.translation.z()};
    return j;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path, bool dry_run) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open manifest '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }

    std::vector<std::string> violations;
    DatasetManifest m;
    m.root = path.parent_path();

    try {
        if (j.at("version").get<int>() != 1)
            violations.push_back("unsupported manifest version " +
                                 std::to_string(j.at("version").get<int>()));
        m.model_path = j.at("model").get<std::string>();
        m.frames_container_path = j.at("frames_container").get<std::string>();
        m.train_subjects = j.at("split").at("train").get<std::vector<std::string>>();
        m.test_subjects = j.at("split").at("test").get<std::vector<std::string>>();

        for (const auto& jf : j.at("frames")) {
            ManifestFrame f;
            f.id = jf.at("id").get<std::string>();
            f.subject = jf.at("subject").get<std::string>();
            f.pose_key = jf.at("pose_key").get<std::string>();
            f.shape_key = jf.at("shape_key").get<std::string>();
            f.trans_key = jf.at("trans_key").get<std::string>();
            f.gt_key = jf.at("gt_key").get<std::string>();
            f.mask_path = jf.at("mask").get<std::string>();
            f.camera = camera_from_json(jf.at("camera"));
            if (jf.contains("crop")) {
                f.crop.x = jf.at("crop").at("x").get<int>();
                f.crop.y = jf.at("crop").at("y").get<int>();
                f.crop.width = jf.at("crop").at("width").get<int>();
                f.crop.height = jf.at("crop").at("height").get<int>();
            }
            m.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": missing or mistyped field: " + e.what());
    }

    // Structural checks.
    std::set<std::string> train_set(m.train_subjects.begin(), m.train_subjects.end());
    for (const auto& s : m.test_subjects)
        if (train_set.count(s))
            violations.push_back("subject '" + s + "' appears in both train and test splits");
    std::set<std::string> ids;
    for (const auto& f : m.frames) {
        if (!ids.insert(f.id).second)
            violations.push_back("duplicate frame id '" + f.id + "'");
        if (!train_set.count(f.subject) &&
            std::find(m.test_subjects.begin(), m.test_subjects.end(), f.subject) ==
                m.test_subjects.end())
            violations.push_back("frame '" + f.id + "': subject '" + f.subject +
                                 "' is in neither split");
        try {
            f.camera.validate();
        } catch (const std::exception& e) {
            violations.push_back("frame '" + f.id + "': " + e.what());
        }
    }

    if (!dry_run) {
        if (!std::filesystem::exists(m.resolve(m.model_path)))
            violations.push_back("model file missing: " + m.model_path);
        const auto frames_path = m.resolve(m.frames_container_path);
        if (!std::filesystem::exists(frames_path)) {
            violations.push_back("frames container missing: " + m.frames_container_path);
        } else {
            try {
                const TensorContainer c = read_container(frames_path);
                for (const auto& f : m.frames)
                    for (const auto* key : {&f.pose_key, &f.shape_key, &f.trans_key, &f.gt_key})
                        if (!c.contains(*key))
                            violations.push_back("frame '" + f.id + "': key '" + *key +
                                                 "' not found in frames container");
            } catch (const std::exception& e) {
                violations.push_back(std::string("frames container unreadable: ") + e.what());
            }
        }
        for (const auto& f : m.frames)
            if (!std::filesystem::exists(m.resolve(f.mask_path)))
                violations.push_back("frame '" + f.id + "': mask missing: " + f.mask_path);
    }

    if (!violations.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": " << violations.size() << " validation error(s):\n";
        for (const auto& v : violations) msg << "  - " << v << "\n";
        throw ValidationError(msg.str());
    }
    return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    ordered_json j;
    j["version"] = 1;
    j["model"] = manifest.model_path;
    j["frames_container"] = manifest.frames_container_path;
    j["split"] = {{"train", manifest.train_subjects}, {"test", manifest.test_subjects}};
    j["frames"] = ordered_json::array();
    for (const auto& f : manifest.frames) {
        ordered_json jf;
        jf["id"] = f.id;
        jf["subject"] = f.subject;
        jf["pose_key"] = f.pose_key;
        jf["shape_key"] = f.shape_key;
        jf["trans_key"] = f.trans_key;
        jf["gt_key"] = f.gt_key;
        jf["mask"] = f.mask_path;
        jf["camera"] = camera_to_json(f.camera);
        jf["crop"] = {{"x", f.crop.x}, {"y", f.crop.y}, {"width", f.crop.width},
                      {"height", f.crop.height}};
        j["frames"].push_back(std::move(jf));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
}

}  // namespace bodyfit
