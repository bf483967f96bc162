#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "se2net/data_pipeline.hpp"
#include "se2net/error.hpp"
#include "se2net/grid.hpp"

namespace se2net {

namespace fs = std::filesystem;

/// 8-bit RGB (PNG/JPEG) to [0,1].
inline Image load_image(const fs::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot read image " + path.string());
    Image img(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) img(y, x, c) = static_cast<float>(row[x][2 - c] / 255.0);
    }
    return img;
}

/// 8-bit grayscale mask binarized at 128.
inline Mask load_mask(const fs::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot read mask " + path.string());
    Mask mask(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) mask(y, x) = row[x] >= 128 ? 1 : 0;
    }
    return mask;
}

inline void write_or_throw(const fs::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write " + path.string());
}

inline void save_image(const fs::path& path, const Image& img) {
    cv::Mat m(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[x][2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(img(y, x, c), 0.0f, 1.0f) * 255.0f));
    }
    write_or_throw(path, m);
}

/// Map in [0,1] as 8-bit grayscale PNG.
inline void save_map(const fs::path& path, const Map& map) {
    cv::Mat m(map.height(), map.width(), CV_8UC1);
    for (int y = 0; y < map.height(); ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < map.width(); ++x)
            row[x] = static_cast<std::uint8_t>(std::lround(std::clamp(map(y, x), 0.0, 1.0) * 255.0));
    }
    write_or_throw(path, m);
}

/// Binary mask as 0/255 PNG.
inline void save_mask(const fs::path& path, const Mask& mask) {
    cv::Mat m(mask.height(), mask.width(), CV_8UC1);
    for (int y = 0; y < mask.height(); ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.width(); ++x) row[x] = mask(y, x) ? 255 : 0;
    }
    write_or_throw(path, m);
}

/// Sample ids plus where to find their files: `<image_root>/<id><image_ext>`, `<mask_root>/<id>.png`.
struct DatasetManifest {
    fs::path image_root;
    fs::path mask_root;
    std::string split = "train";
    std::string image_ext = ".jpg";
    std::vector<std::string> ids;

    fs::path image_path(const std::string& id) const { return image_root / (id + image_ext); }
    fs::path mask_path(const std::string& id) const { return mask_root / (id + ".png"); }
};

/// One id per line; blank lines and '#' comments are ignored.
inline std::vector<std::string> read_id_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        line.erase(0, line.find_first_not_of(" \t\r"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty() || line[0] == '#') continue;
        ids.push_back(line);
    }
    return ids;
}

inline void write_id_list(const fs::path& path, const std::vector<std::string>& ids) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& id : ids) out << id << '\n';
}

/// Ids whose image or mask file is missing.
inline std::vector<std::string> missing_files(const DatasetManifest& m) {
    std::vector<std::string> missing;
    for (const auto& id : m.ids)
        if (!fs::exists(m.image_path(id)) || !fs::exists(m.mask_path(id))) missing.push_back(id);
    return missing;
}

inline ImageSample load_sample(const DatasetManifest& m, const std::string& id) {
    ImageSample s;
    s.id = id;
    s.image = load_image(m.image_path(id));
    s.region_gt = load_mask(m.mask_path(id));
    if (!s.image.same_extent(s.region_gt)) throw IoError("image/mask size mismatch for " + id);
    s.edge_gt = make_edge_gt(s.region_gt);
    return s;
}

/// Writes a sample as `<root>/images/<id><ext>`, `<root>/masks/<id>.png`, `<root>/edges/<id>.png`.
inline void save_sample(const fs::path& root, const ImageSample& s, const std::string& image_ext) {
    save_image(root / "images" / (s.id + image_ext), s.image);
    save_mask(root / "masks" / (s.id + ".png"), s.region_gt);
    save_mask(root / "edges" / (s.id + ".png"), s.edge_gt);
}

}  // namespace se2net
