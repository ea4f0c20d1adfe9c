#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/rng.hpp"

namespace synthforge::sampler {

struct LabeledInstance {
    std::string class_label;
    BoxF box;  // max-exclusive
};

struct LabeledImage {
    std::string ref;  // file name
    int width = 0;
    int height = 0;
    std::vector<LabeledInstance> instances;
};

struct LabeledSet {
    std::vector<LabeledImage> images;
    std::vector<std::string> vocabulary;
};

// COCO ingestion for both hand-labeled sets and our own emitted files.
inline LabeledSet labeled_set_from_coco(const nlohmann::json& j) {
    LabeledSet set;
    std::map<long long, std::string> categories;
    for (const auto& c : j.at("categories")) {
        categories[c.at("id").get<long long>()] = c.at("name").get<std::string>();
        set.vocabulary.push_back(c.at("name").get<std::string>());
    }
    std::map<long long, std::size_t> image_index;
    for (const auto& im : j.at("images")) {
        LabeledImage img;
        img.ref = im.at("file_name").get<std::string>();
        img.width = im.value("width", 0);
        img.height = im.value("height", 0);
        image_index[im.at("id").get<long long>()] = set.images.size();
        set.images.push_back(std::move(img));
    }
    for (const auto& a : j.at("annotations")) {
        auto it = image_index.find(a.at("image_id").get<long long>());
        if (it == image_index.end()) {
            raise(ErrorKind::Format, "annotation references unknown image id");
        }
        auto cat = categories.find(a.at("category_id").get<long long>());
        if (cat == categories.end()) {
            raise(ErrorKind::Format, "annotation references unknown category id");
        }
        const auto& bbox = a.at("bbox");
        double x = bbox.at(0).get<double>(), y = bbox.at(1).get<double>();
        double w = bbox.at(2).get<double>(), h = bbox.at(3).get<double>();
        set.images[it->second].instances.push_back(
            {cat->second, BoxF{x, y, x + w, y + h}});
    }
    return set;
}

inline LabeledSet load_labeled_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, std::string("not valid COCO JSON: ") + e.what());
    }
    try {
        return labeled_set_from_coco(j);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, std::string("COCO schema error: ") + e.what());
    }
}

inline nlohmann::json labeled_set_to_coco(const LabeledSet& set) {
    nlohmann::json images = nlohmann::json::array();
    nlohmann::json annotations = nlohmann::json::array();
    nlohmann::json categories = nlohmann::json::array();
    std::map<std::string, std::size_t> cat_id;
    for (std::size_t i = 0; i < set.vocabulary.size(); ++i) {
        cat_id[set.vocabulary[i]] = i + 1;
        categories.push_back({{"id", i + 1}, {"name", set.vocabulary[i]}});
    }
    long long ann_id = 1;
    for (std::size_t i = 0; i < set.images.size(); ++i) {
        const auto& img = set.images[i];
        images.push_back({{"id", i + 1},
                          {"file_name", img.ref},
                          {"width", img.width},
                          {"height", img.height}});
        for (const auto& inst : img.instances) {
            auto it = cat_id.find(inst.class_label);
            if (it == cat_id.end()) {
                raise(ErrorKind::InvalidInput, "instance class not in vocabulary");
            }
            annotations.push_back({{"id", ann_id++},
                                   {"image_id", i + 1},
                                   {"category_id", it->second},
                                   {"bbox",
                                    {inst.box.x0, inst.box.y0, inst.box.width(),
                                     inst.box.height()}},
                                   {"area", inst.box.area()},
                                   {"iscrowd", 0}});
        }
    }
    return nlohmann::json{
        {"images", images}, {"annotations", annotations}, {"categories", categories}};
}

namespace detail {

template <typename T>
inline void shuffle(std::vector<T>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.uniform_int(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace detail

// Random disjoint, exhaustive partition with |val| = floor(n * rv/(rt+rv)).
// Images keep their original order within each side.
inline std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, int ratio_train,
                                               int ratio_val, RngStream& rng) {
    if (ratio_train <= 0 || ratio_val <= 0) {
        raise(ErrorKind::InvalidInput, "split ratios must be positive");
    }
    const std::size_t n = set.images.size();
    const std::size_t parts = static_cast<std::size_t>(ratio_train) + ratio_val;
    if (n < parts) {
        raise(ErrorKind::InsufficientData, "fewer images than ratio parts");
    }
    std::size_t n_val = n * static_cast<std::size_t>(ratio_val) / parts;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    detail::shuffle(order, rng);

    std::vector<bool> in_val(n, false);
    for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = true;

    LabeledSet train, val;
    train.vocabulary = set.vocabulary;
    val.vocabulary = set.vocabulary;
    for (std::size_t i = 0; i < n; ++i) {
        (in_val[i] ? val : train).images.push_back(set.images[i]);
    }
    return {train, val};
}

// Greedy N-shot subset: images visited in a seeded random order and added
// until every vocabulary class has at least n instances. Matches random
// image-level selection while guaranteeing the per-class floor.
inline LabeledSet select_nshot(const LabeledSet& set, long long n, RngStream& rng) {
    if (n < 0) raise(ErrorKind::InvalidInput, "n must be >= 0");
    LabeledSet out;
    out.vocabulary = set.vocabulary;
    if (n == 0) return out;

    std::map<std::string, long long> totals;
    for (const auto& img : set.images) {
        for (const auto& inst : img.instances) ++totals[inst.class_label];
    }
    for (const auto& cls : set.vocabulary) {
        if (totals[cls] < n) {
            raise(ErrorKind::InsufficientData,
                  "class " + cls + " has only " + std::to_string(totals[cls]) +
                      " instances, need " + std::to_string(n));
        }
    }

    std::vector<std::size_t> order(set.images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::shuffle(order, rng);

    std::map<std::string, long long> counts;
    auto satisfied = [&] {
        for (const auto& cls : set.vocabulary) {
            if (counts[cls] < n) return false;
        }
        return true;
    };
    std::vector<std::size_t> chosen;
    for (std::size_t idx : order) {
        if (satisfied()) break;
        chosen.push_back(idx);
        for (const auto& inst : set.images[idx].instances) ++counts[inst.class_label];
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t idx : chosen) out.images.push_back(set.images[idx]);
    return out;
}

}  // namespace synthforge::sampler
