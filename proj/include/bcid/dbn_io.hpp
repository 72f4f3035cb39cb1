#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "bcid/dbn.hpp"
#include "bcid/errors.hpp"

namespace bcid {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data(); // row-major
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size())
        throw Error("invalid_record", "matrix payload size mismatch");
    m.data() = data;
    return m;
}

} // namespace detail

inline nlohmann::json encoding_to_json(const EncodingSpec& spec) {
    nlohmann::json j;
    j["protocol_vocab"] = spec.protocol_vocab;
    j["service_vocab"] = spec.service_vocab;
    j["flag_vocab"] = spec.flag_vocab;
    j["mean"] = spec.mean;
    j["stdev"] = spec.stdev;
    return j;
}

inline EncodingSpec encoding_from_json(const nlohmann::json& j) {
    EncodingSpec spec;
    spec.protocol_vocab = j.at("protocol_vocab").get<std::vector<std::string>>();
    spec.service_vocab = j.at("service_vocab").get<std::vector<std::string>>();
    spec.flag_vocab = j.at("flag_vocab").get<std::vector<std::string>>();
    spec.mean = j.at("mean").get<std::array<double, 18>>();
    spec.stdev = j.at("stdev").get<std::array<double, 18>>();
    return spec;
}

inline nlohmann::json model_to_json(const DbnModel& model) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["encoding"] = encoding_to_json(model.encoding);
    j["grbm"]["w"] = detail::matrix_to_json(model.grbm.w);
    j["grbm"]["b1"] = model.grbm.b1;
    j["grbm"]["b2"] = model.grbm.b2;
    j["grbm"]["sigma"] = model.grbm.sigma;
    j["rbms"] = nlohmann::json::array();
    for (const auto& r : model.rbms) {
        nlohmann::json rj;
        rj["w"] = detail::matrix_to_json(r.w);
        rj["b1"] = r.b1;
        rj["b2"] = r.b2;
        j["rbms"].push_back(std::move(rj));
    }
    j["head"]["w"] = detail::matrix_to_json(model.head.w);
    j["head"]["b"] = model.head.b;
    return j;
}

inline DbnModel model_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kModelFormatVersion)
        throw Error("invalid_record",
                    "unsupported model format version " + j.at("format_version").dump());
    DbnModel m;
    m.encoding = encoding_from_json(j.at("encoding"));
    m.grbm.w = detail::matrix_from_json(j.at("grbm").at("w"));
    m.grbm.b1 = j.at("grbm").at("b1").get<Vector>();
    m.grbm.b2 = j.at("grbm").at("b2").get<Vector>();
    m.grbm.sigma = j.at("grbm").at("sigma").get<Vector>();
    for (const auto& rj : j.at("rbms")) {
        RbmLayer r;
        r.w = detail::matrix_from_json(rj.at("w"));
        r.b1 = rj.at("b1").get<Vector>();
        r.b2 = rj.at("b2").get<Vector>();
        m.rbms.push_back(std::move(r));
    }
    m.head.w = detail::matrix_from_json(j.at("head").at("w"));
    m.head.b = j.at("head").at("b").get<Vector>();
    m.check_encoding();
    return m;
}

// Canonical serialized form: sorted keys, two-space indent, trailing newline.
inline std::string model_to_string(const DbnModel& model) {
    return model_to_json(model).dump(2) + "\n";
}

inline void save_model(const std::string& path, const DbnModel& model,
                       const nlohmann::json& manifest_ref = nlohmann::json()) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("io_error", "cannot open " + path + " for writing");
    nlohmann::json j = model_to_json(model);
    if (!manifest_ref.is_null())
        j["manifest"] = manifest_ref;
    os << j.dump(2) << "\n";
}

inline DbnModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("io_error", "cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    return model_from_json(j);
}

} // namespace bcid
