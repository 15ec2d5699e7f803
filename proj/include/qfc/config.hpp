#pragma once

// Calibration files: converter model, loss budget and a named filter library
// in one JSON document, plus the content hash embedded in every artifact.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfc/spectral.hpp"

namespace qfc {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct Calibration {
    ConverterModel model;
    LossBudget losses;
    std::map<std::string, SpectralFilter> filters;
    json report = json::object();  // fit residuals etc.; not part of the hash

    void validate() const;
    const SpectralFilter& filter(const std::string& name) const;
    std::vector<SpectralFilter> stack(const std::vector<std::string>& names) const;
};

// uv_bandpass, etalon, ion_line, signal_bandpass, signal_vbg, spectrometer,
// centred on the model's output and signal wavelengths.
std::map<std::string, SpectralFilter> default_filter_library(const ConverterModel& model);

// Uncalibrated starting point (noise and efficiency coefficients at nominal
// values); the bundled file holds the fitted version.
Calibration default_calibration();

json to_json(const ConverterModel& m);
json to_json(const LossBudget& l);
json to_json(const SpectralFilter& f);
json to_json(const Calibration& c);
ConverterModel model_from_json(const json& j);
LossBudget losses_from_json(const json& j);
SpectralFilter filter_from_json(const std::string& name, const json& j);
Calibration calibration_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
// Writes via a temporary file; refuses to replace an existing file unless
// `force`.
void write_json_file(const json& j, const std::filesystem::path& path, bool force);

Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const Calibration& c, const std::filesystem::path& path, bool force);
std::filesystem::path bundled_calibration_path();
std::filesystem::path bundled_manifest_path();

// 64-bit FNV-1a over the compact dump, as 16 hex digits. Object keys are
// sorted, so the hash is independent of input formatting.
std::string content_hash(const json& j);
std::string config_hash(const Calibration& c);

}  // namespace qfc
