#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ikdr/eval.hpp"
#include "ikdr/hyperparams.hpp"
#include "ikdr/ikdr.hpp"

namespace ikdr {

inline constexpr int kModelSchemaVersion = 1;

/// Round to 12 significant digits; every report number goes through this.
double round12(double value);

nlohmann::json hyper_to_json(const Hyperparams& h);
/// Applies the keys present in `j` on top of `base`; unknown keys are an InputError.
Hyperparams hyper_from_json(const nlohmann::json& j, Hyperparams base = {});

/**
 * Writes `<dir>/model.json` and the training rows to `<dir>/train.csv`.
 * Matrices are stored as row-major nested arrays at full double precision,
 * so a saved model transforms bit-identically to the in-memory one.
 */
void save_model(const EmbeddingModel& model, const std::filesystem::path& dir);
EmbeddingModel load_model(const std::filesystem::path& model_json);

nlohmann::json report_to_json(const EvalReport& report);
/// Pretty-printed JSON followed by a newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace ikdr
