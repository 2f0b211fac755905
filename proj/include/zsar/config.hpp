#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "zsar/losses.hpp"
#include "zsar/pipeline.hpp"

namespace zsar {

struct ExperimentConfig {
    std::string name = "default";
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    // split sizes
    std::size_t k_seen = 6;
    std::size_t k_unseen = 4;
    std::size_t videos_per_class = 20;

    // dims
    std::size_t frames = 8;
    std::size_t height = 2;
    std::size_t width = 2;
    std::size_t channels = 16;
    std::size_t embed_dim = 16;
    std::size_t context_length = 4;

    // model
    double alpha = 0.5;
    double beta = 0.5;
    double delta = 1.5;
    std::size_t offset_hidden = 8;
    bool use_da = true;
    bool use_msm = true;
    bool use_mab = true;
    Splitting splitting = Splitting::offsets;

    // objective
    double lambda_n = losses::kDefaultLambdaNegative;
    double temperature = losses::kDefaultTemperature;
    losses::LossFlags loss{};

    // optimizer
    double lr = 0.05;
    std::size_t epochs = 200;
    std::size_t batch_size = 0;  // 0 = full batch

    // simulator
    double noise_sigma = 1.0;
    double motion_amplitude = 1.5;
    std::size_t motion_frames = 2;  // per video
    double domain_gap = 2.0;        // strength of the frozen visual/text mismatch
    double background = 3.0;        // norm of the shared visual offset
    double text_noise = 0.1;
    std::string classes_file;       // optional class list

    // Applies one key=value setting. Throws ParameterError for an unknown key
    // or an unparsable value.
    void set(const std::string& key, const std::string& value);
    // Ordered (key, value) pairs; feeding them back through set() reproduces
    // the config.
    std::vector<std::pair<std::string, std::string>> entries() const;
    // Throws ParameterError / DimensionError when the config cannot run.
    void validate() const;

    Architecture architecture() const;
    ObjectiveOptions objective_options() const;
};

// Lines of key = value; '#' starts a comment.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// "1,2,5" or "1-10" or a mix: "1-3,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace zsar
