#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsar/backbone.hpp"
#include "zsar/config.hpp"
#include "zsar/losses.hpp"
#include "zsar/pipeline.hpp"
#include "zsar/text_space.hpp"

namespace zsar {

// Stream ids under a run seed. Every consumer of randomness owns one.
namespace streams {
inline constexpr std::uint64_t kWorld = 1;
inline constexpr std::uint64_t kSeenClasses = 2;
inline constexpr std::uint64_t kUnseenClasses = 3;
inline constexpr std::uint64_t kTrainVideos = 4;
inline constexpr std::uint64_t kTestVideos = 5;
inline constexpr std::uint64_t kModel = 6;
inline constexpr std::uint64_t kSeenPrompts = 7;
inline constexpr std::uint64_t kUnseenPrompts = 8;
inline constexpr std::uint64_t kShuffle = 9;
}  // namespace streams

inline constexpr double kMaxPrototypeCosine = 0.9;
inline constexpr std::size_t kPrototypeRetries = 100;

struct ClassSet {
    std::vector<std::string> names;
    Tensor semantic;  // K x D text-side class semantics (description surrogates)
    Tensor visual;    // K x C visual prototypes
};

struct Dataset {
    ClassSet seen;
    ClassSet unseen;
    std::vector<FrameFeatures> train_videos;
    std::vector<std::size_t> train_labels;  // rows of seen
    std::vector<FrameFeatures> test_videos;
    std::vector<std::size_t> test_labels;   // rows of unseen
};

// Visual prototype of a class: A s + b for a frozen per-seed map A = I +
// domain_gap * G / sqrt(D) and background b of norm `background`. Unseen
// classes come from their own stream and are drawn after the seen ones, so
// nothing training reads depends on them. Throws DegenerateInputError when a
// class cannot be drawn with every pairwise cosine below kMaxPrototypeCosine.
Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::size_t> predictions;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult evaluate_zero_shot(const Model& model, const PromptBank& bank, std::span<const FrameFeatures> videos,
                              std::span<const std::size_t> labels);
EvalResult score_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                             std::size_t classes);

// The untouched frozen surrogate: mean-pooled raw features against the mean
// of the initial prompt tokens, straight loops with no model code.
std::vector<std::size_t> frozen_baseline_predictions(std::span<const FrameFeatures> videos, const PromptBank& bank);

struct MetricsRecord {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;  // 0 = before any update
    losses::LossBreakdown loss;
    double seen_accuracy = 0.0;
    double unseen_accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;
};

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<MetricsRecord> records;
    std::vector<std::size_t> unseen_predictions;  // after the last epoch
    std::vector<std::size_t> baseline_predictions;
    double baseline_accuracy = 0.0;
    std::uint64_t frozen_hash = 0;            // frozen state, checked unchanged after training
    std::uint64_t training_visible_hash = 0;  // everything the optimizer can read
    std::uint64_t parameter_hash_before = 0;
    std::uint64_t parameter_hash_after = 0;

    const MetricsRecord& final() const { return records.back(); }
};

using RecordSink = std::function<void(const MetricsRecord&)>;

// Gradient descent on the total loss. Emits epoch 0 (initial evaluation)
// followed by one record per epoch. Throws NumericDomainError naming the first
// non-finite loss component, and std::logic_error if a frozen field changed.
RunResult train(const ExperimentConfig& cfg, std::uint64_t seed, const RecordSink& sink = {});

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_training_visible(const Dataset& data, const PromptBank& seen_bank);
std::uint64_t hash_frozen(const Dataset& data, const PromptBank& seen_bank, const PromptBank& unseen_bank);
std::uint64_t hash_parameters(std::span<const ag::Var> params);

// ---- ablation ----

struct AblationAxis {
    std::string key;
    std::vector<std::string> values;
};

struct AblationCell {
    std::size_t config_index = 0;
    std::uint64_t seed = 0;
    RunResult result;
};

struct EquivalenceCheck {
    std::string fixed_config;
    std::string frozen_config;
    bool identical = false;
};

struct AblationResult {
    std::vector<ExperimentConfig> configs;
    std::vector<AblationCell> cells;  // config-major, seed-minor
    std::vector<EquivalenceCheck> equivalence;

    bool all_equivalent() const;
};

// Cross product of axis values over the base config, first axis slowest.
// Each config is named "key=value;key=value".
std::vector<ExperimentConfig> expand_axes(const ExperimentConfig& base, std::span<const AblationAxis> axes);
// Named sets: "table3" (modules and splitting) and "table4" (loss subsets).
std::vector<ExperimentConfig> preset_configs(const ExperimentConfig& base, const std::string& preset);

// Runs every (config, seed) cell on up to `workers` threads. Output order
// and values do not depend on the worker count. Configs that differ only in
// splitting = fixed vs frozen-offsets are compared record by record.
AblationResult run_ablation(std::span<const ExperimentConfig> configs, std::size_t workers);

// ZSAR_WORKERS if set and positive, else the hardware concurrency.
std::size_t worker_count_from_env();

// ---- output ----

std::string format_real(double v);
void write_epoch_csv_header(std::ostream& out);
void write_epoch_csv_row(std::ostream& out, const std::string& config, const MetricsRecord& r);
void write_ablation_csv(std::ostream& out, const AblationResult& result);

nlohmann::json config_json(const ExperimentConfig& cfg);
nlohmann::json run_summary_json(const ExperimentConfig& cfg, std::span<const RunResult> runs);
nlohmann::json ablation_summary_json(const AblationResult& result);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

}  // namespace zsar
