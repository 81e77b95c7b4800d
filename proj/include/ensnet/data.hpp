// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensnet/tensor.hpp"

namespace ensnet {

/// Class indices follow the CK+ emotion codes.
inline constexpr std::array<const char*, 8> kEmotionNames = {
    "Neutral", "Anger", "Contempt", "Disgust", "Fear", "Happiness", "Sadness", "Surprise"};
inline constexpr std::size_t kNeutralLabel = 0;

struct Sample {
  Tensor<float> image;  // [C,S,S], values in [0,1]
  std::string subject_id;
  std::optional<std::size_t> label;
  std::string source_id;  // image path as written in the manifest
  std::string sequence_id;
  std::optional<long> frame_index;
};

using Dataset = std::vector<Sample>;

/// One line of a manifest CSV:
///   path,subject_id,label,sequence_id,frame_index
/// `label`, `sequence_id` and `frame_index` may be empty.
struct ManifestRow {
  std::string path;
  std::string subject_id;
  std::optional<std::size_t> label;
  std::string sequence_id;
  std::optional<long> frame_index;
};

inline constexpr const char* kManifestHeader = "path,subject_id,label,sequence_id,frame_index";

/// Parses a manifest; errors carry the line number.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);

struct LoadOptions {
  std::size_t channels = 1;
  std::size_t image_size = 96;
  std::size_t num_classes = 8;
};

/// Reads a manifest and decodes its images (paths relative to the manifest
/// directory), converting to `channels` and resizing to image_size^2.
Dataset load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});

struct IngestResult {
  Dataset samples;
  std::size_t skipped_sequences = 0;
};

/// Sequence-to-frame conversion: per sequence (ordered by frame_index) the
/// first frame becomes Neutral and the last three frames carry the
/// sequence's emotion label. Sequences shorter than 4 frames or without a
/// label are skipped and counted. Samples lacking a sequence id pass through.
IngestResult ingest_sequences(const Dataset& frames, std::size_t neutral_label = kNeutralLabel);

/// Orders subject ids: purely numeric ids compare as zero-padded numbers,
/// everything else lexicographically.
bool subject_less(const std::string& a, const std::string& b);

struct FoldAssignment {
  std::map<std::string, std::size_t> fold_of_subject;  // folds 1..10
  std::vector<std::string> sorted_subjects;

  std::vector<std::string> subjects_in(std::size_t fold) const;
};

inline constexpr std::size_t kNumFolds = 10;

/// Sorted rank r (1-based) -> fold ((r-1) mod 10) + 1. Needs >= 10 distinct ids.
FoldAssignment assign_folds(std::vector<std::string> subjects);

struct TrialSplit {
  std::size_t test = 0;
  std::size_t val = 0;
  std::array<std::size_t, 4> labelled{};
  std::array<std::size_t, 4> unlabelled{};
};

/// Test fold t, validation t mod 10 + 1, remaining eight ascending: first
/// four labelled, last four unlabelled.
TrialSplit split_trial(std::size_t t);

/// Samples whose subject belongs to one of `folds`, in dataset order.
Dataset select_folds(const Dataset& data, const FoldAssignment& assignment,
                     std::span<const std::size_t> folds);

/// Distinct subject ids in first-appearance order.
std::vector<std::string> subjects_of(const Dataset& data);

/// Stacks images of `indices` into a [B,C,S,S] batch.
template <typename T>
Tensor<T> batch_images(const Dataset& data, std::span<const std::size_t> indices);

// -------------------------------------------------------------- synthetic

struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t num_subjects = 40;
  std::size_t samples_per_subject_class = 2;
  double subject_noise = 0.1;
  double pattern_noise = 0.05;
  std::size_t image_size = 96;
  std::uint64_t seed = 1;
  std::string subject_prefix = "S";

  void validate() const;
};

/// Class prototype k: a Gaussian-windowed grating with a class-specific
/// orientation and frequency, values in [0,1].
Tensor<float> synthetic_prototype(std::size_t k, const SyntheticSpec& spec);

/// Generates the dataset in memory (image of each sample plus its row).
/// Subjects get a persistent distortion scaled by subject_noise (pose,
/// contrast, brightness and a smooth additive field), samples add i.i.d.
/// pixel noise scaled by pattern_noise. Images are quantized to 8 bits.
Dataset synthesize(const SyntheticSpec& spec);

/// Fraction of samples whose nearest class prototype (L2) is their label.
double nearest_prototype_accuracy(const Dataset& data, const SyntheticSpec& spec);

struct SyntheticResult {
  std::filesystem::path manifest;
  std::size_t samples = 0;
  double calibration_accuracy = 0.0;
};

/// synthesize() written to out_dir/images/*.pgm plus out_dir/manifest.csv.
SyntheticResult gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace ensnet
