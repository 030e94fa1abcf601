#pragma once

#include "trailermatch/common.hpp"
#include "trailermatch/pipeline.hpp"
#include "trailermatch/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace trailermatch {

/// Dataset loading/validation failure; the message names the offending pair
/// and field.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raw row-major float32 little-endian values; rows*dim entries.
Mat read_embedding_blob(const std::filesystem::path& path, Index rows, int dim);
void write_embedding_blob(const std::filesystem::path& path, const Mat& values);

/// Parses and fully validates a dataset manifest (JSON, format tag
/// "trailermatch-manifest-v1"; see docs/formats.md). Blob paths are resolved
/// relative to the manifest's directory.
std::vector<TrainPair> load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus one blob directory per pair under dir.
void write_dataset(const std::filesystem::path& dir, const std::vector<TrainPair>& pairs);

/// Frame-level embeddings with shot boundaries. shot_sizes partitions the
/// frame rows into consecutive half-open intervals, one per shot.
struct FrameSet {
  Mat frames;
  std::vector<Index> shot_sizes;

  Index shot_count() const { return static_cast<Index>(shot_sizes.size()); }
  Index shot_of_frame(Index frame) const;
  void validate() const;
};

/// Alignment annotation from frame embeddings: each trailer frame votes for
/// the movie shots containing its 4 nearest movie frames; per trailer shot
/// the most frequent movie shot wins (ties to the smaller shot index).
/// Returns one (movie shot, trailer shot) pair per trailer shot.
std::vector<std::pair<Index, Index>> annotate_alignment(const FrameSet& movie,
                                                        const FrameSet& trailer);

struct SynthResult {
  TrainPair pair;
  std::vector<Index> planted;  // planted[j] = source movie shot of music shot j
};

/// Desk-scale synthetic instance: unit-normalized Gaussian movie rows, music
/// rows are noisy copies of J planted movie shots drawn from the first 90%
/// of the movie. Aligned shots share identical durations; the rest are
/// uniform in [1, 6] seconds.
SynthResult synth_gen(Index movie_shots, Index music_shots, int dim, double sigma,
                      std::uint64_t seed);

// FrameSet JSON container (format "trailermatch-frames-v1")
FrameSet load_frameset(const std::filesystem::path& path);
void save_frameset(const std::filesystem::path& path, const FrameSet& fs);

// alignment pair list (format "trailermatch-alignment-v1")
std::vector<std::pair<Index, Index>> load_alignment(const std::filesystem::path& path);
void save_alignment(const std::filesystem::path& path,
                    const std::vector<std::pair<Index, Index>>& pairs);

// durations file (format "trailermatch-durations-v1")
ShotDurations load_durations(const std::filesystem::path& path);
void save_durations(const std::filesystem::path& path, const ShotDurations& d);

}  // namespace trailermatch
