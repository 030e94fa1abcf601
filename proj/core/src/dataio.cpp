#include "trailermatch/dataio.hpp"

#include "trailermatch/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

static_assert(std::endian::native == std::endian::little,
              "embedding blobs assume a little-endian host");

namespace trailermatch {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

Mat read_embedding_blob(const fs::path& path, Index rows, int dim) {
  const std::string bytes = read_file(path);
  const std::size_t expected = static_cast<std::size_t>(rows) * dim * sizeof(float);
  if (bytes.size() != expected)
    throw LoadError("blob " + path.string() + ": expected " + std::to_string(expected) +
                    " bytes, found " + std::to_string(bytes.size()));
  Mat out(rows, dim);
  const float* src = reinterpret_cast<const float*>(bytes.data());
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < dim; ++j)
      out(i, j) = static_cast<double>(src[i * dim + j]);
  if (!out.allFinite())
    throw LoadError("blob " + path.string() + ": non-finite value");
  return out;
}

void write_embedding_blob(const fs::path& path, const Mat& values) {
  std::string bytes(static_cast<std::size_t>(values.size()) * sizeof(float), '\0');
  float* dst = reinterpret_cast<float*>(bytes.data());
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j)
      dst[i * values.cols() + j] = static_cast<float>(values(i, j));
  atomic_write_file(path, bytes);
}

namespace {

constexpr const char* kManifestFormat = "trailermatch-manifest-v1";
constexpr const char* kFramesFormat = "trailermatch-frames-v1";
constexpr const char* kAlignmentFormat = "trailermatch-alignment-v1";
constexpr const char* kDurationsFormat = "trailermatch-durations-v1";

ordered_json parse_json_file(const fs::path& path, const char* expected_format) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": JSON parse error: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != expected_format)
    throw LoadError(path.string() + ": missing or wrong format tag, expected " +
                    std::string(expected_format));
  return doc;
}

Vec json_to_vec(const ordered_json& arr, const std::string& what) {
  if (!arr.is_array() || arr.empty())
    throw LoadError(what + ": expected a nonempty array");
  Vec v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw LoadError(what + ": expected numbers");
    v(static_cast<Index>(i)) = arr[i].get<double>();
  }
  return v;
}

ordered_json vec_to_json(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

std::vector<TrainPair> load_dataset(const fs::path& manifest_path) {
  const ordered_json doc = parse_json_file(manifest_path, kManifestFormat);
  if (!doc.contains("dim") || !doc["dim"].is_number_integer())
    throw LoadError(manifest_path.string() + ": missing integer field 'dim'");
  const int dim = doc["dim"].get<int>();
  if (dim < 1) throw LoadError(manifest_path.string() + ": dim must be >= 1");
  if (!doc.contains("pairs") || !doc["pairs"].is_array() || doc["pairs"].empty())
    throw LoadError(manifest_path.string() + ": missing nonempty 'pairs' array");

  const fs::path base = manifest_path.parent_path();
  std::vector<TrainPair> pairs;
  for (const auto& entry : doc["pairs"]) {
    TrainPair pair;
    pair.id = entry.value("id", "");
    if (pair.id.empty()) throw LoadError("pair with missing 'id'");
    const std::string where = "pair " + pair.id;
    try {
      const Index movie_shots = entry.at("movie_shots").get<Index>();
      const Index music_shots = entry.at("music_shots").get<Index>();
      if (movie_shots < 1 || music_shots < 1)
        throw LoadError(where + ": shot counts must be >= 1");

      const fs::path movie_blob = base / entry.at("movie_embeddings").get<std::string>();
      const fs::path music_blob = base / entry.at("music_embeddings").get<std::string>();
      if (!fs::exists(movie_blob))
        throw LoadError(where + ": missing movie embeddings blob " + movie_blob.string());
      if (!fs::exists(music_blob))
        throw LoadError(where + ": missing music embeddings blob " + music_blob.string());
      pair.movie = read_embedding_blob(movie_blob, movie_shots, dim);
      pair.music = read_embedding_blob(music_blob, music_shots, dim);

      pair.movie_durations = json_to_vec(entry.at("movie_durations"), where + ".movie_durations");
      pair.music_durations = json_to_vec(entry.at("music_durations"), where + ".music_durations");
      if (pair.movie_durations.size() != movie_shots)
        throw LoadError(where + ": movie_durations length mismatch");
      if (pair.music_durations.size() != music_shots)
        throw LoadError(where + ": music_durations length mismatch");

      const auto& align = entry.at("alignment");
      if (!align.is_array()) throw LoadError(where + ": alignment must be an array");
      std::set<Index> seen;
      for (const auto& ab : align) {
        if (!ab.is_array() || ab.size() != 2)
          throw LoadError(where + ": alignment entries must be [movie, music] pairs");
        const Index i = ab[0].get<Index>();
        const Index j = ab[1].get<Index>();
        if (i < 0 || i >= movie_shots)
          throw LoadError(where + ": alignment movie index " + std::to_string(i) +
                          " out of range");
        if (j < 0 || j >= music_shots)
          throw LoadError(where + ": alignment music index " + std::to_string(j) +
                          " out of range");
        if (!seen.insert(j).second)
          throw LoadError(where + ": duplicate music index " + std::to_string(j) +
                          " in alignment");
        pair.alignment.emplace_back(i, j);
      }
      if (static_cast<Index>(pair.alignment.size()) != music_shots)
        throw LoadError(where + ": alignment must cover every music shot exactly once");
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(where + ": " + e.what());
    }
    pair.validate();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_dataset(const fs::path& dir, const std::vector<TrainPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("write_dataset: no pairs");
  fs::create_directories(dir);
  const int dim = static_cast<int>(pairs.front().movie.cols());

  ordered_json doc;
  doc["format"] = kManifestFormat;
  doc["dim"] = dim;
  doc["pairs"] = ordered_json::array();
  for (const TrainPair& pair : pairs) {
    pair.validate();
    const fs::path pair_dir = dir / pair.id;
    fs::create_directories(pair_dir);
    write_embedding_blob(pair_dir / "movie.f32", pair.movie);
    write_embedding_blob(pair_dir / "music.f32", pair.music);

    ordered_json entry;
    entry["id"] = pair.id;
    entry["movie_embeddings"] = pair.id + "/movie.f32";
    entry["music_embeddings"] = pair.id + "/music.f32";
    entry["movie_shots"] = pair.movie.rows();
    entry["music_shots"] = pair.music.rows();
    entry["movie_durations"] = vec_to_json(pair.movie_durations);
    entry["music_durations"] = vec_to_json(pair.music_durations);
    ordered_json align = ordered_json::array();
    for (const auto& [i, j] : pair.alignment) align.push_back({i, j});
    entry["alignment"] = align;
    doc["pairs"].push_back(std::move(entry));
  }
  atomic_write_file(dir / "manifest.json", doc.dump(2) + "\n");
}

Index FrameSet::shot_of_frame(Index frame) const {
  Index at = 0;
  for (std::size_t s = 0; s < shot_sizes.size(); ++s) {
    at += shot_sizes[s];
    if (frame < at) return static_cast<Index>(s);
  }
  throw std::invalid_argument("frame index beyond shot boundaries");
}

void FrameSet::validate() const {
  if (frames.rows() < 1) throw std::invalid_argument("frame set is empty");
  if (!frames.allFinite()) throw std::invalid_argument("frame set has non-finite values");
  Index total = 0;
  for (Index s : shot_sizes) {
    if (s < 1) throw std::invalid_argument("shot sizes must be >= 1");
    total += s;
  }
  if (total != frames.rows())
    throw std::invalid_argument("shot sizes do not partition the frames");
}

std::vector<std::pair<Index, Index>> annotate_alignment(const FrameSet& movie,
                                                        const FrameSet& trailer) {
  movie.validate();
  trailer.validate();
  if (movie.frames.cols() != trailer.frames.cols())
    throw std::invalid_argument("annotate_alignment: frame dims differ");

  const Index n_movie_frames = movie.frames.rows();
  const Index top_k = std::min<Index>(4, n_movie_frames);

  std::vector<std::pair<Index, Index>> result;
  Index frame_at = 0;
  for (Index shot = 0; shot < trailer.shot_count(); ++shot) {
    std::map<Index, Index> votes;  // movie shot -> count
    for (Index f = 0; f < trailer.shot_sizes[static_cast<std::size_t>(shot)]; ++f) {
      const Index frame = frame_at + f;
      // exact nearest neighbors; ties resolved by the smaller frame index
      std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n_movie_frames));
      for (Index m = 0; m < n_movie_frames; ++m)
        dist[static_cast<std::size_t>(m)] = {
            (movie.frames.row(m) - trailer.frames.row(frame)).squaredNorm(), m};
      std::partial_sort(dist.begin(), dist.begin() + top_k, dist.end());
      for (Index k = 0; k < top_k; ++k)
        votes[movie.shot_of_frame(dist[static_cast<std::size_t>(k)].second)] += 1;
    }
    Index winner = -1, best = -1;
    for (const auto& [shot_id, count] : votes) {
      if (count > best) {  // map iterates in ascending key order, ties keep the smaller
        best = count;
        winner = shot_id;
      }
    }
    result.emplace_back(winner, shot);
    frame_at += trailer.shot_sizes[static_cast<std::size_t>(shot)];
  }
  return result;
}

SynthResult synth_gen(Index movie_shots, Index music_shots, int dim, double sigma,
                      std::uint64_t seed) {
  if (movie_shots < 1 || music_shots < 1 || dim < 1)
    throw std::invalid_argument("synth_gen: counts and dim must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("synth_gen: sigma must be >= 0");
  const Index candidates =
      static_cast<Index>(std::floor(0.9 * static_cast<double>(movie_shots)));
  if (music_shots > candidates)
    throw std::invalid_argument("synth_gen: music shots must be <= floor(0.9 * movie shots)");

  Rng rng(seed);
  SynthResult out;
  out.pair.id = "synth-" + std::to_string(seed);

  out.pair.movie = Mat(movie_shots, dim);
  for (Index i = 0; i < movie_shots; ++i) {
    for (Index j = 0; j < dim; ++j) out.pair.movie(i, j) = rng.normal();
    out.pair.movie.row(i).normalize();
  }

  out.planted = rng.sample_without_replacement(candidates, music_shots);

  out.pair.music = Mat(music_shots, dim);
  for (Index j = 0; j < music_shots; ++j) {
    out.pair.music.row(j) = out.pair.movie.row(out.planted[static_cast<std::size_t>(j)]);
    for (Index d = 0; d < dim; ++d) out.pair.music(j, d) += sigma * rng.normal();
    out.pair.music.row(j).normalize();
    out.pair.alignment.emplace_back(out.planted[static_cast<std::size_t>(j)], j);
  }

  out.pair.movie_durations = Vec(movie_shots);
  for (Index i = 0; i < movie_shots; ++i)
    out.pair.movie_durations(i) = rng.uniform(1.0, 6.0);
  out.pair.music_durations = Vec(music_shots);
  for (Index j = 0; j < music_shots; ++j)
    out.pair.music_durations(j) =
        out.pair.movie_durations(out.planted[static_cast<std::size_t>(j)]);

  out.pair.validate();
  return out;
}

FrameSet load_frameset(const fs::path& path) {
  const ordered_json doc = parse_json_file(path, kFramesFormat);
  FrameSet fs_out;
  const int dim = doc.at("dim").get<int>();
  std::vector<Index> sizes;
  Index total = 0;
  for (const auto& s : doc.at("shot_sizes")) {
    sizes.push_back(s.get<Index>());
    total += sizes.back();
  }
  fs_out.shot_sizes = std::move(sizes);
  const fs::path blob = path.parent_path() / doc.at("frames").get<std::string>();
  fs_out.frames = read_embedding_blob(blob, total, dim);
  fs_out.validate();
  return fs_out;
}

void save_frameset(const fs::path& path, const FrameSet& fs_in) {
  fs_in.validate();
  const fs::path blob_name = path.stem().string() + ".f32";
  write_embedding_blob(path.parent_path() / blob_name, fs_in.frames);
  ordered_json doc;
  doc["format"] = kFramesFormat;
  doc["dim"] = fs_in.frames.cols();
  doc["shot_sizes"] = fs_in.shot_sizes;
  doc["frames"] = blob_name.string();
  atomic_write_file(path, doc.dump(2) + "\n");
}

std::vector<std::pair<Index, Index>> load_alignment(const fs::path& path) {
  const ordered_json doc = parse_json_file(path, kAlignmentFormat);
  std::vector<std::pair<Index, Index>> pairs;
  for (const auto& ab : doc.at("pairs")) {
    if (!ab.is_array() || ab.size() != 2)
      throw LoadError(path.string() + ": alignment entries must be [movie, music]");
    pairs.emplace_back(ab[0].get<Index>(), ab[1].get<Index>());
  }
  return pairs;
}

void save_alignment(const fs::path& path,
                    const std::vector<std::pair<Index, Index>>& pairs) {
  ordered_json doc;
  doc["format"] = kAlignmentFormat;
  ordered_json arr = ordered_json::array();
  for (const auto& [i, j] : pairs) arr.push_back({i, j});
  doc["pairs"] = arr;
  atomic_write_file(path, doc.dump(2) + "\n");
}

ShotDurations load_durations(const fs::path& path) {
  const ordered_json doc = parse_json_file(path, kDurationsFormat);
  ShotDurations d;
  d.movie = json_to_vec(doc.at("movie"), path.string() + ".movie");
  d.music = json_to_vec(doc.at("music"), path.string() + ".music");
  d.validate();
  return d;
}

void save_durations(const fs::path& path, const ShotDurations& d) {
  d.validate();
  ordered_json doc;
  doc["format"] = kDurationsFormat;
  doc["movie"] = vec_to_json(d.movie);
  doc["music"] = vec_to_json(d.music);
  atomic_write_file(path, doc.dump(2) + "\n");
}

}  // namespace trailermatch
