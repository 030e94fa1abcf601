// End-to-end checks of the command-line tool. argv[1] is the binary path.

#include "trailermatch/checkpoint.hpp"
#include "trailermatch/dataio.hpp"
#include "trailermatch/io_util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace trailermatch;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::cout << "[ok] " << what << "\n";
  } else {
    std::cout << "[FAIL] " << what << "\n";
    ++failures;
  }
}

std::string cli;

int run(const std::string& args) {
  const std::string cmd = cli + " " + args + " 2>/dev/null";
  return std::system(cmd.c_str());
}

int exit_code(int status) {
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: test_cli <path-to-trailermatch-binary>\n";
    return 2;
  }
  cli = argv[1];

  const fs::path work = fs::temp_directory_path() / "tm_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);
  const auto p = [&](const std::string& name) { return (work / name).string(); };

  // --- usage errors ---
  check(exit_code(run("train --out " + p("x.ckpt"))) == 1, "missing --data exits 1");
  check(exit_code(run("definitely-not-a-subcommand")) == 1, "unknown subcommand exits 1");

  // --- synth determinism ---
  check(exit_code(run("synth --shots 12 --music 3 --dim 8 --noise 0.05 --seed 9 --pairs 2 --out " +
                      p("data_a"))) == 0,
        "synth exits 0");
  run("synth --shots 12 --music 3 --dim 8 --noise 0.05 --seed 9 --pairs 2 --out " + p("data_b"));
  check(read_file(work / "data_a" / "manifest.json") ==
            read_file(work / "data_b" / "manifest.json"),
        "synth manifests identical for the same seed");
  check(read_file(work / "data_a" / "pair0" / "movie.f32") ==
            read_file(work / "data_b" / "pair0" / "movie.f32"),
        "synth blobs identical for the same seed");

  // --- train with zero epochs reproduces the fresh initialization ---
  check(exit_code(run("train --data " + p("data_a/manifest.json") + " --out " + p("init.ckpt") +
                      " --epochs 0 --seed 33")) == 0,
        "train --epochs 0 exits 0");
  {
    const Checkpoint ckpt = load_checkpoint(work / "init.ckpt");
    const ModelParams fresh = init_params(8, 2, 33);
    bool equal = ckpt.params.tensors.size() == fresh.tensors.size();
    for (std::size_t i = 0; equal && i < fresh.tensors.size(); ++i)
      equal = (ckpt.params.tensors[i].second.array() ==
               fresh.tensors[i].second.array()).all();
    check(equal, "epoch-0 checkpoint equals the fresh initialization");
    check(fs::exists(work / "init.ckpt.history.txt"), "loss history written");
  }

  // --- short training run: finite and decreasing loss ---
  check(exit_code(run("train --data " + p("data_a/manifest.json") + " --out " + p("model.ckpt") +
                      " --epochs 40 --lr 1e-3 --seed 33 --batch 2")) == 0,
        "short training run exits 0");
  {
    const std::string history = read_file(work / "model.ckpt.history.txt");
    double first = 0.0, last = 0.0;
    int row = 0;
    std::istringstream lines(history);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      int epoch;
      double loss;
      ls >> epoch >> loss;
      if (row == 0) first = loss;
      last = loss;
      ++row;
    }
    check(row == 40, "history has one row per epoch");
    check(std::isfinite(first) && std::isfinite(last), "losses are finite");
    check(last < first, "loss decreased over the run");
  }

  // --- infer: determinism and schema ---
  const std::string infer_args = "infer --ckpt " + p("model.ckpt") + " --movie " +
                                 p("data_a/pair0/movie.f32") + " --music " +
                                 p("data_a/pair0/music.f32") + " --durations " +
                                 p("data_a/pair0/durations.json");
  check(exit_code(run(infer_args + " --out " + p("edl_a.json"))) == 0, "infer exits 0");
  run(infer_args + " --out " + p("edl_b.json"));
  check(read_file(work / "edl_a.json") == read_file(work / "edl_b.json"),
        "repeat inference produces identical output bytes");
  {
    const auto doc = nlohmann::ordered_json::parse(read_file(work / "edl_a.json"));
    check(doc.value("format", "") == "trailermatch-edl-v1", "EDL format tag present");
    check(doc.at("entries").size() == 3, "EDL has one entry per music shot");
  }

  // --- single-music-shot movie gives a one-entry EDL ---
  run("synth --shots 8 --music 1 --dim 8 --noise 0.01 --seed 4 --out " + p("tiny"));
  run("train --data " + p("tiny/manifest.json") + " --out " + p("tiny.ckpt") +
      " --epochs 0 --seed 1");
  check(exit_code(run("infer --ckpt " + p("tiny.ckpt") + " --movie " + p("tiny/pair0/movie.f32") +
                      " --music " + p("tiny/pair0/music.f32") + " --durations " +
                      p("tiny/pair0/durations.json") + " --out " + p("tiny_edl.json"))) == 0,
        "single-shot infer exits 0");
  {
    const auto doc = nlohmann::ordered_json::parse(read_file(work / "tiny_edl.json"));
    check(doc.at("entries").size() == 1, "toy EDL has exactly one entry");
  }

  // --- eval: perfect prediction scores 1.0 ---
  check(exit_code(run("eval --pred " + p("data_a/pair0/alignment.json") + " --truth " +
                      p("data_a/pair0/alignment.json") + " --out " + p("report.json"))) == 0,
        "eval exits 0");
  {
    const auto doc = nlohmann::ordered_json::parse(read_file(work / "report.json"));
    check(doc["k1"]["f1"].get<double>() == 1.0, "self-evaluation F1@1 is 1.0");
    check(doc["k5"]["precision"].get<double>() == 1.0, "self-evaluation P@5 is 1.0");
  }

  // --- eval EDL against the planted truth ---
  check(exit_code(run("eval --pred " + p("edl_a.json") + " --truth " +
                      p("data_a/pair0/alignment.json") + " --out " + p("report2.json"))) == 0,
        "eval of an EDL exits 0");

  // --- raw solver on the closed-form 2x2 fixture ---
  atomic_write_file(work / "cost.txt", "0 1\n1 0\n");
  atomic_write_file(work / "mu.txt", "0.5 0.5\n");
  atomic_write_file(work / "gamma.txt", "0.5 0.5\n");
  check(exit_code(run("sinkhorn --cost " + p("cost.txt") + " --mu " + p("mu.txt") +
                      " --gamma " + p("gamma.txt") + " --lambda 0.1 --out " + p("plan.txt"))) == 0,
        "sinkhorn exits 0");
  {
    const Mat plan = parse_matrix(read_file(work / "plan.txt"));
    const double diag = 1.0 / (2.0 * (1.0 + std::exp(-10.0)));
    check(std::abs(plan(0, 0) - diag) <= 1e-9 && std::abs(plan(1, 1) - diag) <= 1e-9,
          "solver output matches the closed form");
  }

  // --- annotate on a verbatim sub-clip fixture ---
  {
    Rng rng(3);
    FrameSet movie;
    movie.frames = Mat(12, 4);
    movie.shot_sizes = {4, 4, 4};
    for (Index s = 0; s < 3; ++s) {
      Vec center(4);
      for (Index d = 0; d < 4; ++d) center(d) = rng.normal();
      for (Index f = 0; f < 4; ++f)
        for (Index d = 0; d < 4; ++d)
          movie.frames(s * 4 + f, d) = center(d) + 0.05 * rng.normal();
    }
    save_frameset(work / "movie_frames.json", movie);

    FrameSet trailer;
    trailer.frames = movie.frames.middleRows(4, 4);
    trailer.shot_sizes = {4};
    save_frameset(work / "trailer_frames.json", trailer);
  }
  check(exit_code(run("annotate --movie-frames " + p("movie_frames.json") +
                      " --trailer-frames " + p("trailer_frames.json") + " --out " +
                      p("annot.json"))) == 0,
        "annotate exits 0");
  {
    const auto pairs = load_alignment(work / "annot.json");
    check(pairs.size() == 1 && pairs[0].first == 1, "annotation recovers the source shot");
  }

  // --- validation failures exit 2 ---
  atomic_write_file(work / "broken.json", "{\"format\": \"nope\"}\n");
  check(exit_code(run("train --data " + p("broken.json") + " --out " + p("z.ckpt"))) == 2,
        "invalid manifest exits 2");

  fs::remove_all(work);
  if (failures == 0) {
    std::cout << "test_cli: all checks passed\n";
    return 0;
  }
  std::cout << "test_cli: " << failures << " check(s) failed\n";
  return 1;
}
