#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "schoolrun/synth.hpp"

namespace testing_support {

inline schoolrun::synth::SynthSpec small_spec(std::uint64_t seed = 3) {
  auto spec = schoolrun::synth::SynthSpec::defaults();
  spec.seed = seed;
  spec.n_schools = 80;
  spec.cell_cols = 10;
  spec.cell_rows = 9;
  spec.model1_observations = 20000;
  return spec;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("schoolrun-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
};

// Small synthetic inputs written once per test binary.
inline const std::filesystem::path& small_inputs() {
  static ScratchDir dir("inputs");
  static const bool written = [] {
    schoolrun::synth::write_inputs(schoolrun::synth::generate(small_spec()), dir.path);
    return true;
  }();
  (void)written;
  return dir.path;
}

}  // namespace testing_support
