#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meshode/physics.hpp"

namespace meshode {

struct GenOptions {
  CaseConfig base;  // everything but Young's modulus
  std::size_t count = 0;
  double e_min = 0.0;
  double e_max = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir;
  std::string prefix = "traj";
  int max_retries = 3;
};

struct GenEntry {
  std::string file;  // relative to out_dir
  double youngs_modulus = 0.0;
  int retries = 0;
};

// Writes count trajectory files and manifest.csv (file,youngs_modulus) into
// out_dir. Trajectory i draws E uniformly from a generator seeded with
// seed + i; a divergent solve is retried with the next draw. Throws
// DivergenceError after max_retries failures.
std::vector<GenEntry> generate_dataset(const GenOptions& opts,
                                       const std::function<void(const std::string&)>& log = {});

// Sorted paths of the .msht files in a directory.
std::vector<std::string> list_trajectory_files(const std::string& dir);
std::vector<Trajectory> load_dataset(const std::string& dir);

// Worker count from MESHODE_THREADS (>= 1), or the fallback when unset.
int thread_cap(int fallback);

}  // namespace meshode
