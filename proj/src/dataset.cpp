#include "meshode/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "meshode/config.hpp"
#include "meshode/errors.hpp"
#include "meshode/io.hpp"

namespace meshode {

namespace fs = std::filesystem;

namespace {

CaseConfig with_modulus(CaseConfig cfg, double youngs) {
  std::visit([&](auto& c) { c.youngs_modulus = youngs; }, cfg);
  return cfg;
}

}  // namespace

std::vector<GenEntry> generate_dataset(const GenOptions& opts,
                                       const std::function<void(const std::string&)>& log) {
  if (opts.count == 0) throw ConfigError("gen: count must be > 0");
  if (!(opts.e_min > 0.0) || !(opts.e_max >= opts.e_min)) {
    throw ConfigError("gen: need 0 < e_min <= e_max");
  }
  std::visit([](const auto& c) { c.validate(); }, opts.base);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec || !fs::is_directory(opts.out_dir)) {
    throw ConfigError("gen: cannot create output directory '" + opts.out_dir + "'");
  }

  std::vector<GenEntry> entries(opts.count);
  std::vector<std::string> errors(opts.count);
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(msg);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < opts.count; i = next++) {
      std::mt19937_64 rng(opts.seed + i);
      std::uniform_real_distribution<double> draw(opts.e_min, opts.e_max);
      std::ostringstream name;
      name << opts.prefix << '_' << std::setw(4) << std::setfill('0') << i << ".msht";
      GenEntry& e = entries[i];
      e.file = name.str();
      for (int attempt = 0;; ++attempt) {
        e.youngs_modulus = draw(rng);
        try {
          const Trajectory t = generate_trajectory(with_modulus(opts.base, e.youngs_modulus));
          save_trajectory((fs::path(opts.out_dir) / e.file).string(), t);
          e.retries = attempt;
          say(e.file + ": E = " + format_double(e.youngs_modulus) +
              (attempt ? " after " + std::to_string(attempt) + " redraws" : ""));
          break;
        } catch (const DivergenceError& err) {
          say(e.file + ": solver diverged for E = " + format_double(e.youngs_modulus) + " (" +
              err.what() + ")");
          if (attempt >= opts.max_retries) {
            errors[i] = e.file + ": solver diverged " + std::to_string(attempt + 1) + " times";
            break;
          }
        } catch (const std::exception& err) {
          errors[i] = e.file + ": " + err.what();
          break;
        }
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(opts.count)));
  std::vector<std::thread> pool;
  for (int k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const std::string& err : errors) {
    if (!err.empty()) throw DivergenceError("gen: " + err, 0, 0.0);
  }

  std::ofstream manifest(fs::path(opts.out_dir) / "manifest.csv");
  manifest << "file,youngs_modulus\n";
  for (const GenEntry& e : entries) manifest << e.file << ',' << format_double(e.youngs_modulus) << '\n';
  if (!manifest) throw FormatError("gen: cannot write manifest in '" + opts.out_dir + "'");
  return entries;
}

std::vector<std::string> list_trajectory_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ConfigError("dataset directory '" + dir + "' not found");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".msht") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("dataset directory '" + dir + "' holds no .msht files");
  return files;
}

std::vector<Trajectory> load_dataset(const std::string& dir) {
  std::vector<Trajectory> out;
  for (const std::string& f : list_trajectory_files(dir)) out.push_back(load_trajectory(f));
  return out;
}

int thread_cap(int fallback) {
  const char* env = std::getenv("MESHODE_THREADS");
  if (env == nullptr || *env == '\0') return std::max(1, fallback);
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    throw ConfigError(std::string("MESHODE_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::min<long>(v, 1024));
}

}  // namespace meshode
