// Command-line front end: subcommands, run manifests, plots.
#ifndef RDSR_CLI_HPP
#define RDSR_CLI_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "rdsr/config.hpp"
#include "rdsr/image.hpp"

namespace rdsr::cli {

inline constexpr const char* kVersion = "0.3.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct RunManifest {
  std::string command;
  KeyValues config;
  std::vector<std::string> inputs;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string version = kVersion;
};

void write_run_manifest(const RunManifest& m, const std::filesystem::path& path);

/// Parses argv and dispatches; never throws.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// Line plot of the loss columns of a report.csv, log-scaled.
Image<float> plot_loss_trace(const std::filesystem::path& report_csv, int width = 640, int height = 360);

/// Diverging heatmap of a kernel, one `cell`-pixel square per tap.
Image<float> plot_kernel(const Kernel<double>& k, int cell = 16);

/// Writes loss_trace.png and kernels/iter_XXXX.png; returns the number of
/// kernel heatmaps written.
int render_report_plots(const std::filesystem::path& report_dir, const std::filesystem::path& out_dir);

}  // namespace rdsr::cli

#endif  // RDSR_CLI_HPP
