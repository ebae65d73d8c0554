#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cbfmeta/checkpoint.hpp"
#include "cbfmeta/config.hpp"

namespace cbfmeta {

/// CLI entry point: `<subcommand> [--config PATH] [--seed N] [--out DIR]
/// [--backend meta|gp] [--desk-scale] [--checkpoint PATH]`. Returns the exit
/// status; failures print an error JSON on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct NllRecord {
  int task = 0;
  int n_points = 0;  // surface points (anchor groups) used for adaptation
  Backend backend = Backend::Meta;
  double nll = 0.0;
  double seconds = 0.0;
};

/// Held-out tasks for NLL evaluation, with anchor groups in random order.
std::vector<SurfaceDataset> sample_eval_tasks(const PipelineConfig& cfg, int n_tasks);

/// Adapts each backend on the first n anchor groups of every task and scores
/// a fixed held-out slice of the remaining groups.
std::vector<NllRecord> evaluate_nll(const PipelineConfig& cfg, const ModelBundle* bundle,
                                    std::span<const Backend> backends);

/// `n_points,backend,mean_nll,band_lo,band_hi,n_tasks` (band = mean -/+ 3 sd).
std::string nll_curve_csv(std::span<const NllRecord> records);
/// `task,n_points,backend,nll`.
std::string nll_raw_csv(std::span<const NllRecord> records);
/// `n_points,backend,mean_seconds,std_seconds,repeats`.
std::string timing_csv(std::span<const NllRecord> records);
std::vector<NllRecord> parse_nll_raw_csv(const std::string& text);

/// Parsed episode CSV row subset used by `report`.
struct EpisodeCsvRow {
  double t = 0.0;
  double qx = 0.0;
  double qy = 0.0;
};
std::vector<EpisodeCsvRow> parse_episode_csv(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cbfmeta
